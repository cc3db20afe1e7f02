use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Image, LabelMap};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
    Diamond,
    Ring,
    Cross,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 6] = [
        ShapeKind::Circle,
        ShapeKind::Square,
        ShapeKind::Triangle,
        ShapeKind::Diamond,
        ShapeKind::Ring,
        ShapeKind::Cross,
    ];

    /// Label of this kind; 0 is background.
    pub fn class(self) -> u8 {
        ShapeKind::ALL.iter().position(|&k| k == self).expect("listed kind") as u8 + 1
    }

    fn base_color(self) -> [f32; 3] {
        match self {
            ShapeKind::Circle => [0.85, 0.25, 0.2],
            ShapeKind::Square => [0.2, 0.75, 0.3],
            ShapeKind::Triangle => [0.25, 0.35, 0.9],
            ShapeKind::Diamond => [0.9, 0.8, 0.2],
            ShapeKind::Ring => [0.8, 0.3, 0.85],
            ShapeKind::Cross => [0.2, 0.8, 0.85],
        }
    }
}

/// One filled shape. `size` is the circumradius in pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ShapeKind,
    pub cx: f32,
    pub cy: f32,
    pub size: f32,
    pub angle: f32,
    pub color: [f32; 3],
}

impl Shape {
    /// Whether the point `(x, y)` in pixel coordinates lies inside.
    pub fn contains(&self, x: f32, y: f32) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.angle.sin_cos();
        let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
        let r = self.size;
        match self.kind {
            ShapeKind::Circle => dx * dx + dy * dy <= r * r,
            ShapeKind::Square => {
                let half = r * std::f32::consts::FRAC_1_SQRT_2;
                u.abs() <= half && v.abs() <= half
            }
            ShapeKind::Triangle => {
                let corner = |k: f32| {
                    let a = -std::f32::consts::FRAC_PI_2 + k * 2.0 * std::f32::consts::PI / 3.0;
                    (r * a.cos(), r * a.sin())
                };
                let (p0, p1, p2) = (corner(0.0), corner(1.0), corner(2.0));
                let side = |a: (f32, f32), b: (f32, f32)| (b.0 - a.0) * (v - a.1) - (b.1 - a.1) * (u - a.0);
                let (d0, d1, d2) = (side(p0, p1), side(p1, p2), side(p2, p0));
                (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0)
            }
            ShapeKind::Diamond => u.abs() + v.abs() <= r,
            ShapeKind::Ring => {
                let d2 = dx * dx + dy * dy;
                d2 <= r * r && d2 >= 0.25 * r * r
            }
            ShapeKind::Cross => {
                let arm = 0.3 * r;
                (u.abs() <= arm && v.abs() <= r) || (v.abs() <= arm && u.abs() <= r)
            }
        }
    }
}

/// Smooth two-colour gradient with a faint sinusoidal texture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub from: [f32; 3],
    pub to: [f32; 3],
    pub direction: f32,
    pub texture_freq: f32,
    pub texture_amp: f32,
    pub texture_phase: f32,
}

impl Background {
    fn color(&self, x: f32, y: f32, size: f32, c: usize) -> f32 {
        let (s, co) = self.direction.sin_cos();
        let t = ((co * (x / size - 0.5) + s * (y / size - 0.5)) + 0.71) / 1.42;
        let t = t.clamp(0.0, 1.0);
        let base = self.from[c] * (1.0 - t) + self.to[c] * t;
        let wave = (self.texture_freq * (x + 0.7 * y) / size * std::f32::consts::TAU + self.texture_phase).sin();
        base + self.texture_amp * wave
    }
}

/// Everything needed to render one sample; shapes are painted in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub size: usize,
    pub background: Background,
    pub shapes: Vec<Shape>,
}

impl Scene {
    pub fn render(&self, num_classes: usize) -> Result<(Image, LabelMap)> {
        let n = self.size;
        let mut rgb = vec![0.0f32; n * n * 3];
        let mut labels = vec![0u8; n * n];
        for y in 0..n {
            for x in 0..n {
                let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
                let p = y * n + x;
                let mut color = [0.0; 3];
                for (c, v) in color.iter_mut().enumerate() {
                    *v = self.background.color(px, py, n as f32, c);
                }
                for shape in &self.shapes {
                    if shape.contains(px, py) {
                        color = shape.color;
                        labels[p] = shape.kind.class();
                    }
                }
                rgb[p * 3..p * 3 + 3].copy_from_slice(&color);
            }
        }
        Ok((Image::from_clamped(n, n, rgb)?, LabelMap::new(n, n, num_classes, labels)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyDatasetConfig {
    /// Clean pairs in total; the last `val_samples + test_samples` go to
    /// those splits, the rest to training.
    pub n_samples: usize,
    pub val_samples: usize,
    pub test_samples: usize,
    pub image_size: usize,
    pub num_classes: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    pub seed: u64,
}

impl Default for ToyDatasetConfig {
    fn default() -> Self {
        Self {
            n_samples: 600,
            val_samples: 100,
            test_samples: 0,
            image_size: 64,
            num_classes: 4,
            min_shapes: 2,
            max_shapes: 4,
            seed: 0,
        }
    }
}

impl ToyDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_samples < 1 {
            return bad("n_samples must be at least 1".into());
        }
        if self.val_samples + self.test_samples >= self.n_samples {
            return bad(format!(
                "val_samples + test_samples ({}) leaves no training samples out of {}",
                self.val_samples + self.test_samples,
                self.n_samples
            ));
        }
        if self.image_size < 32 {
            return bad(format!("image_size {} below 32", self.image_size));
        }
        if self.num_classes < 2 || self.num_classes > 16 {
            return bad(format!("num_classes {} outside 2..=16", self.num_classes));
        }
        if self.num_classes > ShapeKind::ALL.len() + 1 {
            return bad(format!(
                "num_classes {} exceeds the {} shape kinds plus background",
                self.num_classes,
                ShapeKind::ALL.len()
            ));
        }
        if self.min_shapes < 1 || self.min_shapes > self.max_shapes {
            return bad(format!(
                "shape count range {}..={} is empty or zero",
                self.min_shapes, self.max_shapes
            ));
        }
        Ok(())
    }

    pub fn train_samples(&self) -> usize {
        self.n_samples - self.val_samples - self.test_samples
    }

    /// Split tag of clean sample `index`.
    pub fn split_of(&self, index: usize) -> Split {
        let train = self.train_samples();
        if index < train {
            Split::Train
        } else if index < train + self.val_samples {
            Split::Val
        } else {
            Split::Test
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, base: [f32; 3], amount: f32) -> [f32; 3] {
    base.map(|v| (v + rng.gen_range(-amount..=amount)).clamp(0.0, 1.0))
}

/// Scene for clean sample `index`; each index draws from its own stream.
pub fn generate_scene(cfg: &ToyDatasetConfig, index: usize) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let n = cfg.image_size as f32;
    let gray = |rng: &mut ChaCha8Rng| {
        let g = rng.gen_range(0.3..0.6f32);
        [g, g, g].map(|v: f32| v + rng.gen_range(-0.05..0.05f32))
    };
    let background = Background {
        from: gray(&mut rng),
        to: gray(&mut rng),
        direction: rng.gen_range(0.0..std::f32::consts::TAU),
        texture_freq: rng.gen_range(2.0..6.0),
        texture_amp: rng.gen_range(0.01..0.05),
        texture_phase: rng.gen_range(0.0..std::f32::consts::TAU),
    };
    let kinds = &ShapeKind::ALL[..cfg.num_classes - 1];
    let count = rng.gen_range(cfg.min_shapes..=cfg.max_shapes);
    let shapes = (0..count)
        .map(|_| {
            let kind = kinds[rng.gen_range(0..kinds.len())];
            let size = rng.gen_range(0.1 * n..0.2 * n);
            Shape {
                kind,
                cx: rng.gen_range(size * 0.6..n - size * 0.6),
                cy: rng.gen_range(size * 0.6..n - size * 0.6),
                size,
                angle: rng.gen_range(0.0..std::f32::consts::TAU),
                color: jitter(&mut rng, kind.base_color(), 0.12),
            }
        })
        .collect();
    Scene {
        size: cfg.image_size,
        background,
        shapes,
    }
}

/// Render the whole clean corpus, in index order.
pub fn generate_toy_dataset(cfg: &ToyDatasetConfig) -> Result<Vec<(Image, LabelMap)>> {
    cfg.validate()?;
    (0..cfg.n_samples)
        .map(|i| generate_scene(cfg, i).render(cfg.num_classes))
        .collect()
}
