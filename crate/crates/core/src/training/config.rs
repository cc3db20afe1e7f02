use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{AdversarialForm, LossWeights, TvVariant};
use crate::networks::{Adam, ArchConfig, ParamSet, FeatureExtractor, DEFAULT_PYRAMID_SEED, DEFAULT_PYRAMID_WIDTHS, DEFAULT_VGG19_TAPS};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    RandomPyramid,
    Vgg19,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub pyramid_widths: Vec<usize>,
    pub pyramid_seed: u64,
    pub vgg19_path: Option<PathBuf>,
    pub vgg19_taps: Vec<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::RandomPyramid,
            pyramid_widths: DEFAULT_PYRAMID_WIDTHS.to_vec(),
            pyramid_seed: DEFAULT_PYRAMID_SEED,
            vgg19_path: None,
            vgg19_taps: DEFAULT_VGG19_TAPS.to_vec(),
        }
    }
}

impl FeatureConfig {
    pub fn build(&self) -> Result<FeatureExtractor> {
        match self.kind {
            FeatureKind::RandomPyramid => {
                if self.pyramid_widths.is_empty() {
                    return Err(Error::Config("pyramid_widths must not be empty".into()));
                }
                Ok(FeatureExtractor::random_pyramid(&self.pyramid_widths, self.pyramid_seed))
            }
            FeatureKind::Vgg19 => {
                let path = self
                    .vgg19_path
                    .as_ref()
                    .ok_or_else(|| Error::Config("features.kind = vgg19 needs features.vgg19_path".into()))?;
                FeatureExtractor::vgg19(path, &self.vgg19_taps)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
        }
    }
}

impl AdamConfig {
    pub fn build(&self, params: &ParamSet) -> Adam {
        Adam::new(params, self.lr, (self.beta1, self.beta2))
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("{name}.lr must be positive, got {}", self.lr)));
        }
        for (b, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name}.{b} must lie in [0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// One optimizer setting per network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Optimizers {
    pub g1: AdamConfig,
    pub g2: AdamConfig,
    pub d1: AdamConfig,
    pub d2: AdamConfig,
}

impl Optimizers {
    pub fn all(c: AdamConfig) -> Self {
        Self {
            g1: c,
            g2: c,
            d1: c,
            d2: c,
        }
    }

    pub fn set_lr(&mut self, lr: f32) {
        for c in [&mut self.g1, &mut self.g2, &mut self.d1, &mut self.d2] {
            c.lr = lr;
        }
    }
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub seed: u64,
    pub n1: u64,
    pub n2: u64,
    pub n3: u64,
    pub batch_size: usize,
    pub optim: Optimizers,
    /// Periodic checkpoint interval in iterations; 0 keeps only stage
    /// boundaries and the final state.
    pub checkpoint_every: u64,
    pub adversarial: AdversarialForm,
    pub tv_variant: TvVariant,
    pub arch: ArchConfig,
    pub losses: LossWeights,
    pub features: FeatureConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n1: 2000,
            n2: 2000,
            n3: 1000,
            batch_size: 4,
            optim: Optimizers::default(),
            checkpoint_every: 500,
            adversarial: AdversarialForm::LeastSquares,
            tv_variant: TvVariant::Conventional,
            arch: ArchConfig::default(),
            losses: LossWeights::default(),
            features: FeatureConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn total_iterations(&self) -> u64 {
        self.n1 + self.n2 + self.n3
    }

    /// Stage (1, 2 or 3) that 0-based iteration `t` belongs to.
    pub fn stage_of(&self, t: u64) -> u8 {
        if t < self.n1 {
            1
        } else if t < self.n1 + self.n2 {
            2
        } else {
            3
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        let o = &self.optim;
        for (name, c) in [("g1", o.g1), ("g2", o.g2), ("d1", o.d1), ("d2", o.d2)] {
            c.validate(name)?;
        }
        let a = &self.arch;
        if a.gen_width == 0 || a.disc_width == 0 {
            return bad("network widths must be positive".into());
        }
        if !(2..=6).contains(&a.gen_levels) {
            return bad(format!("gen_levels {} outside 2..=6", a.gen_levels));
        }
        self.losses.validate()
    }
}
