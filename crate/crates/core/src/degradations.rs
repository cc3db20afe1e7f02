//! Seedable synthesis of adverse imaging conditions.
//!
//! Every operation is a pure function of its arguments: the same input,
//! parameters and seed always produce bit-identical output.

use std::fmt;
use std::io::Cursor;
use std::str::FromStr;

use image::codecs::jpeg::JpegEncoder;
use image::{ExtendedColorType, ImageFormat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::Image;
use crate::error::{Error, Result};

/// Blur standard deviations per severity level.
pub const BLUR_SIGMAS: [f64; 4] = [1.2, 2.5, 6.5, 15.2];
/// Additive noise variances per severity level.
pub const NOISE_VARIANCES: [f64; 4] = [0.05, 0.09, 0.13, 0.2];
/// JPEG quality factors per severity level.
pub const JPEG_QUALITIES: [u8; 4] = [43, 12, 7, 4];
/// Horizontal red-channel shifts per severity level.
pub const CA_SHIFTS_R: [usize; 4] = [2, 6, 10, 14];
/// Horizontal blue-channel shifts per severity level.
pub const CA_SHIFTS_B: [usize; 4] = [1, 3, 5, 7];
/// Scene weight of the reflection blend per severity level.
pub const REFLECTION_ALPHAS: [f64; 4] = [0.9, 0.8, 0.7, 0.6];
pub const REFLECTION_BLUR_SIGMA: f64 = 3.0;
pub const REFLECTION_ALPHA_JITTER: f64 = 0.05;

/// Identity of the pinned JPEG codec, recorded with every JPEG record.
pub const JPEG_CODEC: &str = "image-rs/image 0.25 baseline JpegEncoder";

pub const SEVERITY_LEVELS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    GaussianBlur,
    GaussianNoise,
    JpegCompression,
    ChromaticAberration,
    Reflection,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::GaussianBlur,
        Family::GaussianNoise,
        Family::JpegCompression,
        Family::ChromaticAberration,
        Family::Reflection,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Family::GaussianBlur => "gb",
            Family::GaussianNoise => "gn",
            Family::JpegCompression => "jpeg",
            Family::ChromaticAberration => "ca",
            Family::Reflection => "ref",
        }
    }

    /// Upper-case label used in metric tables (`GB`, `GN`, ...).
    pub fn label(self) -> String {
        self.short_name().to_uppercase()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        Family::ALL
            .into_iter()
            .find(|f| {
                f.short_name() == s
                    || serde_json::to_value(f).ok().and_then(|v| v.as_str().map(str::to_owned)) == Some(s.clone())
            })
            .ok_or_else(|| Error::InvalidArgument(format!("unknown degradation family `{s}`")))
    }
}

fn default_codec() -> String {
    JPEG_CODEC.to_owned()
}

/// Family-specific parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DegradationParams {
    GaussianBlur {
        sigma: f64,
    },
    GaussianNoise {
        variance: f64,
    },
    JpegCompression {
        quality: u8,
        #[serde(default = "default_codec")]
        codec: String,
    },
    ChromaticAberration {
        shift_r: usize,
        shift_b: usize,
    },
    Reflection {
        alpha: f64,
        blur_sigma: f64,
        alpha_jitter: f64,
    },
}

impl DegradationParams {
    pub fn family(&self) -> Family {
        match self {
            DegradationParams::GaussianBlur { .. } => Family::GaussianBlur,
            DegradationParams::GaussianNoise { .. } => Family::GaussianNoise,
            DegradationParams::JpegCompression { .. } => Family::JpegCompression,
            DegradationParams::ChromaticAberration { .. } => Family::ChromaticAberration,
            DegradationParams::Reflection { .. } => Family::Reflection,
        }
    }
}

/// A fully resolved degradation: family parameters, severity and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    #[serde(flatten)]
    pub params: DegradationParams,
    pub severity: u8,
    pub seed: u64,
}

impl DegradationSpec {
    /// Parameters looked up from the severity tables.
    pub fn at_severity(family: Family, severity: usize, seed: u64) -> Result<Self> {
        if severity >= SEVERITY_LEVELS {
            return Err(Error::InvalidArgument(format!(
                "severity {severity} outside 0..{SEVERITY_LEVELS}"
            )));
        }
        let params = match family {
            Family::GaussianBlur => DegradationParams::GaussianBlur {
                sigma: BLUR_SIGMAS[severity],
            },
            Family::GaussianNoise => DegradationParams::GaussianNoise {
                variance: NOISE_VARIANCES[severity],
            },
            Family::JpegCompression => DegradationParams::JpegCompression {
                quality: JPEG_QUALITIES[severity],
                codec: default_codec(),
            },
            Family::ChromaticAberration => DegradationParams::ChromaticAberration {
                shift_r: CA_SHIFTS_R[severity],
                shift_b: CA_SHIFTS_B[severity],
            },
            Family::Reflection => DegradationParams::Reflection {
                alpha: REFLECTION_ALPHAS[severity],
                blur_sigma: REFLECTION_BLUR_SIGMA,
                alpha_jitter: REFLECTION_ALPHA_JITTER,
            },
        };
        Ok(Self {
            params,
            severity: severity as u8,
            seed,
        })
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }

    /// Compact `family:severity` tag, e.g. `gb:1`.
    pub fn tag(&self) -> String {
        format!("{}:{}", self.family(), self.severity)
    }
}

/// Reflect (mirror, edge excluded) an index into `0..n`.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Normalized 1-D Gaussian taps for radius `ceil(3σ)`.
pub fn gaussian_kernel_1d(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Normalized 2-D Gaussian kernel (outer product of the 1-D taps).
pub fn gaussian_kernel_2d(sigma: f64) -> Vec<Vec<f64>> {
    let k = gaussian_kernel_1d(sigma);
    k.iter().map(|a| k.iter().map(|b| a * b).collect()).collect()
}

/// Convolve with a circularly symmetric Gaussian, reflect-padding borders.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("blur sigma must be positive, got {sigma}")));
    }
    let k = gaussian_kernel_1d(sigma);
    let r = (k.len() / 2) as isize;
    let (h, w) = (img.height(), img.width());
    // separable: rows then columns, accumulated in f64
    let mut tmp = vec![0.0f64; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    let xx = reflect(x as isize + t as isize - r, w);
                    acc += kv * img.get(y, xx, c) as f64;
                }
                tmp[(y * w + x) * 3 + c] = acc;
            }
        }
    }
    let mut out = vec![0.0f32; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    let yy = reflect(y as isize + t as isize - r, h);
                    acc += kv * tmp[(yy * w + x) * 3 + c];
                }
                out[(y * w + x) * 3 + c] = acc as f32;
            }
        }
    }
    Image::from_clamped(h, w, out)
}

/// The i.i.d. `N(0, variance)` field that [`gaussian_noise`] adds before clamping.
pub fn noise_field(len: usize, variance: f64, seed: u64) -> Result<Vec<f64>> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::InvalidArgument(format!("noise variance must be >= 0, got {variance}")));
    }
    let sd = variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..len)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        })
        .collect())
}

/// Add zero-mean Gaussian noise of the given variance, then clamp to `[0, 1]`.
pub fn gaussian_noise(img: &Image, variance: f64, seed: u64) -> Result<Image> {
    let noise = noise_field(img.data().len(), variance, seed)?;
    if variance == 0.0 {
        return Ok(img.clone());
    }
    let data = img
        .data()
        .iter()
        .zip(&noise)
        .map(|(&v, &n)| (v as f64 + n) as f32)
        .collect();
    Image::from_clamped(img.height(), img.width(), data)
}

/// Baseline JPEG encode/decode round trip at `quality` (1..=100).
pub fn jpeg_compress(img: &Image, quality: u8) -> Result<Image> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidArgument(format!("JPEG quality must lie in 1..=100, got {quality}")));
    }
    let rgb = img.to_rgb8();
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode(rgb.as_raw(), rgb.width(), rgb.height(), ExtendedColorType::Rgb8)
        .map_err(|e| Error::Format(format!("JPEG encode: {e}")))?;
    let decoded = image::load(Cursor::new(&buf), ImageFormat::Jpeg)
        .map_err(|e| Error::Format(format!("JPEG decode: {e}")))?
        .to_rgb8();
    Image::from_rgb8(&decoded)
}

/// Translate R right by `shift_r` and B right by `shift_b` pixels, keeping G.
/// Vacated columns replicate the left edge.
pub fn chromatic_aberration(img: &Image, shift_r: usize, shift_b: usize) -> Result<Image> {
    let w = img.width();
    if shift_r >= w || shift_b >= w {
        return Err(Error::InvalidArgument(format!(
            "channel shifts ({shift_r}, {shift_b}) must be below the width {w}"
        )));
    }
    let shifts = [shift_r, 0, shift_b];
    let mut data = Vec::with_capacity(img.data().len());
    for y in 0..img.height() {
        for x in 0..w {
            for (c, &s) in shifts.iter().enumerate() {
                data.push(img.get(y, x.saturating_sub(s), c));
            }
        }
    }
    Image::new(img.height(), w, data)
}

/// `alpha·scene + (1−alpha)·blur(reflection, blur_sigma)`, clamped.
///
/// A `blur_sigma` of zero blends the reflection layer unblurred.
pub fn reflection_composite(scene: &Image, reflection: &Image, alpha: f64, blur_sigma: f64) -> Result<Image> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if !scene.same_size(reflection) {
        return Err(Error::ShapeMismatch(format!(
            "scene {}x{} vs reflection {}x{}",
            scene.height(),
            scene.width(),
            reflection.height(),
            reflection.width()
        )));
    }
    let layer = if blur_sigma > 0.0 {
        gaussian_blur(reflection, blur_sigma)?
    } else if blur_sigma == 0.0 {
        reflection.clone()
    } else {
        return Err(Error::InvalidArgument(format!("blur sigma must be >= 0, got {blur_sigma}")));
    };
    let data = scene
        .data()
        .iter()
        .zip(layer.data())
        .map(|(&s, &r)| (alpha * s as f64 + (1.0 - alpha) * r as f64) as f32)
        .collect();
    Image::from_clamped(scene.height(), scene.width(), data)
}

/// Blend weight actually used for a reflection spec after seeded jitter.
pub fn resolved_reflection_alpha(alpha: f64, jitter: f64, seed: u64) -> f64 {
    if jitter <= 0.0 {
        return alpha.clamp(0.0, 1.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.gen_range(-1.0..=1.0);
    (alpha + jitter * u).clamp(0.0, 1.0)
}

/// Apply `spec` to `img`. The reflection family needs the reflection layer in `aux`.
pub fn apply(spec: &DegradationSpec, img: &Image, aux: Option<&Image>) -> Result<Image> {
    match &spec.params {
        DegradationParams::GaussianBlur { sigma } => gaussian_blur(img, *sigma),
        DegradationParams::GaussianNoise { variance } => gaussian_noise(img, *variance, spec.seed),
        DegradationParams::JpegCompression { quality, .. } => jpeg_compress(img, *quality),
        DegradationParams::ChromaticAberration { shift_r, shift_b } => chromatic_aberration(img, *shift_r, *shift_b),
        DegradationParams::Reflection {
            alpha,
            blur_sigma,
            alpha_jitter,
        } => {
            let layer = aux.ok_or_else(|| {
                Error::InvalidArgument("reflection degradation needs a reflection layer image".into())
            })?;
            let a = resolved_reflection_alpha(*alpha, *alpha_jitter, spec.seed);
            reflection_composite(img, layer, a, *blur_sigma)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(h, w, (0..h * w * 3).map(|_| rng.gen::<f32>()).collect()).unwrap()
    }

    fn psnr(a: &Image, b: &Image) -> f64 {
        let mse: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
            .sum::<f64>()
            / a.data().len() as f64;
        -10.0 * mse.log10()
    }

    #[test]
    fn severity_tables_are_exact() {
        assert_eq!(BLUR_SIGMAS, [1.2, 2.5, 6.5, 15.2]);
        assert_eq!(NOISE_VARIANCES, [0.05, 0.09, 0.13, 0.2]);
        assert_eq!(JPEG_QUALITIES, [43, 12, 7, 4]);
        assert_eq!(CA_SHIFTS_R, [2, 6, 10, 14]);
        assert_eq!(CA_SHIFTS_B, [1, 3, 5, 7]);
        for s in 0..4 {
            let spec = DegradationSpec::at_severity(Family::GaussianBlur, s, 0).unwrap();
            assert_eq!(spec.params, DegradationParams::GaussianBlur { sigma: BLUR_SIGMAS[s] });
        }
        assert!(DegradationSpec::at_severity(Family::GaussianBlur, 4, 0).is_err());
    }

    #[test]
    fn kernels_sum_to_one() {
        for s in BLUR_SIGMAS {
            let k2 = gaussian_kernel_2d(s);
            let total: f64 = k2.iter().flatten().sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert_eq!(gaussian_kernel_1d(s).len(), 2 * (3.0 * s).ceil() as usize + 1);
        }
    }

    #[test]
    fn blur_preserves_constant_image() {
        let img = Image::filled(16, 16, 0.5).unwrap();
        let out = gaussian_blur(&img, 2.5).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.5).abs() < 1e-6));
        // radius larger than the image exercises repeated reflection
        let out = gaussian_blur(&img, 15.2).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn blur_of_impulse_matches_direct_2d_convolution() {
        let n = 33;
        let img = Image::from_fn(n, n, |h, w, _| if h == 16 && w == 16 { 1.0 } else { 0.0 }).unwrap();
        let out = gaussian_blur(&img, 1.2).unwrap();
        let k = gaussian_kernel_2d(1.2);
        let r = (k.len() / 2) as isize;
        for y in 0..n {
            for x in 0..n {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let yy = reflect(y as isize + dy, n);
                        let xx = reflect(x as isize + dx, n);
                        acc += k[(dy + r) as usize][(dx + r) as usize] * img.get(yy, xx, 0) as f64;
                    }
                }
                assert!((out.get(y, x, 0) as f64 - acc).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn blur_rejects_nonpositive_sigma() {
        let img = Image::filled(8, 8, 0.5).unwrap();
        assert!(matches!(gaussian_blur(&img, 0.0), Err(Error::InvalidArgument(_))));
        assert!(gaussian_blur(&img, -1.0).is_err());
    }

    #[test]
    fn reflect_index_folds() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(-9, 5), 1);
        assert_eq!(reflect(12, 5), 4);
        assert_eq!(reflect(3, 1), 0);
    }

    #[test]
    fn zero_variance_noise_is_identity() {
        let img = random_image(8, 8, 1);
        assert_eq!(gaussian_noise(&img, 0.0, 5).unwrap(), img);
        assert!(gaussian_noise(&img, -0.1, 5).is_err());
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let img = random_image(16, 16, 1);
        assert_eq!(gaussian_noise(&img, 0.09, 3).unwrap(), gaussian_noise(&img, 0.09, 3).unwrap());
        assert_ne!(gaussian_noise(&img, 0.09, 3).unwrap(), gaussian_noise(&img, 0.09, 4).unwrap());
    }

    #[test]
    fn jpeg_quality_is_monotone_and_deterministic() {
        let img = Image::from_fn(32, 32, |h, w, c| {
            (0.5 + 0.4 * ((h as f32 * 0.4 + c as f32).sin() * (w as f32 * 0.3).cos())).clamp(0.0, 1.0)
        })
        .unwrap();
        let hi = jpeg_compress(&img, 43).unwrap();
        let lo = jpeg_compress(&img, 4).unwrap();
        assert!(psnr(&hi, &img) > psnr(&lo, &img));
        assert_eq!(jpeg_compress(&img, 12).unwrap(), jpeg_compress(&img, 12).unwrap());
        assert!(jpeg_compress(&img, 0).is_err());
        assert!(jpeg_compress(&img, 101).is_err());
    }

    #[test]
    fn chromatic_aberration_shifts_red_and_blue() {
        let img = random_image(8, 8, 2);
        assert_eq!(chromatic_aberration(&img, 0, 0).unwrap(), img);
        let out = chromatic_aberration(&img, 2, 1).unwrap();
        for h in 0..8 {
            for w in 0..8 {
                let wr = if w >= 2 { w - 2 } else { 0 };
                let wb = if w >= 1 { w - 1 } else { 0 };
                assert_eq!(out.get(h, w, 0), img.get(h, wr, 0));
                assert_eq!(out.get(h, w, 1), img.get(h, w, 1));
                assert_eq!(out.get(h, w, 2), img.get(h, wb, 2));
            }
        }
        assert!(chromatic_aberration(&img, 8, 0).is_err());
    }

    #[test]
    fn reflection_boundaries_and_formula() {
        let scene = random_image(32, 32, 3);
        let refl = random_image(32, 32, 4);
        assert_eq!(reflection_composite(&scene, &refl, 1.0, 3.0).unwrap(), scene);
        assert_eq!(reflection_composite(&scene, &refl, 0.0, 0.0).unwrap(), refl);
        let out = reflection_composite(&scene, &refl, 0.8, 3.0).unwrap();
        let blurred = gaussian_blur(&refl, 3.0).unwrap();
        for (i, &o) in out.data().iter().enumerate() {
            let expect = 0.8 * scene.data()[i] as f64 + 0.2 * blurred.data()[i] as f64;
            assert!((o as f64 - expect).abs() < 1e-6);
        }
        assert!(reflection_composite(&scene, &refl, 1.2, 3.0).is_err());
    }

    #[test]
    fn apply_dispatches_with_table_parameters() {
        let img = random_image(16, 16, 5);
        let spec = DegradationSpec::at_severity(Family::GaussianBlur, 0, 9).unwrap();
        assert_eq!(apply(&spec, &img, None).unwrap(), gaussian_blur(&img, 1.2).unwrap());
        let spec = DegradationSpec::at_severity(Family::GaussianNoise, 3, 9).unwrap();
        assert_eq!(apply(&spec, &img, None).unwrap(), gaussian_noise(&img, 0.2, 9).unwrap());
        let spec = DegradationSpec::at_severity(Family::Reflection, 1, 9).unwrap();
        assert!(matches!(apply(&spec, &img, None), Err(Error::InvalidArgument(_))));
        let layer = random_image(16, 16, 6);
        assert_eq!(apply(&spec, &img, Some(&layer)).unwrap(), apply(&spec, &img, Some(&layer)).unwrap());
    }

    #[test]
    fn spec_serializes_family_params_severity_and_seed() {
        let spec = DegradationSpec::at_severity(Family::ChromaticAberration, 2, 77).unwrap();
        let json = serde_json::to_value(&spec).unwrap();
        assert_eq!(json["family"], "chromatic_aberration");
        assert_eq!(json["shift_r"], 10);
        assert_eq!(json["shift_b"], 5);
        assert_eq!(json["severity"], 2);
        assert_eq!(json["seed"], 77);
        let back: DegradationSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, spec);
        assert_eq!("gn".parse::<Family>().unwrap(), Family::GaussianNoise);
        assert_eq!("jpeg_compression".parse::<Family>().unwrap(), Family::JpegCompression);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn blur_commutes_with_constant_offset(seed in any::<u64>(), c in 0.0f32..0.3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = Image::new(12, 12, (0..432).map(|_| rng.gen_range(0.0..0.7f32)).collect()).unwrap();
            let shifted = Image::new(12, 12, base.data().iter().map(|v| v + c).collect()).unwrap();
            let a = gaussian_blur(&shifted, 2.5).unwrap();
            let b = gaussian_blur(&base, 2.5).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - (y + c)).abs() < 1e-6);
            }
        }

        #[test]
        fn every_family_stays_in_range_and_is_deterministic(seed in any::<u64>(), sev in 0usize..4, fam in 0usize..5) {
            let img = random_image(16, 16, seed);
            let layer = random_image(16, 16, seed ^ 1);
            let spec = DegradationSpec::at_severity(Family::ALL[fam], sev, seed).unwrap();
            let a = apply(&spec, &img, Some(&layer)).unwrap();
            let b = apply(&spec, &img, Some(&layer)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
