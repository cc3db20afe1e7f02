//! Shared pixel and label types.
//!
//! Images are stored interleaved (`H×W×3`) in `[0, 1]`; label maps hold one
//! class id per pixel; soft label maps hold `K` probabilities per pixel.
//! On disk, images are 8-bit RGB and label maps are 8-bit grayscale whose
//! pixel value is the class index.

use std::path::Path;

use image::{GrayImage, RgbImage};

use crate::autograd::Tensor;
use crate::degradations::DegradationSpec;
use crate::error::{Error, Result};

/// Smallest accepted side length.
pub const MIN_SIDE: usize = 8;

fn check_size(height: usize, width: usize) -> Result<()> {
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::ShapeMismatch(format!(
            "{height}x{width} is below the {MIN_SIDE}x{MIN_SIDE} minimum"
        )));
    }
    Ok(())
}

/// RGB image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_size(height, width)?;
        if data.len() != height * width * 3 {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width}x3 image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfRange(format!(
                "pixel value {} at ({}, {}, {}) outside [0, 1]",
                data[i],
                i / (3 * width),
                (i / 3) % width,
                i % 3
            )));
        }
        Ok(Self { height, width, data })
    }

    /// Build from arbitrary reals, clamping to `[0, 1]` (NaN maps to 0).
    pub fn from_clamped(height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(height, width, data)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width * 3])
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 3);
        for h in 0..height {
            for w in 0..width {
                for c in 0..3 {
                    data.push(f(h, w, c));
                }
            }
        }
        Self::from_clamped(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize, c: usize) -> f32 {
        self.data[(h * self.width + w) * 3 + c]
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Channel-planar `[3, H, W]` copy.
    pub fn to_chw(&self) -> Tensor<f32> {
        let hw = self.height * self.width;
        let mut out = vec![0.0; 3 * hw];
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * hw + p] = px[c];
            }
        }
        Tensor::new([3, self.height, self.width], out)
    }

    /// Inverse of [`Image::to_chw`] for one planar sample, clamping to `[0, 1]`.
    pub fn from_chw(height: usize, width: usize, planes: &[f32]) -> Result<Self> {
        let hw = height * width;
        if planes.len() != 3 * hw {
            return Err(Error::ShapeMismatch(format!(
                "{} planar values for a {height}x{width}x3 image",
                planes.len()
            )));
        }
        let mut data = vec![0.0; 3 * hw];
        for p in 0..hw {
            for c in 0..3 {
                data[p * 3 + c] = planes[c * hw + p];
            }
        }
        Self::from_clamped(height, width, data)
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let bytes = self.data.iter().map(|&v| quantize(v)).collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, bytes).expect("buffer sized by construction")
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        let data = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        Self::new(img.height() as usize, img.width() as usize, data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Codec {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_rgb8(&img.to_rgb8())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        self.to_rgb8().save(path).map_err(|source| Error::Codec {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Map a `[0, 1]` value to the nearest 8-bit level.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    Ok(())
}

/// Hard segmentation: one class id in `0..num_classes` per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    num_classes: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, num_classes: usize, data: Vec<u8>) -> Result<Self> {
        if num_classes == 0 || num_classes > 255 {
            return Err(Error::InvalidArgument(format!(
                "class count {num_classes} must lie in 1..=255"
            )));
        }
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a {height}x{width} map",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|&v| v as usize >= num_classes) {
            return Err(Error::OutOfRange(format!(
                "label {} at pixel ({}, {}) is not below K={num_classes}",
                data[i],
                i / width,
                i % width
            )));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, num_classes: usize, class: u8) -> Result<Self> {
        Self::new(height, width, num_classes, vec![class; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize) -> u8 {
        self.data[h * self.width + w]
    }

    /// Labels widened to `usize`, row-major.
    pub fn indices(&self) -> Vec<usize> {
        self.data.iter().map(|&v| v as usize).collect()
    }

    pub fn to_gray8(&self) -> GrayImage {
        GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone()).expect("buffer sized by construction")
    }

    pub fn load(path: &Path, num_classes: usize) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Codec {
            path: path.to_path_buf(),
            source,
        })?;
        let g = img.to_luma8();
        Self::new(g.height() as usize, g.width() as usize, num_classes, g.into_raw())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        self.to_gray8().save(path).map_err(|source| Error::Codec {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Per-pixel class probabilities, stored `H×W×K`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftLabelMap {
    height: usize,
    width: usize,
    num_classes: usize,
    data: Vec<f32>,
}

/// Allowed deviation of a pixel's probability sum from one.
pub const SIMPLEX_TOLERANCE: f32 = 1e-5;

impl SoftLabelMap {
    pub fn new(height: usize, width: usize, num_classes: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * num_classes {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width}x{num_classes} soft map",
                data.len()
            )));
        }
        for (p, px) in data.chunks_exact(num_classes).enumerate() {
            let sum: f32 = px.iter().sum();
            if px.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::OutOfRange(format!(
                    "pixel ({}, {}) is not a probability vector (sum {sum})",
                    p / width,
                    p % width
                )));
            }
        }
        Ok(Self {
            height,
            width,
            num_classes,
            data,
        })
    }

    /// Build from one planar `[K, H, W]` sample (e.g. a softmax output).
    pub fn from_chw(height: usize, width: usize, num_classes: usize, planes: &[f32]) -> Result<Self> {
        let hw = height * width;
        if planes.len() != num_classes * hw {
            return Err(Error::ShapeMismatch(format!(
                "{} planar values for {num_classes} classes at {height}x{width}",
                planes.len()
            )));
        }
        let mut data = vec![0.0; planes.len()];
        for p in 0..hw {
            for c in 0..num_classes {
                data[p * num_classes + c] = planes[c * hw + p];
            }
        }
        Self::new(height, width, num_classes, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize, c: usize) -> f32 {
        self.data[(h * self.width + w) * self.num_classes + c]
    }

    /// Channel-planar `[K, H, W]` copy.
    pub fn to_chw(&self) -> Tensor<f32> {
        let hw = self.height * self.width;
        let k = self.num_classes;
        let mut out = vec![0.0; k * hw];
        for (p, px) in self.data.chunks_exact(k).enumerate() {
            for c in 0..k {
                out[c * hw + p] = px[c];
            }
        }
        Tensor::new([k, self.height, self.width], out)
    }
}

/// Exact one-hot encoding of a label map into `k` channels.
pub fn encode_labels(labels: &LabelMap, k: usize) -> Result<SoftLabelMap> {
    let mut data = vec![0.0; labels.data.len() * k];
    for (p, &l) in labels.data.iter().enumerate() {
        if l as usize >= k {
            return Err(Error::OutOfRange(format!(
                "label {l} at pixel ({}, {}) is not below K={k}",
                p / labels.width,
                p % labels.width
            )));
        }
        data[p * k + l as usize] = 1.0;
    }
    Ok(SoftLabelMap {
        height: labels.height,
        width: labels.width,
        num_classes: k,
        data,
    })
}

/// Per-pixel argmax; ties resolve to the lowest class index.
pub fn decode_labels(soft: &SoftLabelMap) -> LabelMap {
    let data = soft.data.chunks_exact(soft.num_classes).map(argmax).collect();
    LabelMap {
        height: soft.height,
        width: soft.width,
        num_classes: soft.num_classes,
        data,
    }
}

/// Argmax over the channel axis of one planar `[K, H, W]` sample.
pub fn argmax_planes(height: usize, width: usize, num_classes: usize, planes: &[f32]) -> Result<LabelMap> {
    let hw = height * width;
    let mut data = vec![0u8; hw];
    for (p, d) in data.iter_mut().enumerate() {
        let mut best = 0;
        for c in 1..num_classes {
            if planes[c * hw + p] > planes[best * hw + p] {
                best = c;
            }
        }
        *d = best as u8;
    }
    LabelMap::new(height, width, num_classes, data)
}

fn argmax(px: &[f32]) -> u8 {
    let mut best = 0;
    for (c, &v) in px.iter().enumerate().skip(1) {
        if v > px[best] {
            best = c;
        }
    }
    best as u8
}

/// One training record: degraded image, its segmentation, and ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadrupleSample {
    pub degraded: Image,
    pub degraded_seg: LabelMap,
    pub gt_image: Image,
    pub gt_seg: LabelMap,
    pub degradation: DegradationSpec,
}

/// Check the cross-field invariants of a sample, returning it unchanged.
pub fn validate_sample(s: QuadrupleSample) -> Result<QuadrupleSample> {
    let (h, w) = (s.gt_image.height, s.gt_image.width);
    let dims = [
        ("degraded", s.degraded.height, s.degraded.width),
        ("degraded_seg", s.degraded_seg.height, s.degraded_seg.width),
        ("gt_seg", s.gt_seg.height, s.gt_seg.width),
    ];
    for (name, dh, dw) in dims {
        if (dh, dw) != (h, w) {
            return Err(Error::ShapeMismatch(format!(
                "{name} is {dh}x{dw} but gt_image is {h}x{w}"
            )));
        }
    }
    if s.degraded_seg.num_classes != s.gt_seg.num_classes {
        return Err(Error::ClassMismatch(format!(
            "degraded_seg has K={} but gt_seg has K={}",
            s.degraded_seg.num_classes, s.gt_seg.num_classes
        )));
    }
    for (name, map) in [("degraded_seg", &s.degraded_seg), ("gt_seg", &s.gt_seg)] {
        if let Some(i) = map.data.iter().position(|&v| v as usize >= map.num_classes) {
            return Err(Error::OutOfRange(format!(
                "{name} label {} at pixel ({}, {}) is not below K={}",
                map.data[i],
                i / map.width,
                i % map.width,
                map.num_classes
            )));
        }
    }
    for (name, img) in [("degraded", &s.degraded), ("gt_image", &s.gt_image)] {
        if img.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfRange(format!("{name} has values outside [0, 1]")));
        }
    }
    Ok(s)
}

/// Unchecked constructors for values built by trusted code paths (and tests
/// that need deliberately invalid samples).
impl LabelMap {
    #[doc(hidden)]
    pub fn from_raw_unchecked(height: usize, width: usize, num_classes: usize, data: Vec<u8>) -> Self {
        Self {
            height,
            width,
            num_classes,
            data,
        }
    }
}
