//! Generators, discriminators and the frozen feature extractor.

mod discriminator;
mod features;
mod optim;
mod params;
mod unet;

pub use discriminator::{spectral_norm_estimate, DiscConfig, DiscWeights, PatchDiscriminator, DISC_BLOCKS};
pub use features::{FeatureExtractor, DEFAULT_PYRAMID_SEED, DEFAULT_PYRAMID_WIDTHS, DEFAULT_VGG19_TAPS};
pub use optim::{Adam, ADAM_EPS, DEFAULT_BETAS, DEFAULT_LR};
pub use params::{he_normal, unit_vector, Bound, ParamSet};
pub use unet::{Head, UNet, UNetConfig, LEAKY_SLOPE};

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Scalar, Tensor, Var};
use crate::domain::{encode_labels, Image, LabelMap, SoftLabelMap};
use crate::error::{Error, Result};

/// Sizes shared by every network of one model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub gen_width: usize,
    pub gen_levels: usize,
    pub disc_width: usize,
    pub d2_spectral_norm: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            gen_width: 8,
            gen_levels: 4,
            disc_width: 8,
            d2_spectral_norm: false,
        }
    }
}

/// G1: `{S_d, I_d} → S_r`, softmax over `K` classes.
#[derive(Clone, Debug)]
pub struct RefinementNet {
    pub net: UNet,
}

impl RefinementNet {
    pub fn new(num_classes: usize, arch: &ArchConfig, seed: u64) -> Self {
        Self {
            net: UNet::new(
                UNetConfig {
                    in_channels: num_classes + 3,
                    out_channels: num_classes,
                    base_width: arch.gen_width,
                    levels: arch.gen_levels,
                    head: Head::Softmax,
                },
                seed,
            ),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.net.config().out_channels
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, s_d: Var, i_d: Var) -> Var {
        let x = g.concat(&[s_d, i_d]);
        self.net.forward(g, p, x)
    }
}

/// G2: `{S, I_d} → I_r`, sigmoid RGB output.
#[derive(Clone, Debug)]
pub struct RestorationNet {
    pub net: UNet,
}

impl RestorationNet {
    pub fn new(num_classes: usize, arch: &ArchConfig, seed: u64) -> Self {
        Self {
            net: UNet::new(
                UNetConfig {
                    in_channels: num_classes + 3,
                    out_channels: 3,
                    base_width: arch.gen_width,
                    levels: arch.gen_levels,
                    head: Head::Sigmoid,
                },
                seed,
            ),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.net.config().in_channels - 3
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, seg: Var, i_d: Var) -> Var {
        let x = g.concat(&[seg, i_d]);
        self.net.forward(g, p, x)
    }
}

/// D1: scores `{S, I_d}` pairs, spectrally normalized.
pub type SegDiscriminator = PatchDiscriminator;
/// D2: scores RGB images.
pub type ImgDiscriminator = PatchDiscriminator;

pub fn seg_discriminator(num_classes: usize, arch: &ArchConfig, seed: u64) -> SegDiscriminator {
    PatchDiscriminator::new(
        DiscConfig {
            in_channels: num_classes + 3,
            base_width: arch.disc_width,
            spectral_norm: true,
        },
        seed,
    )
}

pub fn img_discriminator(arch: &ArchConfig, seed: u64) -> ImgDiscriminator {
    PatchDiscriminator::new(
        DiscConfig {
            in_channels: 3,
            base_width: arch.disc_width,
            spectral_norm: arch.d2_spectral_norm,
        },
        seed,
    )
}

/// Clean-image segmenter used to produce `S_d` offline.
#[derive(Clone, Debug)]
pub struct Segmenter {
    pub net: UNet,
}

impl Segmenter {
    pub fn new(num_classes: usize, width: usize, levels: usize, seed: u64) -> Self {
        Self {
            net: UNet::new(
                UNetConfig {
                    in_channels: 3,
                    out_channels: num_classes,
                    base_width: width,
                    levels,
                    head: Head::Softmax,
                },
                seed,
            ),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.net.config().out_channels
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, img: Var) -> Var {
        self.net.forward(g, p, img)
    }

    /// Hard prediction for one image.
    pub fn segment(&self, img: &Image) -> Result<LabelMap> {
        check_side(img.height(), img.width(), self.net.config())?;
        let mut g = Graph::<f32>::new();
        let p = self.net.params().bind(&mut g, false);
        let x = g.constant(images_to_tensor(&[img])?);
        let probs = self.forward(&mut g, &p, x);
        crate::domain::argmax_planes(img.height(), img.width(), self.num_classes(), g.value(probs).data())
    }
}

fn check_side(h: usize, w: usize, cfg: &UNetConfig) -> Result<()> {
    let m = cfg.stride_multiple();
    if h % m != 0 || w % m != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{h}x{w} input is not a multiple of {m}"
        )));
    }
    Ok(())
}

/// Stack images into an NCHW batch.
pub fn images_to_tensor(imgs: &[&Image]) -> Result<Tensor<f32>> {
    let first = imgs
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty image batch".into()))?;
    if imgs.iter().any(|i| !i.same_size(first)) {
        return Err(Error::ShapeMismatch("images in a batch differ in size".into()));
    }
    Ok(Tensor::stack(&imgs.iter().map(|i| i.to_chw()).collect::<Vec<_>>()))
}

/// Stack soft maps into an NCHW batch with `K` channels.
pub fn soft_to_tensor(maps: &[&SoftLabelMap]) -> Result<Tensor<f32>> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty label batch".into()))?;
    let same = |m: &&SoftLabelMap| {
        m.height() == first.height() && m.width() == first.width() && m.num_classes() == first.num_classes()
    };
    if !maps.iter().all(same) {
        return Err(Error::ShapeMismatch("label maps in a batch differ in shape".into()));
    }
    Ok(Tensor::stack(&maps.iter().map(|m| m.to_chw()).collect::<Vec<_>>()))
}

/// One-hot NCHW batch from hard label maps.
pub fn one_hot_tensor(maps: &[&LabelMap], k: usize) -> Result<Tensor<f32>> {
    let soft = maps.iter().map(|m| encode_labels(m, k)).collect::<Result<Vec<_>>>()?;
    soft_to_tensor(&soft.iter().collect::<Vec<_>>())
}

/// Flattened class indices of a batch, sample-major.
pub fn label_indices(maps: &[&LabelMap]) -> Vec<usize> {
    maps.iter().flat_map(|m| m.indices()).collect()
}

fn check_pair(s: &SoftLabelMap, img: &Image, k: usize) -> Result<()> {
    if s.num_classes() != k {
        return Err(Error::ShapeMismatch(format!(
            "network expects {k} classes, segmentation has {}",
            s.num_classes()
        )));
    }
    if s.height() != img.height() || s.width() != img.width() {
        return Err(Error::ShapeMismatch(format!(
            "segmentation {}x{} vs image {}x{}",
            s.height(),
            s.width(),
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

/// Run G1 on one sample.
pub fn refine(g1: &RefinementNet, s_d: &SoftLabelMap, i_d: &Image) -> Result<SoftLabelMap> {
    check_pair(s_d, i_d, g1.num_classes())?;
    check_side(i_d.height(), i_d.width(), g1.net.config())?;
    let mut g = Graph::<f32>::new();
    let p = g1.net.params().bind(&mut g, false);
    let s = g.constant(soft_to_tensor(&[s_d])?);
    let x = g.constant(images_to_tensor(&[i_d])?);
    let out = g1.forward(&mut g, &p, s, x);
    SoftLabelMap::from_chw(i_d.height(), i_d.width(), g1.num_classes(), g.value(out).data())
}

/// Run G2 on one sample.
pub fn restore(g2: &RestorationNet, s_r: &SoftLabelMap, i_d: &Image) -> Result<Image> {
    check_pair(s_r, i_d, g2.num_classes())?;
    check_side(i_d.height(), i_d.width(), g2.net.config())?;
    let mut g = Graph::<f32>::new();
    let p = g2.net.params().bind(&mut g, false);
    let s = g.constant(soft_to_tensor(&[s_r])?);
    let x = g.constant(images_to_tensor(&[i_d])?);
    let out = g2.forward(&mut g, &p, s, x);
    Image::from_chw(i_d.height(), i_d.width(), g.value(out).data())
}

/// Score map `[h, w]` of a discriminator on one `[C, H, W]` input, without
/// advancing its power iteration.
pub fn discriminate(d: &PatchDiscriminator, input: &Tensor<f32>) -> Result<Tensor<f32>> {
    let shape = input.shape();
    if shape.len() != 3 || shape[0] != d.config().in_channels {
        return Err(Error::ShapeMismatch(format!(
            "discriminator expects [{}, H, W], got {shape:?}",
            d.config().in_channels
        )));
    }
    if shape[1] < 16 || shape[2] < 16 {
        return Err(Error::ShapeMismatch(format!("discriminator input {shape:?} below 16x16")));
    }
    let mut g = Graph::<f32>::new();
    let p = d.params().bind(&mut g, false);
    let (w, _) = d.weights(&mut g, &p);
    let x = g.constant(input.clone().reshape([1, shape[0], shape[1], shape[2]]));
    let out = d.apply(&mut g, &w, x);
    let (_, _, h, wd) = g.value(out).dims4();
    Ok(g.value(out).clone().reshape([h, wd]))
}

pub fn extract_features(f: &FeatureExtractor, img: &Image) -> Result<Vec<Tensor<f32>>> {
    f.extract(img)
}

#[cfg(test)]
mod tests;
