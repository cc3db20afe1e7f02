use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::{Dtype, SafeTensors};

use super::params::{he_normal, ParamSet};
use super::unet::LEAKY_SLOPE;
use crate::autograd::{Graph, Scalar, Tensor, Var};
use crate::domain::Image;
use crate::error::{Error, Result};

pub const DEFAULT_PYRAMID_WIDTHS: [usize; 3] = [16, 32, 64];
pub const DEFAULT_PYRAMID_SEED: u64 = 0x5eed_f00d;
/// Conv indices inside `features.*` tapped by default: conv1_2, conv2_2, conv3_4, conv4_4.
pub const DEFAULT_VGG19_TAPS: [usize; 4] = [2, 7, 16, 25];

const VGG19_LAYOUT: [usize; 21] = [64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0];
const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Clone, Copy, Debug, PartialEq)]
enum Activation {
    Leaky,
    Relu,
}

#[derive(Clone, Debug)]
enum Stage {
    Conv {
        weight: usize,
        bias: Option<usize>,
        stride: usize,
        padding: usize,
        tap: bool,
    },
    Act(Activation),
    MaxPool,
}

/// Frozen convolutional feature pyramid. Taps are taken from convolution
/// outputs before their activation.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    params: ParamSet,
    stages: Vec<Stage>,
    normalize: bool,
    min_side: usize,
}

impl FeatureExtractor {
    /// Bias-free random pyramid: stride 1 at the first layer, stride 2 after.
    pub fn random_pyramid(widths: &[usize], seed: u64) -> Self {
        assert!(!widths.is_empty(), "pyramid needs at least one layer");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut stages = Vec::new();
        let mut inp = 3;
        for (i, &out) in widths.iter().enumerate() {
            if i > 0 {
                stages.push(Stage::Act(Activation::Leaky));
            }
            let weight = params.push(format!("conv{i}.weight"), he_normal(&mut rng, out, inp, 3, LEAKY_SLOPE));
            stages.push(Stage::Conv {
                weight,
                bias: None,
                stride: if i == 0 { 1 } else { 2 },
                padding: 1,
                tap: true,
            });
            inp = out;
        }
        let min_side = 1 << (widths.len() - 1);
        Self {
            params,
            stages,
            normalize: false,
            min_side: min_side.max(2),
        }
    }

    pub fn default_pyramid() -> Self {
        Self::random_pyramid(&DEFAULT_PYRAMID_WIDTHS, DEFAULT_PYRAMID_SEED)
    }

    /// One bias-free, stride-1, padding-1 convolution, tapped.
    pub fn single_layer(weight: Tensor<f32>) -> Self {
        assert_eq!(weight.shape()[1], 3, "first layer must read RGB");
        let mut params = ParamSet::new();
        let w = params.push("conv0.weight", weight);
        let padding = params.get(w).shape()[2] / 2;
        Self {
            params,
            stages: vec![Stage::Conv {
                weight: w,
                bias: None,
                stride: 1,
                padding,
                tap: true,
            }],
            normalize: false,
            min_side: 1,
        }
    }

    /// Load the `features.*` convolutions of a VGG-19 from a safetensors file,
    /// truncated after the last tap. `taps` index into `features`.
    pub fn vgg19(path: &Path, taps: &[usize]) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let st = SafeTensors::deserialize(&bytes)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let last = *taps
            .iter()
            .max()
            .ok_or_else(|| Error::InvalidArgument("vgg19 needs at least one tap".into()))?;
        if let Some(t) = taps.iter().find(|&&t| !conv_index(t)) {
            return Err(Error::InvalidArgument(format!("vgg19 tap {t} is not a convolution")));
        }
        let mut params = ParamSet::new();
        let mut stages = Vec::new();
        let mut index = 0;
        let mut inp = 3;
        let mut pools = 0;
        for &out in VGG19_LAYOUT.iter() {
            if index > last {
                break;
            }
            if out == 0 {
                stages.push(Stage::MaxPool);
                pools += 1;
                index += 1;
                continue;
            }
            let w = load_f32(&st, &format!("features.{index}.weight"), &[out, inp, 3, 3])?;
            let b = load_f32(&st, &format!("features.{index}.bias"), &[out])?;
            let weight = params.push(format!("features.{index}.weight"), w);
            let bias = Some(params.push(format!("features.{index}.bias"), b));
            stages.push(Stage::Conv {
                weight,
                bias,
                stride: 1,
                padding: 1,
                tap: taps.contains(&index),
            });
            stages.push(Stage::Act(Activation::Relu));
            index += 2;
            inp = out;
        }
        Ok(Self {
            params,
            stages,
            normalize: true,
            min_side: (1 << pools).max(2),
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn min_side(&self) -> usize {
        self.min_side
    }

    pub fn num_taps(&self) -> usize {
        self.stages
            .iter()
            .filter(|s| matches!(s, Stage::Conv { tap: true, .. }))
            .count()
    }

    /// Tapped pre-activation maps for an NCHW batch in `[0, 1]`. Parameters
    /// are bound as constants, so gradients only reach `x`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Vec<Var> {
        let (_, c, h, w) = g.value(x).dims4();
        assert_eq!(c, 3, "feature extractor reads RGB");
        assert!(
            h >= self.min_side && w >= self.min_side,
            "feature extractor input {h}x{w} below {}",
            self.min_side
        );
        let p = self.params.bind(g, false);
        let mut cur = x;
        if self.normalize {
            cur = imagenet_normalize(g, cur);
        }
        let mut taps = Vec::new();
        for stage in &self.stages {
            cur = match *stage {
                Stage::Conv {
                    weight,
                    bias,
                    stride,
                    padding,
                    tap,
                } => {
                    let y = g.conv2d(cur, p.var(weight), bias.map(|b| p.var(b)), stride, padding);
                    if tap {
                        taps.push(y);
                    }
                    y
                }
                Stage::Act(Activation::Leaky) => g.leaky_relu(cur, T::lit(LEAKY_SLOPE)),
                Stage::Act(Activation::Relu) => g.relu(cur),
                Stage::MaxPool => g.max_pool2(cur),
            };
            if taps.len() == self.num_taps() {
                break;
            }
        }
        taps
    }

    /// Tapped maps of a single image, as `[C, H, W]` tensors.
    pub fn extract(&self, img: &Image) -> Result<Vec<Tensor<f32>>> {
        if img.height() < self.min_side || img.width() < self.min_side {
            return Err(Error::ShapeMismatch(format!(
                "image {}x{} below extractor minimum {}",
                img.height(),
                img.width(),
                self.min_side
            )));
        }
        let mut g = Graph::<f32>::new();
        let x = g.constant(img.to_chw().reshape([1, 3, img.height(), img.width()]));
        let taps = self.forward(&mut g, x);
        Ok(taps
            .into_iter()
            .map(|v| {
                let t = g.value(v);
                let (_, c, h, w) = t.dims4();
                t.clone().reshape([c, h, w])
            })
            .collect())
    }
}

fn conv_index(index: usize) -> bool {
    let mut i = 0;
    for &out in VGG19_LAYOUT.iter() {
        if i == index {
            return out != 0;
        }
        i += if out == 0 { 1 } else { 2 };
    }
    false
}

fn imagenet_normalize<T: Scalar>(g: &mut Graph<T>, x: Var) -> Var {
    let mut w = vec![T::zero(); 9];
    let mut b = vec![T::zero(); 3];
    for c in 0..3 {
        w[c * 3 + c] = T::lit(1.0 / IMAGENET_STD[c] as f64);
        b[c] = T::lit(-(IMAGENET_MEAN[c] / IMAGENET_STD[c]) as f64);
    }
    let w = g.constant(Tensor::new([3, 3, 1, 1], w));
    let b = g.constant(Tensor::new([3], b));
    g.conv2d(x, w, Some(b), 1, 0)
}

fn load_f32(st: &SafeTensors<'_>, name: &str, shape: &[usize]) -> Result<Tensor<f32>> {
    let view = st
        .tensor(name)
        .map_err(|e| Error::Format(format!("missing tensor {name}: {e}")))?;
    if view.shape() != shape {
        return Err(Error::ShapeMismatch(format!(
            "{name}: expected {shape:?}, found {:?}",
            view.shape()
        )));
    }
    let raw = view.data();
    let data: Vec<f32> = match view.dtype() {
        Dtype::F32 => raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect(),
        Dtype::F64 => raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")) as f32)
            .collect(),
        other => return Err(Error::Format(format!("{name}: unsupported dtype {other:?}"))),
    };
    Ok(Tensor::new(shape.to_vec(), data))
}
