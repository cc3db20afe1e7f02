use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{he_normal, Bound, ParamSet};
use crate::autograd::{Graph, Scalar, Tensor, Var};

pub const LEAKY_SLOPE: f64 = 0.2;
const NORM_EPS: f64 = 1e-5;

/// Output activation of a [`UNet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    /// Per-pixel softmax over output channels.
    Softmax,
    /// Element-wise logistic, bounding outputs to `[0, 1]`.
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
    pub levels: usize,
    pub head: Head,
}

impl UNetConfig {
    /// Input side length must be divisible by this.
    pub fn stride_multiple(&self) -> usize {
        1 << (self.levels - 1)
    }

    fn width_at(&self, level: usize) -> usize {
        self.base_width << level
    }
}

#[derive(Clone, Debug)]
struct ConvSlot {
    weight: usize,
    bias: Option<usize>,
    stride: usize,
}

/// Symmetric encoder-decoder with skip connections and instance
/// normalization on the inner levels.
///
/// Encoder level 0 is a stride-1 convolution; levels `1..L` halve the
/// resolution. The decoder upsamples, concatenates the matching encoder
/// output, and convolves back to that level's width. The outermost encoder
/// and decoder convolutions are left unnormalized so absolute intensities
/// survive to the head.
#[derive(Clone, Debug)]
pub struct UNet {
    config: UNetConfig,
    params: ParamSet,
    encoder: Vec<ConvSlot>,
    decoder: Vec<ConvSlot>,
    head: ConvSlot,
}

impl UNet {
    pub fn new(config: UNetConfig, seed: u64) -> Self {
        assert!(config.levels >= 2, "a U-Net needs at least two levels");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut encoder = Vec::new();
        for level in 0..config.levels {
            let (inp, stride) = if level == 0 {
                (config.in_channels, 1)
            } else {
                (config.width_at(level - 1), 2)
            };
            let out = config.width_at(level);
            let weight = params.push(format!("enc{level}.weight"), he_normal(&mut rng, out, inp, 3, LEAKY_SLOPE));
            let bias = (level == 0).then(|| params.push(format!("enc{level}.bias"), Tensor::zeros([out])));
            encoder.push(ConvSlot { weight, bias, stride });
        }
        let mut decoder = Vec::new();
        for level in (0..config.levels - 1).rev() {
            let inp = config.width_at(level + 1) + config.width_at(level);
            let out = config.width_at(level);
            let weight = params.push(format!("dec{level}.weight"), he_normal(&mut rng, out, inp, 3, LEAKY_SLOPE));
            let bias = (level == 0).then(|| params.push(format!("dec{level}.bias"), Tensor::zeros([out])));
            decoder.push(ConvSlot { weight, bias, stride: 1 });
        }
        let weight = params.push(
            "head.weight",
            he_normal(&mut rng, config.out_channels, config.base_width, 1, 1.0),
        );
        let bias = Some(params.push("head.bias", Tensor::zeros([config.out_channels])));
        Self {
            config,
            params,
            encoder,
            decoder,
            head: ConvSlot { weight, bias, stride: 1 },
        }
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Forward pass on an NCHW input bound to `g`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        let (_, c, h, w) = g.value(x).dims4();
        assert_eq!(c, self.config.in_channels, "U-Net expects {} channels", self.config.in_channels);
        let m = self.config.stride_multiple();
        assert!(h % m == 0 && w % m == 0, "U-Net input {h}x{w} must be a multiple of {m}");
        let slope = T::lit(LEAKY_SLOPE);
        let eps = T::lit(NORM_EPS);
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut cur = x;
        for (level, slot) in self.encoder.iter().enumerate() {
            let y = g.conv2d(cur, p.var(slot.weight), slot.bias.map(|b| p.var(b)), slot.stride, 1);
            let y = if level == 0 { y } else { g.instance_norm(y, eps) };
            cur = g.leaky_relu(y, slope);
            skips.push(cur);
        }
        skips.pop();
        for slot in &self.decoder {
            let level = skips.len() - 1;
            let up = g.upsample2x(cur);
            let skip = skips.pop().expect("one skip per decoder level");
            let cat = g.concat(&[up, skip]);
            let y = g.conv2d(cat, p.var(slot.weight), slot.bias.map(|b| p.var(b)), 1, 1);
            let y = if level == 0 { y } else { g.instance_norm(y, eps) };
            cur = g.leaky_relu(y, slope);
        }
        let logits = g.conv2d(cur, p.var(self.head.weight), self.head.bias.map(|b| p.var(b)), 1, 0);
        match self.config.head {
            Head::Softmax => g.softmax_channels(logits),
            Head::Sigmoid => g.sigmoid(logits),
        }
    }
}
