use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{he_normal, unit_vector, Bound, ParamSet};
use super::unet::LEAKY_SLOPE;
use crate::autograd::{Graph, Scalar, Tensor, Var};

pub const DISC_BLOCKS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscConfig {
    pub in_channels: usize,
    pub base_width: usize,
    pub spectral_norm: bool,
}

/// Patch classifier: four `4×4` stride-2 convolutions with leaky ReLU, then a
/// `3×3` convolution to one score channel. A 64×64 input yields a 4×4 map.
#[derive(Clone, Debug)]
pub struct PatchDiscriminator {
    config: DiscConfig,
    params: ParamSet,
    layers: Vec<(usize, usize)>,
    sn_u: Vec<Vec<f32>>,
}

/// Effective (possibly normalized) weights for one graph.
#[derive(Clone, Debug)]
pub struct DiscWeights {
    layers: Vec<(Var, Var)>,
}

impl PatchDiscriminator {
    pub fn new(config: DiscConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut layers = Vec::new();
        let mut sn_u = Vec::new();
        let mut inp = config.in_channels;
        for i in 0..=DISC_BLOCKS {
            let (out, k) = if i < DISC_BLOCKS {
                (config.base_width << i, 4)
            } else {
                (1, 3)
            };
            let w = params.push(format!("conv{i}.weight"), he_normal(&mut rng, out, inp, k, LEAKY_SLOPE));
            let b = params.push(format!("conv{i}.bias"), Tensor::zeros([out]));
            layers.push((w, b));
            if config.spectral_norm {
                sn_u.push(unit_vector(&mut rng, out));
            }
            inp = out;
        }
        Self {
            config,
            params,
            layers,
            sn_u,
        }
    }

    pub fn config(&self) -> &DiscConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Persisted power-iteration vectors, one per convolution (empty without SN).
    pub fn sn_state(&self) -> &[Vec<f32>] {
        &self.sn_u
    }

    pub fn set_sn_state(&mut self, u: Vec<Vec<f32>>) {
        assert_eq!(u.len(), self.sn_u.len(), "spectral-norm state length");
        for (new, old) in u.iter().zip(&self.sn_u) {
            assert_eq!(new.len(), old.len(), "spectral-norm vector length");
        }
        self.sn_u = u;
    }

    /// Output side for a given input side.
    pub fn output_side(side: usize) -> usize {
        (0..DISC_BLOCKS).fold(side, |s, _| (s + 2 - 4) / 2 + 1)
    }

    /// Bind weights for this graph, running one power-iteration step per
    /// convolution when spectral normalization is enabled. The returned
    /// vectors must be committed with [`Self::set_sn_state`] to persist.
    pub fn weights<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound) -> (DiscWeights, Vec<Vec<f32>>) {
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut new_u = Vec::with_capacity(self.sn_u.len());
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wv = p.var(w);
            let wv = if self.config.spectral_norm {
                let u: Vec<T> = self.sn_u[i].iter().map(|&a| T::lit(a as f64)).collect();
                let (wn, u) = g.spectral_normalize(wv, &u);
                new_u.push(u.iter().map(|a| a.to_f32().unwrap_or(0.0)).collect());
                wn
            } else {
                wv
            };
            layers.push((wv, p.var(b)));
        }
        (DiscWeights { layers }, new_u)
    }

    /// Score map `[N, 1, h, w]` for an NCHW input.
    pub fn apply<T: Scalar>(&self, g: &mut Graph<T>, w: &DiscWeights, x: Var) -> Var {
        let (_, c, h, wd) = g.value(x).dims4();
        assert_eq!(c, self.config.in_channels, "discriminator expects {} channels", self.config.in_channels);
        assert!(h >= 16 && wd >= 16, "discriminator input {h}x{wd} below 16x16");
        let slope = T::lit(LEAKY_SLOPE);
        let mut cur = x;
        for (i, &(wv, bv)) in w.layers.iter().enumerate() {
            if i < DISC_BLOCKS {
                let y = g.conv2d(cur, wv, Some(bv), 2, 1);
                cur = g.leaky_relu(y, slope);
            } else {
                cur = g.conv2d(cur, wv, Some(bv), 1, 1);
            }
        }
        cur
    }

    /// Largest singular value of each effective weight matrix, by running
    /// `iterations` of power iteration from a fixed start.
    pub fn effective_spectral_norms(&self, iterations: usize) -> Vec<f64> {
        let mut g = Graph::<f64>::new();
        let p = self.params.bind(&mut g, false);
        let (w, _) = self.weights(&mut g, &p);
        w.layers
            .iter()
            .map(|&(wv, _)| spectral_norm_estimate(g.value(wv), iterations))
            .collect()
    }
}

/// Power-iteration estimate of the largest singular value of a weight viewed
/// as `shape[0] × rest`.
pub fn spectral_norm_estimate(w: &Tensor<f64>, iterations: usize) -> f64 {
    let rows = w.shape()[0];
    let cols = w.len() / rows;
    let m = w.data();
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut sigma = 0.0;
    for _ in 0..iterations.max(1) {
        let mut u = vec![0.0; rows];
        for r in 0..rows {
            u[r] = (0..cols).map(|c| m[r * cols + c] * v[c]).sum();
        }
        let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
        u.iter_mut().for_each(|a| *a /= nu);
        for c in 0..cols {
            v[c] = (0..rows).map(|r| m[r * cols + c] * u[r]).sum();
        }
        sigma = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nv = sigma.max(1e-300);
        v.iter_mut().for_each(|a| *a /= nv);
    }
    sigma
}
