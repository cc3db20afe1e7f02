use rand::Rng;
use rand_distr::StandardNormal;

use crate::autograd::{Gradients, Graph, Scalar, Tensor, Var};

/// Named, ordered parameter tensors of one network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor<f32>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a tensor and return its slot index.
    pub fn push(&mut self, name: impl Into<String>, t: Tensor<f32>) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<f32>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<f32>] {
        &mut self.tensors
    }

    pub fn get(&self, i: usize) -> &Tensor<f32> {
        &self.tensors[i]
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// FNV-1a over every parameter's bit pattern.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.tensors {
            for v in t.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Record every tensor on `g`, as differentiable leaves when `trainable`.
    pub fn bind<T: Scalar>(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                let t = t.cast::<T>();
                if trainable {
                    g.param(t)
                } else {
                    g.constant(t)
                }
            })
            .collect();
        Bound { vars }
    }
}

/// Graph handles of a bound [`ParamSet`], in slot order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wrap handles already on a graph, in the slot order of a [`ParamSet`].
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn var(&self, slot: usize) -> Var {
        self.vars[slot]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradient of every slot (zeros where unreachable), cast to `f32`.
    pub fn grads<T: Scalar>(&self, grads: &Gradients<T>, params: &ParamSet) -> Vec<Tensor<f32>> {
        self.vars
            .iter()
            .zip(params.tensors())
            .map(|(&v, p)| match grads.get(v) {
                Some(t) => t.cast::<f32>(),
                None => Tensor::zeros(p.shape().to_vec()),
            })
            .collect()
    }
}

/// He-normal convolution weight `[out, in, k, k]` for a leaky-ReLU slope.
pub fn he_normal(rng: &mut impl Rng, out: usize, inp: usize, k: usize, slope: f64) -> Tensor<f32> {
    let fan_in = (inp * k * k) as f64;
    let std = (2.0 / ((1.0 + slope * slope) * fan_in)).sqrt();
    let data = (0..out * inp * k * k)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (z * std) as f32
        })
        .collect();
    Tensor::new([out, inp, k, k], data)
}

pub fn unit_vector(rng: &mut impl Rng, n: usize) -> Vec<f32> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
    v.iter_mut().for_each(|a| *a /= norm);
    v.into_iter().map(|a| a as f32).collect()
}
