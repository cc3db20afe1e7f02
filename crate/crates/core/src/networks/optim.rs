use super::params::ParamSet;
use crate::autograd::Tensor;

pub const DEFAULT_LR: f32 = 2e-4;
pub const DEFAULT_BETAS: (f32, f32) = (0.5, 0.999);
pub const ADAM_EPS: f32 = 1e-8;

/// Adam with bias correction; moments are kept per parameter slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub step: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f32, betas: (f32, f32)) -> Self {
        let zeros = |p: &ParamSet| p.tensors().iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
        Self {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: ADAM_EPS,
            step: 0,
            m: zeros(params),
            v: zeros(params),
        }
    }

    pub fn update(&mut self, params: &mut ParamSet, grads: &[Tensor<f32>]) {
        assert_eq!(grads.len(), params.len(), "one gradient per parameter");
        assert_eq!(self.m.len(), params.len(), "optimizer built for another parameter set");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - (self.beta1 as f64).powi(t);
        let c2 = 1.0 - (self.beta2 as f64).powi(t);
        let step_size = (self.lr as f64 * c2.sqrt() / c1) as f32;
        let eps = (self.eps as f64 * c2.sqrt()) as f32;
        let (b1, b2) = (self.beta1, self.beta2);
        for ((p, g), (m, v)) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.shape(), g.shape(), "gradient shape");
            let p = p.data_mut();
            let m = m.data_mut();
            let v = v.data_mut();
            for (i, &gi) in g.data().iter().enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                p[i] -= step_size * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}
