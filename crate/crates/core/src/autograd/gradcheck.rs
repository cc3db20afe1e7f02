//! Central finite-difference verification of analytic gradients.

use super::graph::{Graph, Var};
use super::tensor::Tensor;

/// Outcome of one [`check`] run.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Largest per-element relative error between analytic and numeric gradients.
    pub max_rel_error: f64,
    /// Number of input elements compared.
    pub elements: usize,
    /// Distance of the base point from the nearest kink on the tape.
    pub kink_distance: f64,
}

impl GradCheck {
    /// True when the base point is far enough from every kink for central
    /// differences with `step` to be meaningful.
    pub fn is_smooth(&self, step: f64) -> bool {
        self.kink_distance > 10.0 * step + 1e-6
    }
}

/// Compare reverse-mode gradients of the scalar produced by `f` against
/// central differences `(f(x+h) - f(x-h)) / 2h` for every input element.
///
/// `f` receives a fresh graph and one differentiable leaf per input.
pub fn check(inputs: &[Tensor<f64>], step: f64, f: impl Fn(&mut Graph<f64>, &[Var]) -> Var) -> GradCheck {
    let eval = |xs: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars);
        g.value(out).item()
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars);
    let kink_distance = g.min_kink_distance();
    let grads = g.backward(out);

    let mut max_rel = 0.0f64;
    let mut elements = 0;
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let zero = Tensor::zeros(inputs[i].shape().to_vec());
        let analytic = grads.get(*v).unwrap_or(&zero);
        for e in 0..inputs[i].len() {
            let x0 = inputs[i].data()[e];
            probe[i].data_mut()[e] = x0 + step;
            let fp = eval(&probe);
            probe[i].data_mut()[e] = x0 - step;
            let fm = eval(&probe);
            probe[i].data_mut()[e] = x0;
            let numeric = (fp - fm) / (2.0 * step);
            let a = analytic.data()[e];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max((a - numeric).abs() / denom);
            elements += 1;
        }
    }
    GradCheck {
        max_rel_error: max_rel,
        elements,
        kink_distance,
    }
}
