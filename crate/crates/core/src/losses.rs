//! Training objectives, as graph builders and as plain evaluations on domain
//! values.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Scalar, Tensor, Var};
use crate::domain::{Image, LabelMap, SoftLabelMap};
use crate::error::{Error, Result};
use crate::networks::FeatureExtractor;

/// Probability floor inside the cross-entropy.
pub const CE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TvVariant {
    /// `mean |∇x| + mean |∇y|`.
    #[default]
    Conventional,
    /// `mean |∇x − ∇y|` over the region where both differences exist.
    Literal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialForm {
    /// Targets 1 for real and 0 for fake under squared error.
    #[default]
    LeastSquares,
    /// Binary cross-entropy on logits, non-saturating generator term.
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_ref: f64,
    pub lambda_l1: f64,
    pub lambda_adv: f64,
    pub lambda_perc: f64,
    pub lambda_style: f64,
    pub tv_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_ref: 10.0,
            lambda_l1: 10.0,
            lambda_adv: 1.0,
            lambda_perc: 10.0,
            lambda_style: 250.0,
            tv_weight: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda_ref", self.lambda_ref),
            ("lambda_l1", self.lambda_l1),
            ("lambda_adv", self.lambda_adv),
            ("lambda_perc", self.lambda_perc),
            ("lambda_style", self.lambda_style),
            ("tv_weight", self.tv_weight),
        ];
        for (name, v) in all {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

// Graph builders.

/// Mean negative log-likelihood of the true class under `probs` (NCHW).
pub fn refinement<T: Scalar>(g: &mut Graph<T>, probs: Var, labels: &[usize]) -> Var {
    g.nll_probs(probs, labels, T::lit(CE_EPS))
}

pub fn adversarial_d<T: Scalar>(g: &mut Graph<T>, form: AdversarialForm, real: Var, fake: Var) -> Var {
    match form {
        AdversarialForm::LeastSquares => {
            let r = g.add_scalar(real, T::lit(-1.0));
            let r = g.square(r);
            let r = g.mean(r);
            let f = g.square(fake);
            let f = g.mean(f);
            g.add(r, f)
        }
        AdversarialForm::Log => {
            let nr = g.scale(real, T::lit(-1.0));
            let r = g.softplus(nr);
            let r = g.mean(r);
            let f = g.softplus(fake);
            let f = g.mean(f);
            g.add(r, f)
        }
    }
}

pub fn adversarial_g<T: Scalar>(g: &mut Graph<T>, form: AdversarialForm, fake: Var) -> Var {
    match form {
        AdversarialForm::LeastSquares => {
            let f = g.add_scalar(fake, T::lit(-1.0));
            let f = g.square(f);
            g.mean(f)
        }
        AdversarialForm::Log => {
            let nf = g.scale(fake, T::lit(-1.0));
            let f = g.softplus(nf);
            g.mean(f)
        }
    }
}

pub fn l1<T: Scalar>(g: &mut Graph<T>, a: Var, b: Var) -> Var {
    let d = g.sub(a, b);
    let d = g.abs(d);
    g.mean(d)
}

/// Sum over layers of the mean absolute feature difference.
pub fn perceptual<T: Scalar>(g: &mut Graph<T>, fa: &[Var], fb: &[Var]) -> Var {
    assert_eq!(fa.len(), fb.len(), "feature lists differ in length");
    let terms: Vec<Var> = fa.iter().zip(fb).map(|(&a, &b)| l1(g, a, b)).collect();
    sum_vars(g, &terms)
}

/// Sum over layers of the mean absolute Gram-matrix difference.
pub fn style<T: Scalar>(g: &mut Graph<T>, fa: &[Var], fb: &[Var]) -> Var {
    assert_eq!(fa.len(), fb.len(), "feature lists differ in length");
    let terms: Vec<Var> = fa
        .iter()
        .zip(fb)
        .map(|(&a, &b)| {
            let ga = g.gram(a);
            let gb = g.gram(b);
            l1(g, ga, gb)
        })
        .collect();
    sum_vars(g, &terms)
}

pub fn tv<T: Scalar>(g: &mut Graph<T>, x: Var, variant: TvVariant) -> Var {
    let dx = g.diff_w(x);
    let dy = g.diff_h(x);
    match variant {
        TvVariant::Conventional => {
            let ax = g.abs(dx);
            let ax = g.mean(ax);
            let ay = g.abs(dy);
            let ay = g.mean(ay);
            g.add(ax, ay)
        }
        TvVariant::Literal => {
            let (_, _, h, w) = g.value(x).dims4();
            let cx = g.crop(dx, h - 1, w - 1);
            let cy = g.crop(dy, h - 1, w - 1);
            let d = g.sub(cx, cy);
            let d = g.abs(d);
            g.mean(d)
        }
    }
}

/// `adv + λ·ref`.
pub fn weighted_g1<T: Scalar>(g: &mut Graph<T>, w: &LossWeights, adv: Var, refinement: Var) -> Var {
    let r = g.scale(refinement, T::lit(w.lambda_ref));
    g.add(adv, r)
}

/// The five restoration terms, each already reduced to a scalar.
#[derive(Clone, Copy, Debug)]
pub struct G2Terms {
    pub l1: Var,
    pub adv: Var,
    pub perc: Var,
    pub style: Var,
    pub tv: Var,
}

pub fn weighted_g2<T: Scalar>(g: &mut Graph<T>, w: &LossWeights, t: &G2Terms) -> Var {
    let parts = [
        (t.l1, w.lambda_l1),
        (t.adv, w.lambda_adv),
        (t.perc, w.lambda_perc),
        (t.style, w.lambda_style),
        (t.tv, w.tv_weight),
    ];
    let scaled: Vec<Var> = parts.iter().map(|&(v, c)| g.scale(v, T::lit(c))).collect();
    sum_vars(g, &scaled)
}

fn sum_vars<T: Scalar>(g: &mut Graph<T>, vars: &[Var]) -> Var {
    let (&first, rest) = vars.split_first().expect("at least one term");
    rest.iter().fold(first, |acc, &v| g.add(acc, v))
}

// Scalar totals.

pub fn total_g1_loss(w: &LossWeights, adv: f64, refinement: f64) -> f64 {
    adv + w.lambda_ref * refinement
}

pub fn total_g2_loss(w: &LossWeights, l1: f64, adv: f64, perc: f64, style: f64, tv: f64) -> f64 {
    w.lambda_l1 * l1 + w.lambda_adv * adv + w.lambda_perc * perc + w.lambda_style * style + w.tv_weight * tv
}

// Evaluations on domain values, in double precision.

fn image_var(g: &mut Graph<f64>, img: &Image) -> Var {
    g.constant(img.to_chw().cast::<f64>().reshape([1, 3, img.height(), img.width()]))
}

fn same_size(a: &Image, b: &Image) -> Result<()> {
    if a.same_size(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )))
    }
}

pub fn refinement_loss(s_r: &SoftLabelMap, s_gt: &LabelMap) -> Result<f64> {
    if s_r.num_classes() != s_gt.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted classes vs {} labelled",
            s_r.num_classes(),
            s_gt.num_classes()
        )));
    }
    if s_r.height() != s_gt.height() || s_r.width() != s_gt.width() {
        return Err(Error::ShapeMismatch("prediction and labels differ in size".into()));
    }
    let mut g = Graph::<f64>::new();
    let k = s_r.num_classes();
    let p = g.constant(s_r.to_chw().cast::<f64>().reshape([1, k, s_r.height(), s_r.width()]));
    let v = refinement(&mut g, p, &s_gt.indices());
    Ok(g.value(v).item())
}

/// `(d_loss, g_loss)` of the least-squares objective on two score maps.
pub fn ls_adversarial_losses(real: &Tensor<f32>, fake: &Tensor<f32>) -> Result<(f64, f64)> {
    for (name, t) in [("real", real), ("fake", fake)] {
        if !t.all_finite() {
            return Err(Error::Numeric(format!("{name} scores contain NaN or infinity")));
        }
        if t.is_empty() {
            return Err(Error::ShapeMismatch(format!("{name} score map is empty")));
        }
    }
    let mut g = Graph::<f64>::new();
    let r = g.constant(real.cast());
    let f = g.constant(fake.cast());
    let d = adversarial_d(&mut g, AdversarialForm::LeastSquares, r, f);
    let gl = adversarial_g(&mut g, AdversarialForm::LeastSquares, f);
    Ok((g.value(d).item(), g.value(gl).item()))
}

pub fn l1_loss(i_r: &Image, i_gt: &Image) -> Result<f64> {
    same_size(i_r, i_gt)?;
    let mut g = Graph::<f64>::new();
    let a = image_var(&mut g, i_r);
    let b = image_var(&mut g, i_gt);
    let v = l1(&mut g, a, b);
    Ok(g.value(v).item())
}

fn feature_pair(f: &FeatureExtractor, i_r: &Image, i_gt: &Image) -> Result<(Graph<f64>, Vec<Var>, Vec<Var>)> {
    same_size(i_r, i_gt)?;
    if i_r.height() < f.min_side() || i_r.width() < f.min_side() {
        return Err(Error::ShapeMismatch(format!(
            "image {}x{} below extractor minimum {}",
            i_r.height(),
            i_r.width(),
            f.min_side()
        )));
    }
    let mut g = Graph::<f64>::new();
    let a = image_var(&mut g, i_gt);
    let b = image_var(&mut g, i_r);
    let fa = f.forward(&mut g, a);
    let fb = f.forward(&mut g, b);
    Ok((g, fa, fb))
}

pub fn perceptual_loss(f: &FeatureExtractor, i_r: &Image, i_gt: &Image) -> Result<f64> {
    let (mut g, fa, fb) = feature_pair(f, i_r, i_gt)?;
    let v = perceptual(&mut g, &fa, &fb);
    Ok(g.value(v).item())
}

pub fn style_loss(f: &FeatureExtractor, i_r: &Image, i_gt: &Image) -> Result<f64> {
    let (mut g, fa, fb) = feature_pair(f, i_r, i_gt)?;
    let v = style(&mut g, &fa, &fb);
    Ok(g.value(v).item())
}

pub fn tv_loss(i_r: &Image, variant: TvVariant) -> Result<f64> {
    if i_r.height() < 2 || i_r.width() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "total variation needs at least 2x2, got {}x{}",
            i_r.height(),
            i_r.width()
        )));
    }
    let mut g = Graph::<f64>::new();
    let x = image_var(&mut g, i_r);
    let v = tv(&mut g, x, variant);
    Ok(g.value(v).item())
}

/// Per-iteration values of every term. Terms a stage does not compute are
/// `None` and serialize as empty CSV cells.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: u64,
    pub stage: u8,
    pub refinement: Option<f64>,
    pub adv_g1: Option<f64>,
    pub l1: Option<f64>,
    pub adv_g2: Option<f64>,
    pub perceptual: Option<f64>,
    pub style: Option<f64>,
    pub tv: Option<f64>,
    pub total_g1: Option<f64>,
    pub total_g2: Option<f64>,
    pub total_d1: Option<f64>,
    pub total_d2: Option<f64>,
}

impl LossReport {
    pub fn values(&self) -> [(&'static str, Option<f64>); 11] {
        [
            ("refinement", self.refinement),
            ("adv_g1", self.adv_g1),
            ("l1", self.l1),
            ("adv_g2", self.adv_g2),
            ("perceptual", self.perceptual),
            ("style", self.style),
            ("tv", self.tv),
            ("total_g1", self.total_g1),
            ("total_g2", self.total_g2),
            ("total_d1", self.total_d1),
            ("total_d2", self.total_d2),
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.values().iter().all(|(_, v)| v.map_or(true, f64::is_finite))
    }

    /// Names of the terms that are NaN or infinite.
    pub fn non_finite_terms(&self) -> Vec<&'static str> {
        self.values()
            .iter()
            .filter(|(_, v)| v.is_some_and(|v| !v.is_finite()))
            .map(|(n, _)| *n)
            .collect()
    }
}

#[cfg(test)]
mod tests;
