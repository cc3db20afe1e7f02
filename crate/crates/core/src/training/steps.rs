use crate::autograd::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::losses::{self, G2Terms, LossReport};
use crate::networks::{Bound, FeatureExtractor, PatchDiscriminator};

use super::data::{Batch, TrainData};
use super::state::TrainState;

/// What G2 was fed on one iteration, measured from the tensor itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegInput {
    /// Bit-equal to the one-hot ground-truth segmentation of the batch.
    pub matches_gt: bool,
    /// Every entry is exactly 0 or 1.
    pub one_hot: bool,
    /// Gradients flow from G2's input back into G1.
    pub differentiable: bool,
}

/// Hooks into the training loop. All methods default to no-ops.
pub trait Observer {
    fn on_g2_input(&mut self, _stage: u8, _input: &SegInput) {}
    fn on_iteration(&mut self, _report: &LossReport) {}
    /// `iteration` is the count of completed iterations when `stage` ended.
    fn on_stage_end(&mut self, _stage: u8, _iteration: u64) {}
}

impl Observer for () {}

/// Everything a step needs besides the mutable state.
pub struct StepContext<'a> {
    pub data: &'a TrainData,
    pub features: &'a FeatureExtractor,
}

fn check(state: &TrainState, loss: f64, report: &LossReport) -> Result<()> {
    check_at(state.stage, state.iteration, loss, report)
}

fn seg_input(g: &Graph<f32>, seg: Var, batch: &Batch) -> SegInput {
    let v = g.value(seg);
    SegInput {
        matches_gt: v.shape() == batch.gt_seg.shape() && v.data() == batch.gt_seg.data(),
        one_hot: v.data().iter().all(|&x| x == 0.0 || x == 1.0),
        differentiable: g.requires_grad(seg),
    }
}

fn item(g: &Graph<f32>, v: Var) -> f64 {
    g.value(v).item() as f64
}

/// One discriminator step on detached fakes. Updates parameters and commits
/// the power-iteration state; returns the loss value.
fn disc_step(
    state_d: &mut PatchDiscriminator,
    opt: &mut crate::networks::Adam,
    g: &mut Graph<f32>,
    form: losses::AdversarialForm,
    real: Var,
    fake: Var,
    guard: impl FnOnce(f64) -> Result<()>,
) -> Result<f64> {
    let p = state_d.params().bind(g, true);
    let (w, new_u) = state_d.weights(g, &p);
    let fake = g.detach(fake);
    let sr = state_d.apply(g, &w, real);
    let sf = state_d.apply(g, &w, fake);
    let loss = losses::adversarial_d(g, form, sr, sf);
    let value = item(g, loss);
    guard(value)?;
    let grads = g.backward(loss);
    let gd = p.grads(&grads, state_d.params());
    opt.update(state_d.params_mut(), &gd);
    if !new_u.is_empty() {
        state_d.set_sn_state(new_u);
    }
    Ok(value)
}

/// Generator-side score of the current (already updated) discriminator.
fn disc_score(d: &PatchDiscriminator, g: &mut Graph<f32>, x: Var) -> Var {
    let p: Bound = d.params().bind(g, false);
    let (w, _) = d.weights(g, &p);
    d.apply(g, &w, x)
}

fn g2_terms(
    state: &TrainState,
    ctx: &StepContext<'_>,
    g: &mut Graph<f32>,
    i_r: Var,
    i_gt: Var,
) -> G2Terms {
    let cfg = &state.config;
    let score = disc_score(&state.d2, g, i_r);
    let f_gt = ctx.features.forward(g, i_gt);
    let f_r = ctx.features.forward(g, i_r);
    G2Terms {
        l1: losses::l1(g, i_r, i_gt),
        adv: losses::adversarial_g(g, cfg.adversarial, score),
        perc: losses::perceptual(g, &f_gt, &f_r),
        style: losses::style(g, &f_gt, &f_r),
        tv: losses::tv(g, i_r, cfg.tv_variant),
    }
}

fn record_g2(g: &Graph<f32>, r: &mut LossReport, t: &G2Terms, total: Var) {
    r.l1 = Some(item(g, t.l1));
    r.adv_g2 = Some(item(g, t.adv));
    r.perceptual = Some(item(g, t.perc));
    r.style = Some(item(g, t.style));
    r.tv = Some(item(g, t.tv));
    r.total_g2 = Some(item(g, total));
}

struct Inputs {
    s_d: Var,
    i_d: Var,
    s_gt: Var,
    i_gt: Var,
}

fn inputs(g: &mut Graph<f32>, b: &Batch) -> Inputs {
    Inputs {
        s_d: g.constant(b.degraded_seg.clone()),
        i_d: g.constant(b.degraded.clone()),
        s_gt: g.constant(b.gt_seg.clone()),
        i_gt: g.constant(b.gt_image.clone()),
    }
}

impl TrainState {
    /// Run one iteration of the current stage without advancing counters.
    pub(crate) fn step(&mut self, ctx: &StepContext<'_>, obs: &mut dyn Observer) -> Result<LossReport> {
        let batch = ctx.data.sample(&mut self.rng, self.config.batch_size);
        let report = LossReport {
            iteration: self.iteration,
            stage: self.stage,
            ..Default::default()
        };
        match self.stage {
            1 => self.stage1(&batch, report),
            2 => self.stage2(ctx, &batch, report, obs),
            3 => self.stage3(ctx, &batch, report, obs),
            s => Err(Error::InvalidArgument(format!("no training step for stage {s}"))),
        }
    }

    fn stage1(&mut self, b: &Batch, mut r: LossReport) -> Result<LossReport> {
        let form = self.config.adversarial;
        let mut g = Graph::<f32>::new();
        let x = inputs(&mut g, b);
        let p1 = self.g1.net.params().bind(&mut g, true);
        let s_r = self.g1.forward(&mut g, &p1, x.s_d, x.i_d);

        let real = g.concat(&[x.s_gt, x.i_d]);
        let s_r_det = g.detach(s_r);
        let fake = g.concat(&[s_r_det, x.i_d]);
        let (iteration, stage) = (self.iteration, self.stage);
        let d_loss = disc_step(&mut self.d1, &mut self.opt_d1, &mut g, form, real, fake, |v| {
            r.total_d1 = Some(v);
            check_at(stage, iteration, v, &r)
        })?;
        r.total_d1 = Some(d_loss);

        let fake = g.concat(&[s_r, x.i_d]);
        let score = disc_score(&self.d1, &mut g, fake);
        let adv = losses::adversarial_g(&mut g, form, score);
        let refine = losses::refinement(&mut g, s_r, &b.gt_labels);
        let total = losses::weighted_g1(&mut g, &self.config.losses, adv, refine);
        r.adv_g1 = Some(item(&g, adv));
        r.refinement = Some(item(&g, refine));
        r.total_g1 = Some(item(&g, total));
        check(self, item(&g, total), &r)?;
        let grads = g.backward(total);
        let gp = p1.grads(&grads, self.g1.net.params());
        self.opt_g1.update(self.g1.net.params_mut(), &gp);
        Ok(r)
    }

    fn stage2(
        &mut self,
        ctx: &StepContext<'_>,
        b: &Batch,
        mut r: LossReport,
        obs: &mut dyn Observer,
    ) -> Result<LossReport> {
        let form = self.config.adversarial;
        let mut g = Graph::<f32>::new();
        let x = inputs(&mut g, b);
        obs.on_g2_input(2, &seg_input(&g, x.s_gt, b));
        let p2 = self.g2.net.params().bind(&mut g, true);
        let i_r = self.g2.forward(&mut g, &p2, x.s_gt, x.i_d);

        let (iteration, stage) = (self.iteration, self.stage);
        let d_loss = disc_step(&mut self.d2, &mut self.opt_d2, &mut g, form, x.i_gt, i_r, |v| {
            r.total_d2 = Some(v);
            check_at(stage, iteration, v, &r)
        })?;
        r.total_d2 = Some(d_loss);

        let terms = g2_terms(self, ctx, &mut g, i_r, x.i_gt);
        let total = losses::weighted_g2(&mut g, &self.config.losses, &terms);
        record_g2(&g, &mut r, &terms, total);
        check(self, item(&g, total), &r)?;
        let grads = g.backward(total);
        let gp = p2.grads(&grads, self.g2.net.params());
        self.opt_g2.update(self.g2.net.params_mut(), &gp);
        Ok(r)
    }

    fn stage3(
        &mut self,
        ctx: &StepContext<'_>,
        b: &Batch,
        mut r: LossReport,
        obs: &mut dyn Observer,
    ) -> Result<LossReport> {
        let form = self.config.adversarial;
        let mut g = Graph::<f32>::new();
        let x = inputs(&mut g, b);
        let p1 = self.g1.net.params().bind(&mut g, true);
        let s_r = self.g1.forward(&mut g, &p1, x.s_d, x.i_d);
        obs.on_g2_input(3, &seg_input(&g, s_r, b));
        let p2 = self.g2.net.params().bind(&mut g, true);
        let i_r = self.g2.forward(&mut g, &p2, s_r, x.i_d);

        let (iteration, stage) = (self.iteration, self.stage);
        let real1 = g.concat(&[x.s_gt, x.i_d]);
        let s_r_det = g.detach(s_r);
        let fake1 = g.concat(&[s_r_det, x.i_d]);
        let d1 = disc_step(&mut self.d1, &mut self.opt_d1, &mut g, form, real1, fake1, |v| {
            r.total_d1 = Some(v);
            check_at(stage, iteration, v, &r)
        })?;
        r.total_d1 = Some(d1);
        let d2 = disc_step(&mut self.d2, &mut self.opt_d2, &mut g, form, x.i_gt, i_r, |v| {
            r.total_d2 = Some(v);
            check_at(stage, iteration, v, &r)
        })?;
        r.total_d2 = Some(d2);

        let fake1 = g.concat(&[s_r, x.i_d]);
        let score = disc_score(&self.d1, &mut g, fake1);
        let adv1 = losses::adversarial_g(&mut g, form, score);
        let refine = losses::refinement(&mut g, s_r, &b.gt_labels);
        let total1 = losses::weighted_g1(&mut g, &self.config.losses, adv1, refine);
        r.adv_g1 = Some(item(&g, adv1));
        r.refinement = Some(item(&g, refine));
        r.total_g1 = Some(item(&g, total1));
        check(self, item(&g, total1), &r)?;

        let terms = g2_terms(self, ctx, &mut g, i_r, x.i_gt);
        let total2 = losses::weighted_g2(&mut g, &self.config.losses, &terms);
        record_g2(&g, &mut r, &terms, total2);
        check(self, item(&g, total2), &r)?;

        // G1 receives both objectives; G2 only depends on its own.
        let joint = g.add(total1, total2);
        let grads = g.backward(joint);
        let gp1 = p1.grads(&grads, self.g1.net.params());
        let gp2 = p2.grads(&grads, self.g2.net.params());
        self.opt_g1.update(self.g1.net.params_mut(), &gp1);
        self.opt_g2.update(self.g2.net.params_mut(), &gp2);
        Ok(r)
    }
}

fn check_at(stage: u8, iteration: u64, v: f64, r: &LossReport) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            stage,
            iteration,
            report: serde_json::to_string(r).unwrap_or_else(|_| format!("{r:?}")),
        })
    }
}

/// L2 norm of `∂L_G2/∂θ_G1` on the given training samples, with S_r fed to G2
/// as soft probabilities. Parameters and random state are left untouched.
pub fn cooperative_gradient_norm(state: &TrainState, ctx: &StepContext<'_>, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("no samples for the gradient probe".into()));
    }
    let b = ctx.data.gather(indices);
    let mut g = Graph::<f32>::new();
    let x = inputs(&mut g, &b);
    let p1 = state.g1.net.params().bind(&mut g, true);
    let s_r = state.g1.forward(&mut g, &p1, x.s_d, x.i_d);
    let p2 = state.g2.net.params().bind(&mut g, false);
    let i_r = state.g2.forward(&mut g, &p2, s_r, x.i_d);
    let terms = g2_terms(state, ctx, &mut g, i_r, x.i_gt);
    let total = losses::weighted_g2(&mut g, &state.config.losses, &terms);
    let grads = g.backward(total);
    let sq: f64 = p1
        .grads(&grads, state.g1.net.params())
        .iter()
        .flat_map(|t: &Tensor<f32>| t.data().iter().map(|&v| (v as f64) * (v as f64)))
        .sum();
    Ok(sq.sqrt())
}
