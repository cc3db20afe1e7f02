//! Three-stage cooperative training of the refinement and restoration
//! networks, checkpointing, and evaluation.

mod config;
mod data;
mod eval;
mod loss_log;
mod state;
mod steps;

pub use config::{AdamConfig, FeatureConfig, FeatureKind, Optimizers, TrainingConfig};
pub use data::{Batch, TrainData};
pub use eval::{
    colorize, evaluate, evaluate_with, grid_image, run_sample, EvalAccumulator, EvalRow, EvalTable, SampleResult,
    CSV_COLUMNS, REFINED_SUFFIX,
};
pub use loss_log::{read_log, LOG_COLUMNS, LOG_FILE};
pub use state::{TrainState, STAGE_DONE};
pub use steps::{cooperative_gradient_norm, Observer, SegInput, StepContext};

use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::datagen::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::losses::LossReport;
use crate::networks::Segmenter;

pub const LATEST_CHECKPOINT: &str = "latest.bin";
pub const FINAL_CHECKPOINT: &str = "final.bin";
pub const NAN_DUMP: &str = "nan_dump.bin";
pub const EVAL_FILE: &str = "eval_val.csv";

pub fn periodic_checkpoint_name(iteration: u64) -> String {
    format!("checkpoint_{iteration:06}.bin")
}

/// Written when `stage` has just completed.
pub fn stage_checkpoint_name(stage: u8) -> String {
    format!("stage{stage}.bin")
}

fn run_stage(state: &mut TrainState, ctx: &StepContext<'_>, stage: u8, obs: &mut dyn Observer) -> Result<()> {
    let c = &state.config;
    let empty = [c.n1, c.n2, c.n3][stage as usize - 1] == 0;
    if empty && state.stage > stage {
        return Ok(());
    }
    if state.stage != stage {
        return Err(Error::InvalidArgument(format!(
            "state is in stage {}, cannot run stage {stage}",
            state.stage
        )));
    }
    while state.stage == stage {
        let report = state.step(ctx, obs)?;
        obs.on_iteration(&report);
        advance(state, obs);
    }
    Ok(())
}

/// Count one finished iteration and fire stage-end hooks for every stage
/// that is now complete, including empty ones.
fn advance(state: &mut TrainState, obs: &mut dyn Observer) -> Vec<u8> {
    let before = state.stage;
    state.iteration += 1;
    state.sync_stage();
    let ended: Vec<u8> = (before..state.stage).collect();
    for &s in &ended {
        obs.on_stage_end(s, state.iteration);
    }
    ended
}

/// Train G1 against D1 until stage 1 completes.
pub fn train_stage1(state: &mut TrainState, ctx: &StepContext<'_>, obs: &mut dyn Observer) -> Result<()> {
    run_stage(state, ctx, 1, obs)
}

/// Train G2 against D2 on ground-truth segmentations until stage 2 completes.
pub fn train_stage2(state: &mut TrainState, ctx: &StepContext<'_>, obs: &mut dyn Observer) -> Result<()> {
    run_stage(state, ctx, 2, obs)
}

/// Joint training with the restoration loss flowing into G1.
pub fn train_stage3(state: &mut TrainState, ctx: &StepContext<'_>, obs: &mut dyn Observer) -> Result<()> {
    run_stage(state, ctx, 3, obs)
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Continue from this checkpoint instead of starting fresh. Its stored
    /// config takes precedence.
    pub resume: Option<PathBuf>,
    /// Return once this many iterations have completed.
    pub stop_after: Option<u64>,
    /// Bundled into every checkpoint for `restore --auto`.
    pub segmenter: Option<Segmenter>,
    /// Skip the final validation pass.
    pub skip_eval: bool,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub state: TrainState,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub val: Option<EvalTable>,
}

fn save_checkpoint(state: &TrainState, dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    state.save(&p)?;
    Ok(p)
}

/// Execute stages 1→3 on the manifest's train split, writing the loss log,
/// periodic and stage-boundary checkpoints, and a final validation table.
pub fn run(
    config: &TrainingConfig,
    manifest: &DatasetManifest,
    opts: &RunOptions,
    obs: &mut dyn Observer,
) -> Result<RunSummary> {
    let out = &opts.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let k = manifest.num_classes()?;
    let mut state = match &opts.resume {
        Some(p) => {
            let mut s = TrainState::load(p)?;
            if s.num_classes != k {
                return Err(Error::ClassMismatch(format!(
                    "checkpoint has {} classes, dataset has {k}",
                    s.num_classes
                )));
            }
            if &s.config != config {
                warn!("resuming with the configuration stored in {}", p.display());
            }
            if s.segmenter.is_none() {
                s.segmenter = opts.segmenter.clone();
            }
            info!("resumed at iteration {} (stage {})", s.iteration, s.stage);
            s
        }
        None => TrainState::new(config.clone(), k, opts.segmenter.clone())?,
    };
    let features = state.config.features.build()?;
    let train = TrainData::new(&manifest.load_split(Split::Train)?, k)?;
    let ctx = StepContext {
        data: &train,
        features: &features,
    };
    let log_path = out.join(LOG_FILE);
    let mut log = loss_log::LogWriter::open(&log_path, state.iteration, opts.resume.is_some())?;

    if opts.resume.is_none() {
        let initial = save_checkpoint(&state, out, &periodic_checkpoint_name(0))?;
        if state.config.total_iterations() == 0 {
            log.flush()?;
            return Ok(RunSummary {
                checkpoint: initial,
                state,
                log: log_path,
                val: None,
            });
        }
        save_checkpoint(&state, out, LATEST_CHECKPOINT)?;
        for s in 1..state.stage {
            obs.on_stage_end(s, 0);
            save_checkpoint(&state, out, &stage_checkpoint_name(s))?;
        }
    }

    let every = state.config.checkpoint_every;
    while !state.is_done() {
        if opts.stop_after.is_some_and(|n| state.iteration >= n) {
            break;
        }
        let report = match state.step(&ctx, obs) {
            Ok(r) => r,
            Err(e @ Error::NonFinite { .. }) => {
                let dump = save_checkpoint(&state, out, NAN_DUMP)?;
                warn!("non-finite loss; state dumped to {}", dump.display());
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        log.write(&report)?;
        obs.on_iteration(&report);
        log_progress(&report, state.config.total_iterations());
        for s in advance(&mut state, obs) {
            let p = save_checkpoint(&state, out, &stage_checkpoint_name(s))?;
            info!("stage {s} finished at iteration {}; saved {}", state.iteration, p.display());
        }
        if every > 0 && state.iteration % every == 0 {
            save_checkpoint(&state, out, &periodic_checkpoint_name(state.iteration))?;
            save_checkpoint(&state, out, LATEST_CHECKPOINT)?;
        }
    }
    log.flush()?;
    save_checkpoint(&state, out, LATEST_CHECKPOINT)?;
    if !state.is_done() {
        return Ok(RunSummary {
            checkpoint: out.join(LATEST_CHECKPOINT),
            state,
            log: log_path,
            val: None,
        });
    }
    let checkpoint = save_checkpoint(&state, out, FINAL_CHECKPOINT)?;
    let val = if opts.skip_eval || manifest.split(Split::Val).is_empty() {
        None
    } else {
        let table = evaluate(&state, manifest, Split::Val)?;
        table.write_csv(&out.join(EVAL_FILE))?;
        info!("validation\n{table}");
        Some(table)
    };
    Ok(RunSummary {
        state,
        checkpoint,
        log: log_path,
        val,
    })
}

fn log_progress(r: &LossReport, total: u64) {
    if (r.iteration + 1) % 100 != 0 && r.iteration + 1 != total {
        return;
    }
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    info!(
        "iter {}/{total} stage {} g1 {} g2 {} d1 {} d2 {}",
        r.iteration + 1,
        r.stage,
        f(r.total_g1),
        f(r.total_g2),
        f(r.total_d1),
        f(r.total_d2)
    );
}

#[cfg(test)]
mod tests;
