//! Three-stage training on a small shapes dataset: G1 alone, then G2 fed the
//! ground-truth segmentation, then both together with G2 fed G1's output.
//! Interrupts halfway, resumes from the checkpoint, and evaluates.
//!
//! cargo run --release --example train [OUT_DIR]

use std::path::PathBuf;

use segrestore::datagen::{build_dataset, generate_toy_dataset, train_clean_segmenter, SegmenterConfig, Split, ToyDatasetConfig};
use segrestore::degradations::{DegradationSpec, Family};
use segrestore::losses::LossReport;
use segrestore::training::{self, Observer, RunOptions, SegInput, TrainingConfig};

struct Progress;

impl Observer for Progress {
    fn on_g2_input(&mut self, stage: u8, input: &SegInput) {
        if input.one_hot != (stage == 2) {
            eprintln!("unexpected G2 input in stage {stage}: {input:?}");
        }
    }

    fn on_iteration(&mut self, r: &LossReport) {
        if r.iteration % 50 == 0 {
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
            println!(
                "it {:>4} stage {}  L_G1 {:>8}  L_G2 {:>8}  L1 {:>8}",
                r.iteration,
                r.stage,
                fmt(r.total_g1),
                fmt(r.total_g2),
                fmt(r.l1)
            );
        }
    }

    fn on_stage_end(&mut self, stage: u8, iteration: u64) {
        println!("stage {stage} done after {iteration} iterations");
    }
}

fn main() -> segrestore::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("segrestore-train"));
    let cfg = ToyDatasetConfig {
        n_samples: 140,
        val_samples: 20,
        ..Default::default()
    };
    let pairs = generate_toy_dataset(&cfg)?;
    let train: Vec<_> = pairs
        .iter()
        .enumerate()
        .filter(|(i, _)| cfg.split_of(*i) == Split::Train)
        .map(|(_, p)| p.clone())
        .collect();
    let seg = train_clean_segmenter(&train, &SegmenterConfig::default())?;
    let specs = [DegradationSpec::at_severity(Family::GaussianNoise, 1, 9)?];
    let manifest = build_dataset(&cfg, &specs, &seg, &out.join("data"))?;

    let config = TrainingConfig {
        n1: 150,
        n2: 150,
        n3: 100,
        checkpoint_every: 0,
        ..Default::default()
    };
    let run_dir = out.join("run");
    let first = RunOptions {
        out_dir: run_dir.clone(),
        stop_after: Some(200),
        segmenter: Some(seg),
        skip_eval: true,
        ..Default::default()
    };
    training::run(&config, &manifest, &first, &mut Progress)?;
    println!("interrupted; resuming");

    let second = RunOptions {
        out_dir: run_dir.clone(),
        resume: Some(run_dir.join(training::LATEST_CHECKPOINT)),
        ..Default::default()
    };
    let summary = training::run(&config, &manifest, &second, &mut Progress)?;
    if let Some(table) = summary.val {
        print!("{table}");
    }
    println!("checkpoint {}", summary.checkpoint.display());
    Ok(())
}
