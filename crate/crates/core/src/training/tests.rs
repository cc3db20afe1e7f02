use super::*;
use crate::datagen::{build_dataset, generate_toy_dataset, train_clean_segmenter, SegmenterConfig, ToyDatasetConfig};
use crate::degradations::{DegradationSpec, Family};
use crate::networks::ArchConfig;

fn tiny_manifest(dir: &Path) -> (DatasetManifest, Segmenter) {
    let cfg = ToyDatasetConfig {
        n_samples: 10,
        val_samples: 3,
        image_size: 32,
        seed: 4,
        ..Default::default()
    };
    let pairs = generate_toy_dataset(&cfg).unwrap();
    let seg = train_clean_segmenter(
        &pairs,
        &SegmenterConfig {
            epochs: 0,
            width: 4,
            levels: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let specs = [
        DegradationSpec::at_severity(Family::GaussianBlur, 1, 1).unwrap(),
        DegradationSpec::at_severity(Family::GaussianNoise, 1, 2).unwrap(),
    ];
    (build_dataset(&cfg, &specs, &seg, dir).unwrap(), seg)
}

fn tiny_config(n1: u64, n2: u64, n3: u64) -> TrainingConfig {
    TrainingConfig {
        seed: 7,
        n1,
        n2,
        n3,
        batch_size: 2,
        checkpoint_every: 0,
        arch: ArchConfig {
            gen_width: 4,
            gen_levels: 3,
            disc_width: 4,
            d2_spectral_norm: false,
        },
        features: FeatureConfig {
            pyramid_widths: vec![4, 8],
            ..Default::default()
        },
        ..Default::default()
    }
}

#[derive(Default)]
struct Recorder {
    inputs: Vec<(u8, SegInput)>,
    reports: Vec<LossReport>,
    stage_ends: Vec<(u8, u64)>,
}

impl Observer for Recorder {
    fn on_g2_input(&mut self, stage: u8, input: &SegInput) {
        self.inputs.push((stage, *input));
    }
    fn on_iteration(&mut self, report: &LossReport) {
        self.reports.push(report.clone());
    }
    fn on_stage_end(&mut self, stage: u8, iteration: u64) {
        self.stage_ends.push((stage, iteration));
    }
}

fn opts(dir: &Path) -> RunOptions {
    RunOptions {
        out_dir: dir.to_path_buf(),
        skip_eval: true,
        ..Default::default()
    }
}

#[test]
fn stage_of_splits_at_boundaries() {
    let c = tiny_config(3, 2, 4);
    let stages: Vec<u8> = (0..9).map(|t| c.stage_of(t)).collect();
    assert_eq!(stages, [1, 1, 1, 2, 2, 3, 3, 3, 3]);
    assert_eq!(tiny_config(0, 0, 2).stage_of(0), 3);
}

#[test]
fn config_validation() {
    assert!(tiny_config(1, 1, 1).validate().is_ok());
    let mut c = tiny_config(1, 1, 1);
    c.batch_size = 0;
    assert!(c.validate().is_err());
    let mut c = tiny_config(1, 1, 1);
    c.optim.d2.lr = 0.0;
    assert!(c.validate().is_err());
    let mut c = tiny_config(1, 1, 1);
    c.optim.g1.beta1 = 1.0;
    assert!(c.validate().is_err());
}

#[test]
fn run_follows_the_three_stage_schedule() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let (m, seg) = tiny_manifest(data.path());
    let mut rec = Recorder::default();
    let before = seg.net.params().checksum();
    let o = RunOptions {
        segmenter: Some(seg),
        ..opts(out.path())
    };
    let s = run(&tiny_config(3, 2, 2), &m, &o, &mut rec).unwrap();
    assert!(s.state.is_done());
    assert_eq!(s.state.iteration, 7);
    assert_eq!(rec.stage_ends, [(1, 3), (2, 5), (3, 7)]);
    let stages: Vec<u8> = rec.reports.iter().map(|r| r.stage).collect();
    assert_eq!(stages, [1, 1, 1, 2, 2, 3, 3]);

    for (stage, input) in &rec.inputs {
        match stage {
            2 => assert!(input.matches_gt && input.one_hot && !input.differentiable, "{input:?}"),
            3 => assert!(!input.matches_gt && !input.one_hot && input.differentiable, "{input:?}"),
            s => panic!("G2 ran in stage {s}"),
        }
    }
    assert_eq!(rec.inputs.len(), 4);

    for r in &rec.reports {
        let g1 = r.total_g1.is_some();
        let g2 = r.total_g2.is_some();
        assert_eq!((g1, g2), (r.stage != 2, r.stage != 1), "stage {} report {r:?}", r.stage);
    }

    let log = read_log(&s.log).unwrap();
    assert_eq!(log.len(), 7);
    assert_eq!(log, rec.reports);
    let first = |st: u8| log.iter().find(|r| r.stage == st).unwrap().iteration;
    assert_eq!((first(2), first(3)), (3, 5));

    for name in ["stage1.bin", "stage2.bin", "stage3.bin", "final.bin", "checkpoint_000000.bin"] {
        assert!(out.path().join(name).is_file(), "{name}");
    }
    assert_eq!(TrainState::load(&out.path().join("stage1.bin")).unwrap().iteration, 3);
    assert_eq!(TrainState::load(&out.path().join("stage2.bin")).unwrap().iteration, 5);
    let bundled = s.state.segmenter.as_ref().unwrap();
    assert_eq!(bundled.net.params().checksum(), before);
}

#[test]
fn empty_schedule_writes_only_the_initial_checkpoint() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let (m, _) = tiny_manifest(data.path());
    let s = run(&tiny_config(0, 0, 0), &m, &opts(out.path()), &mut ()).unwrap();
    assert!(s.state.is_done());
    let bins: Vec<String> = std::fs::read_dir(out.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".bin"))
        .collect();
    assert_eq!(bins, ["checkpoint_000000.bin"]);
}

#[test]
fn empty_stage_only_advances() {
    let data = tempfile::tempdir().unwrap();
    let (m, _) = tiny_manifest(data.path());
    let train = TrainData::new(&m.load_split(Split::Train).unwrap(), 4).unwrap();
    let features = tiny_config(0, 0, 0).features.build().unwrap();
    let ctx = StepContext {
        data: &train,
        features: &features,
    };
    let mut state = TrainState::new(tiny_config(0, 1, 0), 4, None).unwrap();
    let before = state.to_bytes().unwrap();
    assert_eq!(state.stage, 2);
    train_stage1(&mut state, &ctx, &mut ()).unwrap();
    assert_eq!(state.to_bytes().unwrap(), before);
    assert!(train_stage3(&mut state, &ctx, &mut ()).is_err());
    train_stage2(&mut state, &ctx, &mut ()).unwrap();
    assert!(state.is_done());
}

#[test]
fn same_seed_gives_identical_losses() {
    let data = tempfile::tempdir().unwrap();
    let (m, _) = tiny_manifest(data.path());
    let runs: Vec<Vec<LossReport>> = (0..2)
        .map(|_| {
            let out = tempfile::tempdir().unwrap();
            let mut rec = Recorder::default();
            run(&tiny_config(2, 2, 2), &m, &opts(out.path()), &mut rec).unwrap();
            rec.reports
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let data = tempfile::tempdir().unwrap();
    let (m, _) = tiny_manifest(data.path());
    let cfg = tiny_config(3, 3, 2);

    let full = tempfile::tempdir().unwrap();
    let mut rec_full = Recorder::default();
    let a = run(&cfg, &m, &opts(full.path()), &mut rec_full).unwrap();

    let part = tempfile::tempdir().unwrap();
    let first = RunOptions {
        stop_after: Some(3),
        ..opts(part.path())
    };
    let stopped = run(&cfg, &m, &first, &mut ()).unwrap();
    assert_eq!((stopped.state.iteration, stopped.state.stage), (3, 2));
    let second = RunOptions {
        resume: Some(part.path().join(LATEST_CHECKPOINT)),
        ..opts(part.path())
    };
    let mut rec_resumed = Recorder::default();
    let b = run(&cfg, &m, &second, &mut rec_resumed).unwrap();

    assert_eq!(rec_resumed.reports[..], rec_full.reports[3..]);
    assert_eq!(read_log(&b.log).unwrap(), read_log(&a.log).unwrap());
    assert_eq!(b.state.to_bytes().unwrap(), a.state.to_bytes().unwrap());
}

#[test]
fn resume_truncates_log_rows_past_the_checkpoint() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let (m, _) = tiny_manifest(data.path());
    let cfg = TrainingConfig {
        checkpoint_every: 2,
        ..tiny_config(2, 2, 1)
    };
    run(&cfg, &m, &opts(out.path()), &mut ()).unwrap();
    let resumed = RunOptions {
        resume: Some(out.path().join(periodic_checkpoint_name(2))),
        ..opts(out.path())
    };
    let s = run(&cfg, &m, &resumed, &mut ()).unwrap();
    let iters: Vec<u64> = read_log(&s.log).unwrap().iter().map(|r| r.iteration).collect();
    assert_eq!(iters, [0, 1, 2, 3, 4]);
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let (m, seg) = tiny_manifest(data.path());
    let o = RunOptions {
        segmenter: Some(seg),
        stop_after: Some(4),
        ..opts(out.path())
    };
    let s = run(&tiny_config(2, 2, 2), &m, &o, &mut ()).unwrap();
    let bytes = s.state.to_bytes().unwrap();
    let back = TrainState::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes().unwrap(), bytes);
    assert_eq!(back.iteration, 4);
    assert_eq!(back.stage, 3);
    assert!(back.segmenter.is_some());

    assert!(TrainState::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(TrainState::from_bytes(&extra).is_err());
    assert!(TrainState::from_bytes(b"SGRSCKP0").is_err());
}

#[test]
fn restoration_loss_reaches_the_refinement_network() {
    let data = tempfile::tempdir().unwrap();
    let (m, _) = tiny_manifest(data.path());
    let cfg = tiny_config(0, 0, 1);
    let train = TrainData::new(&m.load_split(Split::Train).unwrap(), 4).unwrap();
    let features = cfg.features.build().unwrap();
    let ctx = StepContext {
        data: &train,
        features: &features,
    };
    let state = TrainState::new(cfg, 4, None).unwrap();
    let norm = cooperative_gradient_norm(&state, &ctx, &[0, 1]).unwrap();
    assert!(norm.is_finite() && norm > 0.0, "{norm}");
}

#[test]
fn non_finite_loss_aborts_with_a_dump() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let (m, _) = tiny_manifest(data.path());
    let mut state = TrainState::new(tiny_config(2, 0, 0), 4, None).unwrap();
    state.g1.net.params_mut().tensors_mut()[0].data_mut().fill(f32::NAN);
    let ckpt = out.path().join("poisoned.bin");
    state.save(&ckpt).unwrap();
    let o = RunOptions {
        resume: Some(ckpt),
        ..opts(out.path())
    };
    match run(&tiny_config(2, 0, 0), &m, &o, &mut ()) {
        Err(Error::NonFinite { stage, iteration, report }) => {
            assert_eq!((stage, iteration), (1, 0));
            assert!(report.contains("total_d1"), "{report}");
        }
        other => panic!("expected a numeric abort, got {other:?}"),
    }
    assert!(out.path().join(NAN_DUMP).is_file());
}

#[test]
fn evaluation_pairs_rows_and_is_repeatable() {
    let data = tempfile::tempdir().unwrap();
    let (m, _) = tiny_manifest(data.path());
    let state = TrainState::new(tiny_config(0, 0, 0), 4, None).unwrap();
    let a = evaluate(&state, &m, Split::Val).unwrap();
    let b = evaluate(&state, &m, Split::Val).unwrap();
    assert_eq!(a, b);
    let names: Vec<(&str, &str)> = a.rows.iter().map(|r| (r.family.as_str(), r.severity.as_str())).collect();
    assert_eq!(
        names,
        [("GB", "1"), ("GB_Re", "1"), ("GN", "1"), ("GN_Re", "1"), ("ALL", "*"), ("ALL_Re", "*")]
    );
    assert!(evaluate(&state, &m, Split::Test).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eval.csv");
    a.write_csv(&path).unwrap();
    let mut r = csv::Reader::from_path(&path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, CSV_COLUMNS);
    assert_eq!(r.records().count(), 6);
}

#[test]
fn ground_truth_predictions_score_perfectly() {
    let data = tempfile::tempdir().unwrap();
    let (m, _) = tiny_manifest(data.path());
    let mut acc = EvalAccumulator::new(4);
    for rec in m.split(Split::Val) {
        let s = m.load_sample(rec).unwrap();
        acc.add(&SampleResult {
            record: rec.clone(),
            degraded: s.gt_image.clone(),
            degraded_seg: s.gt_seg.clone(),
            refined_seg: s.gt_seg.clone(),
            restored: s.gt_image.clone(),
            gt_image: s.gt_image,
            gt_seg: s.gt_seg,
        })
        .unwrap();
    }
    for row in acc.finish().unwrap().rows {
        let s = row.scores;
        assert_eq!([s.pa, s.mpa, s.miou, s.fwiou], [1.0; 4], "{}", row.family);
        assert!(row.psnr.is_infinite());
        assert!((row.ssim - 1.0).abs() < 1e-9);
    }
}

#[test]
fn grid_has_five_panels() {
    let data = tempfile::tempdir().unwrap();
    let (m, _) = tiny_manifest(data.path());
    let state = TrainState::new(tiny_config(0, 0, 0), 4, None).unwrap();
    let rec = m.split(Split::Val)[0];
    let s = run_sample(&state, &m, rec).unwrap();
    let grid = grid_image(&s).unwrap();
    assert_eq!((grid.height(), grid.width()), (32, 5 * 32 + 4 * 2));
    assert_eq!(grid.get(5, 3, 0), s.degraded.get(5, 3, 0));
    assert_eq!(grid.get(5, 4 * 34 + 3, 1), s.gt_image.get(5, 3, 1));
    assert_eq!(grid.get(0, 32, 0), 1.0);
}
