//! Command-line front end: `gen-data`, `degrade`, `train`, `eval`, `restore`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::datagen::{
    build_from_pairs, evaluate_segmenter, generate_toy_dataset, load_segmenter, save_segmenter, train_clean_segmenter,
    DatasetManifest, SegmenterConfig, Split, ToyDatasetConfig,
};
use crate::degradations::{apply, DegradationSpec, Family};
use crate::domain::{decode_labels, encode_labels, ensure_parent, Image, LabelMap};
use crate::error::{Error, Result};
use crate::losses::{AdversarialForm, TvVariant};
use crate::metrics::psnr;
use crate::networks::{refine, restore};
use crate::training::{self, evaluate_with, grid_image, FeatureKind, RunOptions, TrainState, TrainingConfig};

/// Default output root when neither a flag nor the config file names one.
pub const OUT_ENV: &str = "SEGRESTORE_OUT";
pub const DEFAULT_OUT_ROOT: &str = "runs";
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const SEGMENTER_FILE: &str = "segmenter.bin";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationConfig {
    /// `family:severity` tags, e.g. `gb:1`.
    pub specs: Vec<String>,
    pub seed: u64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            specs: vec!["gb:1".into(), "gn:1".into()],
            seed: 0,
        }
    }
}

impl DegradationConfig {
    /// Spec `j` gets seed `seed + j` so families draw independent streams.
    pub fn resolve(&self) -> Result<Vec<DegradationSpec>> {
        if self.specs.is_empty() {
            return Err(Error::Config("degradations.specs must not be empty".into()));
        }
        self.specs
            .iter()
            .enumerate()
            .map(|(j, tag)| parse_tag(tag, self.seed.wrapping_add(j as u64)))
            .collect()
    }
}

/// Parse `family:severity`.
pub fn parse_tag(tag: &str, seed: u64) -> Result<DegradationSpec> {
    let (f, s) = tag
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("degradation `{tag}` is not of the form family:severity")))?;
    let family: Family = f.parse()?;
    let severity: usize = s
        .parse()
        .map_err(|_| Error::Config(format!("severity `{s}` in `{tag}` is not a number")))?;
    DegradationSpec::at_severity(family, severity, seed)
}

/// Whole configuration file. Every section is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub out_root: Option<PathBuf>,
    pub dataset: ToyDatasetConfig,
    pub segmenter: SegmenterConfig,
    pub degradations: DegradationConfig,
    pub training: TrainingConfig,
}

impl AppConfig {
    /// Read `path` (if any), then apply `key.path=value` overrides.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut root = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for s in sets {
            apply_set(&mut root, s)?;
        }
        toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn out_root(&self) -> PathBuf {
        self.out_root
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn echo(&self, dir: &Path) -> Result<()> {
        let p = dir.join(RESOLVED_CONFIG);
        ensure_parent(&p)?;
        std::fs::write(&p, self.to_toml()?).map_err(|e| Error::io(&p, e))
    }
}

fn apply_set(root: &mut toml::Table, set: &str) -> Result<()> {
    let (key, raw) = set
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set `{set}` is not of the form key=value")))?;
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut table = root;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "segrestore", version, about = "Segmentation refinement and guided restoration on synthetic data")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override any config value, e.g. `--set training.losses.lambda_style=100`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Output root; defaults to `out_root` in the config, then $SEGRESTORE_OUT, then `runs`.
    #[arg(long, global = true)]
    pub out_root: Option<PathBuf>,
    /// Log level (error, warn, info, debug).
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the shapes corpus, train the clean segmenter and write a degraded dataset.
    GenData(GenDataArgs),
    /// Apply one degradation to an image.
    Degrade(DegradeArgs),
    /// Run three-stage training on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Restore a single image.
    Restore(RestoreArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Dataset directory (default `<out_root>/data`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub val_samples: Option<usize>,
    #[arg(long)]
    pub test_samples: Option<usize>,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Degradation as `family:severity`; repeat for several.
    #[arg(long = "degradation", value_name = "FAMILY:SEVERITY")]
    pub degradations: Vec<String>,
    #[arg(long)]
    pub degradation_seed: Option<u64>,
    #[arg(long)]
    pub segmenter_epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// gb, gn, jpeg, ca or ref.
    #[arg(long)]
    pub family: String,
    #[arg(long)]
    pub severity: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reflection layer image, required for `ref`.
    #[arg(long)]
    pub reflection: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AdversarialArg {
    LeastSquares,
    Log,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TvArg {
    Conventional,
    Literal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FeaturesArg {
    RandomPyramid,
    Vgg19,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory or manifest (default `<out_root>/data`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory (default `<out_root>/train`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n1: Option<u64>,
    #[arg(long)]
    pub n2: Option<u64>,
    #[arg(long)]
    pub n3: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning rate for all four networks.
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[arg(long, value_enum)]
    pub adversarial: Option<AdversarialArg>,
    #[arg(long, value_enum)]
    pub tv_variant: Option<TvArg>,
    #[arg(long)]
    pub gen_width: Option<usize>,
    #[arg(long)]
    pub gen_levels: Option<usize>,
    #[arg(long)]
    pub disc_width: Option<usize>,
    #[arg(long, value_enum)]
    pub features: Option<FeaturesArg>,
    #[arg(long)]
    pub vgg19_path: Option<PathBuf>,
    /// Segmenter bundled into checkpoints (default `<data>/segmenter.bin` if present).
    #[arg(long)]
    pub segmenter: Option<PathBuf>,
    #[arg(long)]
    pub skip_eval: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory or manifest (default `<out_root>/data`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "val")]
    pub split: Split,
    /// Output directory (default `<out_root>/eval`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_grids: bool,
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Label PNG holding class indices.
    #[arg(long, conflicts_with = "auto")]
    pub seg: Option<PathBuf>,
    /// Refine the supplied segmentation with G1 before restoring.
    #[arg(long, requires = "seg")]
    pub refine: bool,
    /// Segment with the bundled segmenter, refine with G1, then restore.
    #[arg(long)]
    pub auto: bool,
    /// Restored image (default `<out_root>/restored.png`).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Where to write S_r (default next to the output, `*_seg.png`).
    #[arg(long)]
    pub seg_output: Option<PathBuf>,
    /// Reference image for reporting PSNR.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

/// Parse arguments and run; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite { .. } => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = AppConfig::load(cli.config.as_deref(), &cli.sets)?;
    if let Some(r) = &cli.out_root {
        cfg.out_root = Some(r.clone());
    }
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(cfg, a),
        Command::Degrade(a) => cmd_degrade(a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::Restore(a) => cmd_restore(&cfg, a),
    }
}

fn cmd_gen_data(mut cfg: AppConfig, a: &GenDataArgs) -> Result<()> {
    let d = &mut cfg.dataset;
    let set = |dst: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut d.n_samples, a.n_samples);
    set(&mut d.val_samples, a.val_samples);
    set(&mut d.test_samples, a.test_samples);
    set(&mut d.image_size, a.image_size);
    set(&mut d.num_classes, a.num_classes);
    set(&mut cfg.segmenter.epochs, a.segmenter_epochs);
    if let Some(s) = a.seed {
        d.seed = s;
    }
    if !a.degradations.is_empty() {
        cfg.degradations.specs = a.degradations.clone();
    }
    if let Some(s) = a.degradation_seed {
        cfg.degradations.seed = s;
    }
    cfg.dataset.validate()?;
    let specs = cfg.degradations.resolve()?;
    let out = a.out.clone().unwrap_or_else(|| cfg.out_root().join("data"));

    let pairs = generate_toy_dataset(&cfg.dataset)?;
    let splits: Vec<Split> = (0..pairs.len()).map(|i| cfg.dataset.split_of(i)).collect();
    let train: Vec<_> = pairs
        .iter()
        .zip(&splits)
        .filter(|(_, s)| **s == Split::Train)
        .map(|(p, _)| p.clone())
        .collect();
    info!("training the clean segmenter on {} images", train.len());
    let seg = train_clean_segmenter(&train, &cfg.segmenter)?;
    let clean = evaluate_segmenter(&seg, &train)?;
    println!("clean segmenter train mIoU {:.4}", clean.miou);
    let m = build_from_pairs(&pairs, &splits, &specs, &seg, &out)?;
    save_segmenter(&seg, &out.join(SEGMENTER_FILE))?;
    cfg.echo(&out)?;
    for s in [Split::Train, Split::Val, Split::Test] {
        println!("{s}: {} records", m.split(s).len());
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_degrade(a: &DegradeArgs) -> Result<()> {
    let family: Family = a.family.parse()?;
    let spec = DegradationSpec::at_severity(family, a.severity, a.seed)?;
    let img = Image::load(&a.input)?;
    let aux = a.reflection.as_deref().map(Image::load).transpose()?;
    let out = apply(&spec, &img, aux.as_ref())?;
    out.save(&a.output)?;
    println!("{}", serde_json::to_string(&spec).map_err(|e| Error::Format(e.to_string()))?);
    Ok(())
}

fn cmd_train(mut cfg: AppConfig, a: &TrainArgs) -> Result<()> {
    let t = &mut cfg.training;
    macro_rules! over {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    over!(t.seed, a.seed);
    over!(t.n1, a.n1);
    over!(t.n2, a.n2);
    over!(t.n3, a.n3);
    over!(t.batch_size, a.batch_size);
    over!(t.checkpoint_every, a.checkpoint_every);
    over!(t.arch.gen_width, a.gen_width);
    over!(t.arch.gen_levels, a.gen_levels);
    over!(t.arch.disc_width, a.disc_width);
    if let Some(lr) = a.lr {
        t.optim.set_lr(lr);
    }
    if let Some(f) = a.adversarial {
        t.adversarial = match f {
            AdversarialArg::LeastSquares => AdversarialForm::LeastSquares,
            AdversarialArg::Log => AdversarialForm::Log,
        };
    }
    if let Some(v) = a.tv_variant {
        t.tv_variant = match v {
            TvArg::Conventional => TvVariant::Conventional,
            TvArg::Literal => TvVariant::Literal,
        };
    }
    if let Some(f) = a.features {
        t.features.kind = match f {
            FeaturesArg::RandomPyramid => FeatureKind::RandomPyramid,
            FeaturesArg::Vgg19 => FeatureKind::Vgg19,
        };
    }
    if let Some(p) = &a.vgg19_path {
        t.features.vgg19_path = Some(p.clone());
    }
    t.validate()?;
    let data = a.data.clone().unwrap_or_else(|| cfg.out_root().join("data"));
    let out = a.out.clone().unwrap_or_else(|| cfg.out_root().join("train"));
    let manifest = DatasetManifest::load(&data)?;
    let seg_path = a
        .segmenter
        .clone()
        .or_else(|| Some(manifest.root.join(SEGMENTER_FILE)).filter(|p| p.is_file()));
    let segmenter = seg_path.as_deref().map(load_segmenter).transpose()?;
    if let Some(p) = &a.resume {
        if !p.is_file() {
            return Err(Error::io(p, std::io::ErrorKind::NotFound.into()));
        }
    }
    let opts = RunOptions {
        out_dir: out.clone(),
        resume: a.resume.clone(),
        stop_after: None,
        segmenter,
        skip_eval: a.skip_eval,
    };
    let summary = training::run(&cfg.training, &manifest, &opts, &mut ())?;
    cfg.training = summary.state.config.clone();
    cfg.echo(&out)?;
    println!("checkpoint {}", summary.checkpoint.display());
    println!("log {}", summary.log.display());
    if let Some(t) = &summary.val {
        print!("{t}");
    }
    Ok(())
}

fn cmd_eval(cfg: &AppConfig, a: &EvalArgs) -> Result<()> {
    let state = TrainState::load(&a.checkpoint)?;
    let data = a.data.clone().unwrap_or_else(|| cfg.out_root().join("data"));
    let out = a.out.clone().unwrap_or_else(|| cfg.out_root().join("eval"));
    let manifest = DatasetManifest::load(&data)?;
    let grids = out.join("grids");
    let mut write = |s: &training::SampleResult| {
        if a.no_grids {
            return Ok(());
        }
        grid_image(s)?.save(&grids.join(format!("{:06}.png", s.record.index)))
    };
    let table = evaluate_with(&state, &manifest, a.split, &mut write)?;
    let csv = out.join(format!("eval_{}.csv", a.split));
    table.write_csv(&csv)?;
    print!("{table}");
    println!("wrote {}", csv.display());
    Ok(())
}

fn cmd_restore(cfg: &AppConfig, a: &RestoreArgs) -> Result<()> {
    if a.seg.is_none() && !a.auto {
        return Err(Error::Config("restore needs --seg <labels.png> or --auto".into()));
    }
    let state = TrainState::load(&a.checkpoint)?;
    let img = Image::load(&a.input)?;
    let k = state.num_classes;
    let (soft, refined) = match &a.seg {
        Some(p) => {
            let labels = LabelMap::load(p, k)?;
            let soft = encode_labels(&labels, k)?;
            if a.refine {
                (refine(&state.g1, &soft, &img)?, true)
            } else {
                (soft, false)
            }
        }
        None => {
            let seg = state.segmenter.as_ref().ok_or_else(|| {
                Error::Config(format!("{} has no bundled segmenter; pass --seg", a.checkpoint.display()))
            })?;
            let s_d = encode_labels(&seg.segment(&img)?, k)?;
            (refine(&state.g1, &s_d, &img)?, true)
        }
    };
    let restored = restore(&state.g2, &soft, &img)?;
    let output = a.output.clone().unwrap_or_else(|| cfg.out_root().join("restored.png"));
    restored.save(&output)?;
    println!("restored {}", output.display());
    if refined {
        let seg_out = a.seg_output.clone().unwrap_or_else(|| {
            let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            output.with_file_name(format!("{stem}_seg.png"))
        });
        decode_labels(&soft).save(&seg_out)?;
        println!("refined segmentation {}", seg_out.display());
    }
    if let Some(r) = &a.reference {
        let reference = Image::load(r)?;
        println!(
            "PSNR input {:.2} dB, restored {:.2} dB",
            psnr(&img, &reference)?,
            psnr(&restored, &reference)?
        );
    }
    Ok(())
}
