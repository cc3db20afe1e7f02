use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::state::TrainState;
use crate::datagen::{DatasetManifest, ManifestRecord, Split};
use crate::domain::{decode_labels, encode_labels, ensure_parent, Image, LabelMap};
use crate::error::{Error, Result};
use crate::metrics::{psnr, seg_scores, ssim, ConfusionMatrix, SegScores};
use crate::networks::{refine, restore};

pub const CSV_COLUMNS: [&str; 8] = ["family", "severity", "PA", "mPA", "mIoU", "FWIoU", "PSNR", "SSIM"];

/// Suffix marking the refined/restored row of a pair.
pub const REFINED_SUFFIX: &str = "_Re";

/// Everything produced for one evaluated record.
#[derive(Clone, Debug)]
pub struct SampleResult {
    pub record: ManifestRecord,
    pub degraded: Image,
    pub degraded_seg: LabelMap,
    pub refined_seg: LabelMap,
    pub restored: Image,
    pub gt_image: Image,
    pub gt_seg: LabelMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub family: String,
    pub severity: String,
    pub scores: SegScores,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
}

#[derive(Clone, Debug)]
struct Group {
    family: String,
    severity: String,
    cm_d: ConfusionMatrix,
    cm_r: ConfusionMatrix,
    psnr_d: Vec<f64>,
    psnr_r: Vec<f64>,
    ssim_d: Vec<f64>,
    ssim_r: Vec<f64>,
}

impl Group {
    fn new(family: String, severity: String, k: usize) -> Self {
        Self {
            family,
            severity,
            cm_d: ConfusionMatrix::new(k),
            cm_r: ConfusionMatrix::new(k),
            psnr_d: Vec::new(),
            psnr_r: Vec::new(),
            ssim_d: Vec::new(),
            ssim_r: Vec::new(),
        }
    }

    fn rows(&self) -> Result<[EvalRow; 2]> {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Ok([
            EvalRow {
                family: self.family.clone(),
                severity: self.severity.clone(),
                scores: seg_scores(&self.cm_d)?,
                psnr: mean(&self.psnr_d),
                ssim: mean(&self.ssim_d),
            },
            EvalRow {
                family: format!("{}{REFINED_SUFFIX}", self.family),
                severity: self.severity.clone(),
                scores: seg_scores(&self.cm_r)?,
                psnr: mean(&self.psnr_r),
                ssim: mean(&self.ssim_r),
            },
        ])
    }
}

/// Pools per-sample results into paired rows per family and severity, plus
/// an `ALL` pair over every sample. Segmentation scores come from one pooled
/// confusion matrix per row; PSNR and SSIM are per-sample means.
#[derive(Clone, Debug)]
pub struct EvalAccumulator {
    num_classes: usize,
    groups: Vec<Group>,
    all: Group,
}

impl EvalAccumulator {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            groups: Vec::new(),
            all: Group::new("ALL".into(), "*".into(), num_classes),
        }
    }

    pub fn add(&mut self, s: &SampleResult) -> Result<()> {
        let family = s.record.degradation.family().short_name().to_uppercase();
        let severity = s.record.degradation.severity.to_string();
        let k = self.num_classes;
        let pos = match self.groups.iter().position(|g| g.family == family && g.severity == severity) {
            Some(p) => p,
            None => {
                self.groups.push(Group::new(family, severity, k));
                self.groups.len() - 1
            }
        };
        let pd = psnr(&s.degraded, &s.gt_image)?;
        let pr = psnr(&s.restored, &s.gt_image)?;
        let sd = ssim(&s.degraded, &s.gt_image)?;
        let sr = ssim(&s.restored, &s.gt_image)?;
        for g in [&mut self.groups[pos], &mut self.all] {
            g.cm_d.accumulate(&s.degraded_seg, &s.gt_seg)?;
            g.cm_r.accumulate(&s.refined_seg, &s.gt_seg)?;
            g.psnr_d.push(pd);
            g.psnr_r.push(pr);
            g.ssim_d.push(sd);
            g.ssim_r.push(sr);
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<EvalTable> {
        if self.all.psnr_d.is_empty() {
            return Err(Error::InvalidArgument("no samples were evaluated".into()));
        }
        let mut rows = Vec::with_capacity(2 * self.groups.len() + 2);
        for g in self.groups.iter().chain(std::iter::once(&self.all)) {
            rows.extend(g.rows()?);
        }
        Ok(EvalTable { rows })
    }
}

impl EvalTable {
    pub fn row(&self, family: &str, severity: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.family == family && r.severity == severity)
    }

    /// The `(degraded, refined)` rows pooled over every sample.
    pub fn overall(&self) -> Option<(&EvalRow, &EvalRow)> {
        Some((self.row("ALL", "*")?, self.row("ALL_Re", "*")?))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
        w.write_record(CSV_COLUMNS).map_err(err)?;
        for r in &self.rows {
            let s = &r.scores;
            w.write_record([
                r.family.clone(),
                r.severity.clone(),
                format!("{:.6}", s.pa),
                format!("{:.6}", s.mpa),
                format!("{:.6}", s.miou),
                format!("{:.6}", s.fwiou),
                format!("{:.4}", r.psnr),
                format!("{:.6}", r.ssim),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for EvalTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>8} {:>7} {:>7} {:>7} {:>7} {:>8} {:>7}",
            CSV_COLUMNS[0], CSV_COLUMNS[1], CSV_COLUMNS[2], CSV_COLUMNS[3], CSV_COLUMNS[4], CSV_COLUMNS[5],
            CSV_COLUMNS[6], CSV_COLUMNS[7]
        )?;
        for r in &self.rows {
            let s = &r.scores;
            writeln!(
                f,
                "{:<8} {:>8} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>8.2} {:>7.4}",
                r.family, r.severity, s.pa, s.mpa, s.miou, s.fwiou, r.psnr, r.ssim
            )?;
        }
        Ok(())
    }
}

/// Run G1 then G2 on one record. G2 receives the soft refined map.
pub fn run_sample(state: &TrainState, manifest: &DatasetManifest, record: &ManifestRecord) -> Result<SampleResult> {
    if record.num_classes != state.num_classes {
        return Err(Error::ClassMismatch(format!(
            "checkpoint has {} classes, record {} has {}",
            state.num_classes, record.index, record.num_classes
        )));
    }
    let s = manifest.load_sample(record)?;
    let soft_d = encode_labels(&s.degraded_seg, state.num_classes)?;
    let soft_r = refine(&state.g1, &soft_d, &s.degraded)?;
    let restored = restore(&state.g2, &soft_r, &s.degraded)?;
    Ok(SampleResult {
        record: record.clone(),
        refined_seg: decode_labels(&soft_r),
        restored,
        degraded: s.degraded,
        degraded_seg: s.degraded_seg,
        gt_image: s.gt_image,
        gt_seg: s.gt_seg,
    })
}

/// Evaluate `split`, handing every sample to `on_sample` as it is produced.
pub fn evaluate_with(
    state: &TrainState,
    manifest: &DatasetManifest,
    split: Split,
    on_sample: &mut dyn FnMut(&SampleResult) -> Result<()>,
) -> Result<EvalTable> {
    let records = manifest.split(split);
    if records.is_empty() {
        return Err(Error::InvalidArgument(format!("split {split} is absent from the manifest")));
    }
    let mut acc = EvalAccumulator::new(state.num_classes);
    for r in records {
        let s = run_sample(state, manifest, r)?;
        acc.add(&s)?;
        on_sample(&s)?;
    }
    acc.finish()
}

pub fn evaluate(state: &TrainState, manifest: &DatasetManifest, split: Split) -> Result<EvalTable> {
    evaluate_with(state, manifest, split, &mut |_| Ok(()))
}

const PALETTE: [[u8; 3]; 8] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [255, 225, 25],
    [145, 30, 180],
    [245, 130, 48],
    [70, 240, 240],
];

/// Color-coded rendering of a label map.
pub fn colorize(labels: &LabelMap) -> Image {
    let (h, w) = (labels.height(), labels.width());
    let mut data = Vec::with_capacity(h * w * 3);
    for &c in labels.data() {
        let rgb = PALETTE[c as usize % PALETTE.len()];
        data.extend(rgb.iter().map(|&v| v as f32 / 255.0));
    }
    Image::new(h, w, data).expect("palette values lie in [0, 1]")
}

const GRID_GAP: usize = 2;

/// Panels side by side with white gaps: `I_d | S_d | S_r | I_r | I_gt`.
pub fn grid_image(s: &SampleResult) -> Result<Image> {
    let panels = [
        s.degraded.clone(),
        colorize(&s.degraded_seg),
        colorize(&s.refined_seg),
        s.restored.clone(),
        s.gt_image.clone(),
    ];
    if panels.iter().any(|p| !p.same_size(&panels[0])) {
        return Err(Error::ShapeMismatch("grid panels differ in size".into()));
    }
    let (h, w) = (panels[0].height(), panels[0].width());
    let total_w = panels.len() * w + (panels.len() - 1) * GRID_GAP;
    let mut data = vec![1.0f32; h * total_w * 3];
    for (i, p) in panels.iter().enumerate() {
        let x0 = i * (w + GRID_GAP);
        for y in 0..h {
            let src = &p.data()[y * w * 3..(y + 1) * w * 3];
            let dst = (y * total_w + x0) * 3;
            data[dst..dst + w * 3].copy_from_slice(src);
        }
    }
    Image::new(h, total_w, data)
}
