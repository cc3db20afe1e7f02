use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::segmenter::produce_degraded_segmentation;
use super::shapes::{generate_toy_dataset, Split, ToyDatasetConfig};
use crate::degradations::{apply, DegradationParams, DegradationSpec};
use crate::domain::{ensure_parent, validate_sample, Image, LabelMap, QuadrupleSample};
use crate::error::{Error, Result};
use crate::networks::Segmenter;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SUBDIRS: [&str; 4] = ["degraded", "degraded_seg", "gt_image", "gt_seg"];

/// One line of the manifest. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub index: usize,
    pub split: Split,
    /// Index of the clean pair this record was derived from.
    pub source: usize,
    pub num_classes: usize,
    pub degraded: String,
    pub degraded_seg: String,
    pub gt_image: String,
    pub gt_seg: String,
    pub degradation: DegradationSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    /// Read `manifest.jsonl` from `path`, which may name the file or its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let f = std::fs::File::open(&file).map_err(|e| Error::io(&file, e))?;
        let mut records = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&file, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", file.display(), n + 1)))?;
            records.push(rec);
        }
        let m = Self { root, records };
        m.check_splits()?;
        Ok(m)
    }

    pub fn save(&self) -> Result<PathBuf> {
        let file = self.root.join(MANIFEST_FILE);
        ensure_parent(&file)?;
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(|e| Error::Format(e.to_string()))?;
            out.push(b'\n');
        }
        let mut f = std::fs::File::create(&file).map_err(|e| Error::io(&file, e))?;
        f.write_all(&out).map_err(|e| Error::io(&file, e))?;
        Ok(file)
    }

    pub fn num_classes(&self) -> Result<usize> {
        let k = self
            .records
            .first()
            .map(|r| r.num_classes)
            .ok_or_else(|| Error::Format("empty manifest".into()))?;
        if self.records.iter().any(|r| r.num_classes != k) {
            return Err(Error::ClassMismatch("records disagree on the class count".into()));
        }
        Ok(k)
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    /// Splits must not share clean sources.
    pub fn check_splits(&self) -> Result<()> {
        let mut owner: HashMap<usize, Split> = HashMap::new();
        for r in &self.records {
            if let Some(&s) = owner.get(&r.source) {
                if s != r.split {
                    return Err(Error::Format(format!(
                        "clean sample {} appears in both {s} and {} splits",
                        r.source, r.split
                    )));
                }
            } else {
                owner.insert(r.source, r.split);
            }
        }
        Ok(())
    }

    /// Every referenced file exists.
    pub fn check_files(&self) -> Result<()> {
        for r in &self.records {
            for rel in [&r.degraded, &r.degraded_seg, &r.gt_image, &r.gt_seg] {
                let p = self.root.join(rel);
                if !p.is_file() {
                    return Err(Error::io(p, std::io::ErrorKind::NotFound.into()));
                }
            }
        }
        Ok(())
    }

    pub fn load_sample(&self, r: &ManifestRecord) -> Result<QuadrupleSample> {
        let k = r.num_classes;
        validate_sample(QuadrupleSample {
            degraded: Image::load(&self.root.join(&r.degraded))?,
            degraded_seg: LabelMap::load(&self.root.join(&r.degraded_seg), k)?,
            gt_image: Image::load(&self.root.join(&r.gt_image))?,
            gt_seg: LabelMap::load(&self.root.join(&r.gt_seg), k)?,
            degradation: r.degradation.clone(),
        })
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<QuadrupleSample>> {
        let recs = self.split(split);
        if recs.is_empty() {
            return Err(Error::InvalidArgument(format!("split {split} is absent from the manifest")));
        }
        recs.into_iter().map(|r| self.load_sample(r)).collect()
    }
}

/// Per-record seed derived from a spec seed and the clean index.
pub fn record_seed(base: u64, source: usize) -> u64 {
    let mut z = base ^ (source as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Degrade every clean pair with every spec, segment the result, and write
/// files plus the manifest under `out_dir`. Record `i * specs.len() + j` pairs
/// clean sample `i` with spec `j`.
pub fn build_from_pairs(
    pairs: &[(Image, LabelMap)],
    splits: &[Split],
    specs: &[DegradationSpec],
    seg: &Segmenter,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if pairs.len() != splits.len() {
        return Err(Error::InvalidArgument("one split tag per clean pair".into()));
    }
    if specs.is_empty() {
        return Err(Error::InvalidArgument("at least one degradation spec is required".into()));
    }
    let k = seg.num_classes();
    if let Some((_, l)) = pairs.iter().find(|(_, l)| l.num_classes() != k) {
        return Err(Error::ClassMismatch(format!(
            "segmenter predicts {k} classes, corpus has {}",
            l.num_classes()
        )));
    }
    for d in SUBDIRS {
        let p = out_dir.join(d);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut records = Vec::with_capacity(pairs.len() * specs.len());
    for (i, (gt_image, gt_seg)) in pairs.iter().enumerate() {
        for (j, base) in specs.iter().enumerate() {
            let index = i * specs.len() + j;
            let spec = DegradationSpec {
                seed: record_seed(base.seed, i),
                ..base.clone()
            };
            let aux = matches!(spec.params, DegradationParams::Reflection { .. })
                .then(|| &pairs[(i + 1) % pairs.len()].0);
            let degraded = apply(&spec, gt_image, aux)?;
            // S_d is computed from the image as it will be read back.
            let degraded = Image::from_rgb8(&degraded.to_rgb8())?;
            let degraded_seg = produce_degraded_segmentation(seg, &degraded)?;
            let name = format!("{index:06}.png");
            let rel = |d: &str| format!("{d}/{name}");
            degraded.save(&out_dir.join(rel("degraded")))?;
            degraded_seg.save(&out_dir.join(rel("degraded_seg")))?;
            gt_image.save(&out_dir.join(rel("gt_image")))?;
            gt_seg.save(&out_dir.join(rel("gt_seg")))?;
            records.push(ManifestRecord {
                index,
                split: splits[i],
                source: i,
                num_classes: k,
                degraded: rel("degraded"),
                degraded_seg: rel("degraded_seg"),
                gt_image: rel("gt_image"),
                gt_seg: rel("gt_seg"),
                degradation: spec,
            });
        }
    }
    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        records,
    };
    manifest.check_splits()?;
    let file = manifest.save()?;
    info!("wrote {} records to {}", manifest.records.len(), file.display());
    Ok(manifest)
}

/// Generate the shapes corpus for `cfg` and materialize the degraded dataset.
pub fn build_dataset(
    cfg: &ToyDatasetConfig,
    specs: &[DegradationSpec],
    seg: &Segmenter,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let pairs = generate_toy_dataset(cfg)?;
    let splits: Vec<Split> = (0..pairs.len()).map(|i| cfg.split_of(i)).collect();
    build_from_pairs(&pairs, &splits, specs, seg, out_dir)
}
