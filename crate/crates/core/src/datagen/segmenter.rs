use std::path::Path;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::codec::{Reader, Writer};
use crate::domain::{ensure_parent, Image, LabelMap};
use crate::error::{Error, Result};
use crate::losses;
use crate::metrics::{seg_scores, ConfusionMatrix, SegScores};
use crate::networks::{images_to_tensor, label_indices, Adam, Segmenter};

const MAGIC: &[u8; 8] = b"SGRSSEG1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmenterConfig {
    pub width: usize,
    pub levels: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            width: 8,
            levels: 4,
            batch_size: 8,
            lr: 2e-3,
            epochs: 6,
            seed: 0,
        }
    }
}

/// Train a segmenter on clean pairs with cross-entropy and Adam. With zero
/// epochs the freshly initialized network is returned.
pub fn train_clean_segmenter(pairs: &[(Image, LabelMap)], cfg: &SegmenterConfig) -> Result<Segmenter> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training pairs for the segmenter".into()))?;
    let k = first.1.num_classes();
    if cfg.batch_size == 0 {
        return Err(Error::Config("segmenter batch_size must be positive".into()));
    }
    let mut seg = Segmenter::new(k, cfg.width, cfg.levels, cfg.seed);
    let mut opt = Adam::new(seg.net.params(), cfg.lr, (0.9, 0.999));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5e9);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut iteration = 0u64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            iteration += 1;
            let imgs: Vec<&Image> = chunk.iter().map(|&i| &pairs[i].0).collect();
            let labels: Vec<&LabelMap> = chunk.iter().map(|&i| &pairs[i].1).collect();
            let mut g = Graph::<f32>::new();
            let p = seg.net.params().bind(&mut g, true);
            let x = g.constant(images_to_tensor(&imgs)?);
            let probs = seg.forward(&mut g, &p, x);
            let loss = losses::refinement(&mut g, probs, &label_indices(&labels));
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    stage: 0,
                    iteration,
                    report: format!("segmenter cross-entropy {value}"),
                });
            }
            let grads = g.backward(loss);
            let gs = p.grads(&grads, seg.net.params());
            opt.update(seg.net.params_mut(), &gs);
            total += value as f64;
            batches += 1;
        }
        debug!("segmenter epoch {epoch}: mean loss {:.4}", total / batches.max(1) as f64);
    }
    Ok(seg)
}

/// Hard segmentation of a (typically degraded) image.
pub fn produce_degraded_segmentation(seg: &Segmenter, degraded: &Image) -> Result<LabelMap> {
    let m = seg.net.config().stride_multiple();
    if degraded.height() < m || degraded.width() < m {
        return Err(Error::ShapeMismatch(format!(
            "image {}x{} below segmenter minimum {m}",
            degraded.height(),
            degraded.width()
        )));
    }
    seg.segment(degraded)
}

/// Pooled segmentation scores of `seg` over `pairs`.
pub fn evaluate_segmenter(seg: &Segmenter, pairs: &[(Image, LabelMap)]) -> Result<SegScores> {
    let mut cm = ConfusionMatrix::new(seg.num_classes());
    for (img, gt) in pairs {
        cm.accumulate(&seg.segment(img)?, gt)?;
    }
    seg_scores(&cm)
}

pub fn encode_segmenter(seg: &Segmenter, w: &mut Writer) {
    let c = seg.net.config();
    w.u32(c.out_channels as u32);
    w.u32(c.base_width as u32);
    w.u32(c.levels as u32);
    w.params(seg.net.params());
}

pub fn decode_segmenter(r: &mut Reader<'_>) -> Result<Segmenter> {
    let k = r.u32()? as usize;
    let width = r.u32()? as usize;
    let levels = r.u32()? as usize;
    if !(2..=16).contains(&k) || width == 0 || width > 1024 || !(2..=8).contains(&levels) {
        return Err(Error::Format(format!("segmenter header k={k} width={width} levels={levels}")));
    }
    let mut seg = Segmenter::new(k, width, levels, 0);
    r.params_into(seg.net.params_mut())?;
    Ok(seg)
}

pub fn save_segmenter(seg: &Segmenter, path: &Path) -> Result<()> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    encode_segmenter(seg, &mut w);
    ensure_parent(path)?;
    std::fs::write(path, w.into_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_segmenter(path: &Path) -> Result<Segmenter> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&bytes);
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format(format!("{} is not a segmenter file", path.display())));
    }
    let seg = decode_segmenter(&mut r)?;
    if !r.is_done() {
        return Err(Error::Format(format!("trailing bytes in {}", path.display())));
    }
    Ok(seg)
}
