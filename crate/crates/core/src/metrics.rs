//! Segmentation scores from a confusion matrix, and full-reference image
//! quality (PSNR, SSIM).

use serde::{Deserialize, Serialize};

use crate::domain::{Image, LabelMap};
use crate::error::{Error, Result};

/// `counts[i][j]` = pixels with ground truth `i` predicted as `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != k * k {
            return Err(Error::ShapeMismatch(format!("{} counts for a {k}x{k} matrix", counts.len())));
        }
        Ok(Self { k, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i * self.k..(i + 1) * self.k].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, j)).sum()
    }

    /// Accumulate another pair of maps into this matrix.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        check_pair(pred, gt, self.k)?;
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            self.counts[g as usize * self.k + p as usize] += 1;
        }
        Ok(())
    }

    /// Entry-wise sum.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k {
            return Err(Error::ClassMismatch(format!("merging K={} into K={}", other.k, self.k)));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

fn check_pair(pred: &LabelMap, gt: &LabelMap, k: usize) -> Result<()> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    for (name, m) in [("prediction", pred), ("ground truth", gt)] {
        if let Some(&v) = m.data().iter().find(|&&v| v as usize >= k) {
            return Err(Error::OutOfRange(format!("{name} label {v} is not below K={k}")));
        }
    }
    Ok(())
}

pub fn confusion_matrix(pred: &LabelMap, gt: &LabelMap, k: usize) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(k);
    cm.accumulate(pred, gt)?;
    Ok(cm)
}

/// PA, mPA, mIoU and FWIoU.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegScores {
    pub pa: f64,
    pub mpa: f64,
    pub miou: f64,
    pub fwiou: f64,
}

/// Classes absent from both ground truth and prediction are left out of the
/// mPA and mIoU means.
pub fn seg_scores(cm: &ConfusionMatrix) -> Result<SegScores> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("confusion matrix is empty".into()));
    }
    let total = total as f64;
    let mut trace = 0.0;
    let (mut acc_sum, mut acc_n) = (0.0, 0usize);
    let (mut iou_sum, mut iou_n) = (0.0, 0usize);
    let mut fwiou = 0.0;
    for i in 0..cm.k {
        let tp = cm.get(i, i) as f64;
        let row = cm.row_sum(i) as f64;
        let col = cm.col_sum(i) as f64;
        trace += tp;
        if row > 0.0 {
            acc_sum += tp / row;
            acc_n += 1;
        }
        let union = row + col - tp;
        if union > 0.0 {
            let iou = tp / union;
            iou_sum += iou;
            iou_n += 1;
            fwiou += row / total * iou;
        }
    }
    Ok(SegScores {
        pa: trace / total,
        mpa: if acc_n > 0 { acc_sum / acc_n as f64 } else { 0.0 },
        miou: if iou_n > 0 { iou_sum / iou_n as f64 } else { 0.0 },
        fwiou,
    })
}

fn check_images(a: &Image, b: &Image) -> Result<()> {
    if !a.same_size(b) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_images(a, b)?;
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(s / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB for peak value 1.0.
///
/// Identical images yield `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / m).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn ssim_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut g: Vec<f64> = (-r..=r)
        .map(|x| (-(x * x) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Mean structural similarity over all valid 11×11 Gaussian windows,
/// computed per channel and averaged.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_images(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::ShapeMismatch(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let g = ssim_window();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for c in 0..3 {
        let x: Vec<f64> = (0..h * w).map(|p| a.data()[p * 3 + c] as f64).collect();
        let y: Vec<f64> = (0..h * w).map(|p| b.data()[p * 3 + c] as f64).collect();
        let fields = [
            x.clone(),
            y.clone(),
            x.iter().map(|v| v * v).collect::<Vec<_>>(),
            y.iter().map(|v| v * v).collect::<Vec<_>>(),
            x.iter().zip(&y).map(|(p, q)| p * q).collect::<Vec<_>>(),
        ];
        let filtered: Vec<Vec<f64>> = fields.iter().map(|f| filter_valid(f, h, w, &g)).collect();
        let mut sum = 0.0;
        for p in 0..oh * ow {
            let (mx, my) = (filtered[0][p], filtered[1][p]);
            let sxx = filtered[2][p] - mx * mx;
            let syy = filtered[3][p] - my * my;
            let sxy = filtered[4][p] - mx * my;
            sum += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
        }
        total += sum / (oh * ow) as f64;
    }
    Ok(total / 3.0)
}

/// Separable "valid" correlation with a symmetric 1-D window.
fn filter_valid(f: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|t| g[t] * f[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|t| g[t] * rows[(y + t) * ow + x]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lm(h: usize, w: usize, k: usize, d: Vec<u8>) -> LabelMap {
        LabelMap::new(h, w, k, d).unwrap()
    }

    #[test]
    fn perfect_prediction_gives_diagonal_and_unit_scores() {
        let m = lm(8, 8, 3, (0..64).map(|i| (i % 3) as u8).collect());
        let cm = confusion_matrix(&m, &m, 3).unwrap();
        assert_eq!((0..3).map(|i| cm.get(i, i)).sum::<u64>(), 64);
        let s = seg_scores(&cm).unwrap();
        assert_eq!((s.pa, s.mpa, s.miou, s.fwiou), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_counted_two_by_two_case() {
        let pred = LabelMap::from_raw_unchecked(2, 2, 2, vec![0, 0, 0, 0]);
        let gt = LabelMap::from_raw_unchecked(2, 2, 2, vec![0, 0, 1, 1]);
        let cm = confusion_matrix(&pred, &gt, 2).unwrap();
        assert_eq!(cm, ConfusionMatrix::from_counts(2, vec![2, 0, 2, 0]).unwrap());
        let s = seg_scores(&cm).unwrap();
        assert_eq!((s.pa, s.mpa, s.miou, s.fwiou), (0.5, 0.5, 0.25, 0.25));
    }

    #[test]
    fn absent_classes_are_excluded() {
        let m = lm(8, 8, 5, vec![1; 64]);
        let s = seg_scores(&confusion_matrix(&m, &m, 5).unwrap()).unwrap();
        assert_eq!(s.miou, 1.0);
        assert_eq!(s.mpa, 1.0);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        assert!(seg_scores(&ConfusionMatrix::new(3)).is_err());
    }

    #[test]
    fn shape_and_range_violations() {
        let a = lm(8, 8, 3, vec![0; 64]);
        let b = lm(8, 9, 3, vec![0; 72]);
        assert!(matches!(confusion_matrix(&a, &b, 3), Err(Error::ShapeMismatch(_))));
        let c = lm(8, 8, 4, vec![3; 64]);
        assert!(matches!(confusion_matrix(&c, &a, 3), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn psnr_of_identical_and_offset_images() {
        let a = Image::filled(16, 16, 0.25).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = Image::filled(16, 16, 0.25 + 16.0 / 255.0).unwrap();
        let expect = 20.0 * (255.0f64 / 16.0).log10();
        assert!((psnr(&a, &b).unwrap() - expect).abs() < 1e-4);
        assert!((expect - 24.05).abs() < 0.01);
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Image::new(24, 24, (0..24 * 24 * 3).map(|_| if rng.gen::<bool>() { 0.95 } else { 0.05 }).collect()).unwrap();
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let inv = Image::new(24, 24, a.data().iter().map(|v| 1.0 - v).collect()).unwrap();
        assert!(ssim(&a, &inv).unwrap() < 0.5);
        assert!(ssim(&Image::filled(8, 8, 0.5).unwrap(), &Image::filled(8, 8, 0.5).unwrap()).is_err());
    }

    #[test]
    fn ssim_of_constants_reduces_to_luminance_term() {
        let a = Image::filled(16, 16, 0.5).unwrap();
        let b = Image::filled(16, 16, 0.7).unwrap();
        let c1 = 0.01f64.powi(2);
        let (m1, m2) = (0.5f32 as f64, 0.7f32 as f64);
        let expect = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn scores_invariant_under_relabeling(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = 4;
            let pred: Vec<u8> = (0..64).map(|_| rng.gen_range(0..k) as u8).collect();
            let gt: Vec<u8> = (0..64).map(|_| rng.gen_range(0..k) as u8).collect();
            let perm = [2u8, 0, 3, 1];
            let s1 = seg_scores(&confusion_matrix(&lm(8, 8, k, pred.clone()), &lm(8, 8, k, gt.clone()), k).unwrap()).unwrap();
            let pp = pred.iter().map(|&v| perm[v as usize]).collect();
            let gp = gt.iter().map(|&v| perm[v as usize]).collect();
            let s2 = seg_scores(&confusion_matrix(&lm(8, 8, k, pp), &lm(8, 8, k, gp), k).unwrap()).unwrap();
            prop_assert!((s1.pa - s2.pa).abs() < 1e-12);
            prop_assert!((s1.mpa - s2.mpa).abs() < 1e-12);
            prop_assert!((s1.miou - s2.miou).abs() < 1e-12);
            prop_assert!((s1.fwiou - s2.fwiou).abs() < 1e-12);
        }

        #[test]
        fn confusion_matrix_is_additive(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let maps: Vec<(LabelMap, LabelMap)> = (0..3)
                .map(|_| {
                    let p = (0..64).map(|_| rng.gen_range(0..3u8)).collect();
                    let g = (0..64).map(|_| rng.gen_range(0..3u8)).collect();
                    (lm(8, 8, 3, p), lm(8, 8, 3, g))
                })
                .collect();
            let mut acc = ConfusionMatrix::new(3);
            let mut merged = ConfusionMatrix::new(3);
            for (p, g) in &maps {
                acc.accumulate(p, g).unwrap();
                merged.merge(&confusion_matrix(p, g, 3).unwrap()).unwrap();
            }
            prop_assert_eq!(acc, merged);
        }

        #[test]
        fn metrics_are_symmetric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Image::new(16, 16, (0..768).map(|_| rng.gen::<f32>()).collect()).unwrap();
            let b = Image::new(16, 16, (0..768).map(|_| rng.gen::<f32>()).collect()).unwrap();
            prop_assert!((psnr(&a, &b).unwrap() - psnr(&b, &a).unwrap()).abs() < 1e-9);
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn binary_pixel_accuracy_equals_agreement_fraction(agree in 1usize..=64) {
            let gt = lm(8, 8, 2, vec![1; 64]);
            let pred = lm(8, 8, 2, (0..64).map(|i| if i < agree { 1 } else { 0 }).collect());
            let s = seg_scores(&confusion_matrix(&pred, &gt, 2).unwrap()).unwrap();
            prop_assert_eq!(s.pa, agree as f64 / 64.0);
        }
    }
}
