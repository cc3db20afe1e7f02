//! Segmentation scores from a confusion matrix and image fidelity metrics.
//!
//! cargo run --example metrics

use segrestore::domain::{Image, LabelMap};
use segrestore::metrics::{confusion_matrix, psnr, seg_scores, ssim};

fn main() -> segrestore::Result<()> {
    let gt = LabelMap::new(4, 4, 3, vec![0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2])?;
    let pred = LabelMap::new(4, 4, 3, vec![0, 0, 1, 1, 0, 1, 1, 1, 2, 2, 0, 2, 2, 2, 2, 1])?;
    let cm = confusion_matrix(&pred, &gt, 3)?;
    for i in 0..3 {
        println!("gt {i}: {:?}", (0..3).map(|j| cm.get(i, j)).collect::<Vec<_>>());
    }
    let s = seg_scores(&cm)?;
    println!("PA {:.4}  mPA {:.4}  mIoU {:.4}  FWIoU {:.4}", s.pa, s.mpa, s.miou, s.fwiou);

    let a = Image::from_fn(64, 64, |h, w, c| ((h + 2 * w + 40 * c) % 64) as f32 / 80.0)?;
    let shifted = Image::from_clamped(64, 64, a.data().iter().map(|v| v + 16.0 / 255.0).collect())?;
    println!("PSNR of a 16/255 offset: {:.2} dB", psnr(&shifted, &a)?);
    println!("SSIM of the offset: {:.4}, of the image with itself: {:.4}", ssim(&shifted, &a)?, ssim(&a, &a)?);
    Ok(())
}
