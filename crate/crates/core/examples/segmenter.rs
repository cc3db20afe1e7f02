//! Train the clean-condition segmenter and show how each degradation family
//! erodes its predictions.
//!
//! cargo run --release --example segmenter

use segrestore::datagen::{evaluate_segmenter, generate_toy_dataset, train_clean_segmenter, SegmenterConfig, Split, ToyDatasetConfig};
use segrestore::degradations::{apply, DegradationSpec, Family};
use segrestore::domain::{Image, LabelMap};

fn main() -> segrestore::Result<()> {
    let cfg = ToyDatasetConfig {
        n_samples: 240,
        val_samples: 40,
        ..Default::default()
    };
    let pairs = generate_toy_dataset(&cfg)?;
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, p) in pairs.into_iter().enumerate() {
        match cfg.split_of(i) {
            Split::Train => train.push(p),
            _ => val.push(p),
        }
    }
    let seg = train_clean_segmenter(&train, &SegmenterConfig::default())?;
    let clean = evaluate_segmenter(&seg, &val)?;
    println!("{:<10} mIoU {:.4}  PA {:.4}", "clean", clean.miou, clean.pa);

    for family in Family::ALL {
        let spec = DegradationSpec::at_severity(family, 1, 5)?;
        let degraded: Vec<(Image, LabelMap)> = val
            .iter()
            .enumerate()
            .map(|(i, (img, labels))| {
                let layer = &val[(i + 1) % val.len()].0;
                Ok((apply(&spec, img, Some(layer))?, labels.clone()))
            })
            .collect::<segrestore::Result<_>>()?;
        let s = evaluate_segmenter(&seg, &degraded)?;
        println!("{:<10} mIoU {:.4}  PA {:.4}", family.short_name(), s.miou, s.pa);
    }
    Ok(())
}
