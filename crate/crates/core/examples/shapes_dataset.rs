//! Generate the synthetic shapes corpus and materialize a degraded dataset
//! with a clean-trained segmenter providing S_d.
//!
//! cargo run --release --example shapes_dataset [OUT_DIR]

use std::path::PathBuf;

use segrestore::datagen::{build_dataset, generate_toy_dataset, train_clean_segmenter, SegmenterConfig, Split, ToyDatasetConfig};
use segrestore::degradations::{DegradationSpec, Family};

fn main() -> segrestore::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("segrestore-shapes"));
    let cfg = ToyDatasetConfig {
        n_samples: 120,
        val_samples: 20,
        ..Default::default()
    };
    let pairs = generate_toy_dataset(&cfg)?;
    let mut counts = vec![0usize; cfg.num_classes];
    for (_, labels) in &pairs {
        for &c in labels.data() {
            counts[c as usize] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    for (c, n) in counts.iter().enumerate() {
        println!("class {c}: {:.1}% of pixels", 100.0 * *n as f64 / total as f64);
    }

    let train: Vec<_> = pairs
        .iter()
        .enumerate()
        .filter(|(i, _)| cfg.split_of(*i) == Split::Train)
        .map(|(_, p)| p.clone())
        .collect();
    let seg = train_clean_segmenter(&train, &SegmenterConfig { epochs: 2, ..Default::default() })?;
    let specs = [
        DegradationSpec::at_severity(Family::GaussianBlur, 1, 1)?,
        DegradationSpec::at_severity(Family::JpegCompression, 2, 2)?,
    ];
    let manifest = build_dataset(&cfg, &specs, &seg, &out)?;
    println!(
        "{} records ({} train, {} val) under {}",
        manifest.records.len(),
        manifest.split(Split::Train).len(),
        manifest.split(Split::Val).len(),
        out.display()
    );
    Ok(())
}
