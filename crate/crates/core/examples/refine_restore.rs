//! Build G1 and G2 and push one degraded sample through refinement and
//! restoration. The networks are untrained, so this shows the data flow and
//! the shapes involved rather than quality.
//!
//! cargo run --release --example refine_restore [OUT_DIR]

use std::path::PathBuf;

use segrestore::datagen::{generate_toy_dataset, train_clean_segmenter, SegmenterConfig, ToyDatasetConfig};
use segrestore::degradations::{apply, DegradationSpec, Family};
use segrestore::domain::{decode_labels, encode_labels};
use segrestore::networks::{refine, restore, ArchConfig, RefinementNet, RestorationNet};
use segrestore::training::colorize;

fn main() -> segrestore::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("segrestore-refine"));
    let cfg = ToyDatasetConfig {
        n_samples: 60,
        val_samples: 0,
        ..Default::default()
    };
    let pairs = generate_toy_dataset(&cfg)?;
    let seg = train_clean_segmenter(&pairs, &SegmenterConfig { epochs: 2, ..Default::default() })?;
    let (clean, _) = &pairs[0];
    let degraded = apply(&DegradationSpec::at_severity(Family::GaussianNoise, 1, 3)?, clean, None)?;
    let s_d = seg.segment(&degraded)?;

    let arch = ArchConfig::default();
    let k = cfg.num_classes;
    let g1 = RefinementNet::new(k, &arch, 1);
    let g2 = RestorationNet::new(k, &arch, 2);
    println!("G1 {} parameters, G2 {} parameters", g1.net.params().numel(), g2.net.params().numel());

    let s_r = refine(&g1, &encode_labels(&s_d, k)?, &degraded)?;
    let restored = restore(&g2, &s_r, &degraded)?;
    println!(
        "S_r {}x{}x{}, I_r {}x{}",
        s_r.height(),
        s_r.width(),
        s_r.num_classes(),
        restored.height(),
        restored.width()
    );
    degraded.save(&out.join("degraded.png"))?;
    colorize(&s_d).save(&out.join("seg_degraded.png"))?;
    colorize(&decode_labels(&s_r)).save(&out.join("seg_refined.png"))?;
    restored.save(&out.join("restored.png"))?;
    println!("images in {}", out.display());
    Ok(())
}
