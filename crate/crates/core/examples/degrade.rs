//! Apply every degradation family at every severity to one synthetic scene.
//!
//! cargo run --example degrade [OUT_DIR]

use std::path::PathBuf;

use segrestore::datagen::{generate_toy_dataset, ToyDatasetConfig};
use segrestore::degradations::{apply, DegradationSpec, Family, SEVERITY_LEVELS};
use segrestore::metrics::{psnr, ssim};

fn main() -> segrestore::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("segrestore-degrade"));
    let cfg = ToyDatasetConfig {
        n_samples: 2,
        val_samples: 0,
        image_size: 96,
        ..Default::default()
    };
    let pairs = generate_toy_dataset(&cfg)?;
    let (clean, reflection) = (&pairs[0].0, &pairs[1].0);
    clean.save(&out.join("clean.png"))?;

    println!("{:<28} {:>8} {:>7}", "spec", "PSNR", "SSIM");
    for family in Family::ALL {
        for severity in 0..SEVERITY_LEVELS {
            let spec = DegradationSpec::at_severity(family, severity, 7)?;
            let degraded = apply(&spec, clean, Some(reflection))?;
            degraded.save(&out.join(format!("{}_{severity}.png", family.short_name())))?;
            println!(
                "{:<28} {:>8.2} {:>7.4}",
                spec.tag(),
                psnr(&degraded, clean)?,
                ssim(&degraded, clean)?
            );
        }
    }
    println!("images in {}", out.display());
    Ok(())
}
