//! Robustness sweep: train a small model, then measure open-set attribution
//! accuracy under each corruption kind at severities 0..=5 (0 = clean).
//!
//!     cargo run --release --example corruption_sweep

use gazeclip::commands::{cmd_corrupt_eval, cmd_synth, cmd_train};
use gazeclip::config::ModelConfig;
use gazeclip::corrupt::CorruptionKind;
use gazeclip::data::synth::SynthSpec;

fn main() -> gazeclip::Result<()> {
    let out = std::path::Path::new("target/examples-out/corruption_sweep");
    std::fs::create_dir_all(out)?;
    let manifest = out.join("manifest.tsv");
    cmd_synth(&SynthSpec::desk().scaled(120, 40), 7, &manifest, None)?;

    let mut cfg = ModelConfig::desk();
    cfg.epochs = 4;
    let run = out.join("run");
    cmd_train(&cfg, &manifest, &run, true)?;

    let cells = cmd_corrupt_eval(
        &run.join("checkpoint.gzclip"),
        &manifest,
        &CorruptionKind::ALL,
        &[0, 1, 2, 3, 4, 5],
        0.9,
        4,
        Some(&out.join("grid.tsv")),
    )?;

    println!("attribution ACC (%) by corruption kind and severity\n");
    print!("{:<10}", "kind");
    for s in 0..=5 {
        print!(" {s:>7}");
    }
    println!();
    for kind in CorruptionKind::ALL {
        print!("{:<10}", kind.to_string());
        for s in 0..=5 {
            let cell = cells
                .iter()
                .find(|c| c.kind == kind && c.severity == s)
                .unwrap();
            print!(" {:>6.1}%", 100.0 * cell.attribution_acc);
        }
        println!();
    }
    Ok(())
}
