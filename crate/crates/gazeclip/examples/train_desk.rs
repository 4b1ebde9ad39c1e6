//! Train the desk-scale model end to end on synthetic data and save a
//! checkpoint. Prints one metrics line per epoch.
//!
//!     cargo run --release --example train_desk

use gazeclip::commands::{cmd_synth, cmd_train};
use gazeclip::config::ModelConfig;
use gazeclip::data::synth::SynthSpec;

fn main() -> gazeclip::Result<()> {
    let out = std::path::Path::new("target/examples-out/train_desk");
    std::fs::create_dir_all(out)?;
    let manifest = out.join("manifest.tsv");
    cmd_synth(&SynthSpec::desk().scaled(200, 50), 7, &manifest, None)?;

    let mut cfg = ModelConfig::desk();
    cfg.epochs = 5;
    let artifacts = cmd_train(&cfg, &manifest, &out.join("run"), false)?;
    println!("\n{}", artifacts.record.to_text());
    println!(
        "final batch accuracy {:.1}% over {} steps",
        100.0 * artifacts.metrics.last().map(|m| m.batch_acc).unwrap_or(0.0),
        artifacts.record.steps
    );
    Ok(())
}
