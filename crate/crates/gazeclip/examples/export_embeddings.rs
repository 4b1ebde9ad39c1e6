//! Export the fused visual feature of every test sample as delimited text —
//! the raw material for external projection/clustering tools.
//!
//!     cargo run --release --example export_embeddings

use gazeclip::commands::{cmd_export_embeddings, cmd_synth, cmd_train};
use gazeclip::config::ModelConfig;
use gazeclip::data::synth::SynthSpec;

fn main() -> gazeclip::Result<()> {
    let out = std::path::Path::new("target/examples-out/export_embeddings");
    std::fs::create_dir_all(out)?;
    let manifest = out.join("manifest.tsv");
    cmd_synth(&SynthSpec::desk().scaled(100, 30), 7, &manifest, None)?;

    let mut cfg = ModelConfig::desk();
    cfg.epochs = 3;
    let run = out.join("run");
    cmd_train(&cfg, &manifest, &run, true)?;

    let tsv = out.join("embeddings.tsv");
    let rows = cmd_export_embeddings(&run.join("checkpoint.gzclip"), &manifest, &tsv, 4)?;
    println!("wrote {rows} rows to {}", tsv.display());
    let text = std::fs::read_to_string(&tsv)?;
    for line in text.lines().take(3) {
        let short: String = line.chars().take(100).collect();
        println!("{short}...");
    }
    Ok(())
}
