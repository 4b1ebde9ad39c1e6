//! The ablation surface: every architectural toggle changes the executed
//! graph. This prints parameter counts and attention work for the module
//! on/off switches, the selector, the LoRA count, and the query mode.
//!
//!     cargo run --example ablation_toggles

use gazeclip::config::{ModelConfig, Precision, QueryMode};
use gazeclip::model::build_store;
use gazeclip::tensor::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn counts(cfg: &ModelConfig) -> (usize, usize) {
    let store = build_store(cfg, Some(64), 1).expect("store");
    (store.scalar_count(true), store.scalar_count(false))
}

fn main() -> gazeclip::Result<()> {
    let base = ModelConfig::desk();
    println!("{:<28} {:>12} {:>12}", "configuration", "trainable", "total");
    let show = |label: &str, cfg: &ModelConfig| {
        let (t, a) = counts(cfg);
        println!("{label:<28} {t:>12} {a:>12}");
    };
    show("desk (all modules)", &base);

    let mut c = base.clone();
    c.gaze_enabled = false;
    show("w/o gaze encoder", &c);

    let mut c = base.clone();
    c.agpm_enabled = false;
    show("w/o appearance module", &c);

    let mut c = base.clone();
    c.gie_enabled = false;
    show("w/o image encoder", &c);

    let mut c = base.clone();
    c.lre_enabled = false;
    let store = build_store(&c, None, 1)?;
    println!(
        "{:<28} {:>12} {:>12}",
        "w/o language encoder",
        store.scalar_count(true),
        store.scalar_count(false)
    );

    let mut c = base.clone();
    c.lre_aws_enabled = false;
    show("w/o word selector", &c);
    println!(
        "  -> selector adds exactly L*t = {} parameters",
        base.lre_blocks * base.lre_tokens
    );

    for k in 1..=4 {
        let mut c = base.clone();
        c.gie_lora_blocks = k;
        show(&format!("image-encoder LoRA x{k}"), &c);
    }

    // Query-mode ablation: attention work inside the gaze injector.
    println!("\ngaze-injector attention work (softmax logits per forward):");
    let store = build_store(&base, Some(64), 2)?;
    for mode in [QueryMode::Cls, QueryMode::Patch, QueryMode::All] {
        let mut cfg = base.clone();
        cfg.gie_query_mode = mode;
        let mut g = Graph::new(Precision::F64);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tokens: Vec<f64> = (0..(cfg.patches + 1) * cfg.dim_image)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let t = g.constant(tokens, vec![cfg.patches + 1, cfg.dim_image])?;
        let gz: Vec<f64> = (0..cfg.dim_image).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gz = g.constant(gz, vec![1, cfg.dim_image])?;
        gazeclip::gie::gaze_injector(&mut g, &store, &cfg, "gie.block0.gi", t, gz)?;
        println!("  query {:<6} -> {:>4} logits", mode.to_string(), g.softmax_elements());
    }
    Ok(())
}
