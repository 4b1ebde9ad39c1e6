//! Verify every trainable parameter group of the desk model against central
//! finite differences at 64-bit precision. Frozen backbone weights are
//! listed and skipped.
//!
//!     cargo run --release --example grad_check

use gazeclip::commands::cmd_grad_check;
use gazeclip::config::ModelConfig;

fn main() -> gazeclip::Result<()> {
    let report = cmd_grad_check(&ModelConfig::desk())?;
    for (group, worst) in report.group_worst() {
        println!("{group:<16} worst relative error {worst:.3e}");
    }
    println!(
        "\nworst overall {:.3e} in {:.1}s — {}",
        report.worst,
        report.elapsed_secs,
        if report.passed(1e-4) { "PASS" } else { "FAIL" }
    );
    Ok(())
}
