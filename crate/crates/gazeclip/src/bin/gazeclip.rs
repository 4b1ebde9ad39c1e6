//! Thin command-line front end. All logic lives in the library; this binary
//! parses flags, dispatches, and maps errors to exit codes
//! (0 ok, 2 data error, 3 protocol error, 4 verification failure).

use clap::{Args, Parser, Subcommand};
use gazeclip::commands;
use gazeclip::config::{ModelConfig, Precision};
use gazeclip::corrupt::CorruptionKind;
use gazeclip::data::synth::SynthSpec;
use gazeclip::error::{Error, Result, EXIT_VERIFICATION_FAILURE};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gazeclip", version, about = "Gaze-guided deepfake attribution and detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Model/run configuration file (flat dotted keys). Desk preset if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config precision.
    #[arg(long, value_parser = parse_precision)]
    precision: Option<Precision>,
}

fn parse_precision(s: &str) -> std::result::Result<Precision, String> {
    match s {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        _ => Err(format!("unknown precision `{s}` (expected f32 or f64)")),
    }
}

impl ConfigArgs {
    fn load(&self) -> Result<ModelConfig> {
        let mut cfg = match &self.config {
            Some(path) => ModelConfig::from_text(&std::fs::read_to_string(path)?)?,
            None => ModelConfig::desk(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(precision) = self.precision {
            cfg.precision = precision;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a preset configuration file.
    Config {
        /// Preset name: desk or paper.
        #[arg(long, default_value = "desk")]
        preset: String,
        /// Output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic benchmark manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        seen: usize,
        #[arg(long, default_value_t = 2)]
        unseen: usize,
        #[arg(long, default_value_t = 500)]
        train_per_gen: usize,
        #[arg(long, default_value_t = 100)]
        test_per_gen: usize,
        #[arg(long, default_value_t = 32)]
        image: usize,
        /// Also write rendered PPM images into this directory.
        #[arg(long)]
        export_images: Option<PathBuf>,
    },
    /// Train on a manifest's train split.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Open-set evaluation of a checkpoint on a manifest's test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Rejection threshold on the max attribution probability.
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Directory for report.txt / report.tsv / scores.tsv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-generator gaze FID against the real pool.
    Fid {
        #[arg(long)]
        manifest: PathBuf,
        /// Take gaze vectors from the manifest instead of the estimator.
        #[arg(long, default_value_t = false)]
        manifest_gaze: bool,
        /// Image side used when estimating gaze from renders.
        #[arg(long, default_value_t = 32)]
        image: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference verification of every trainable parameter group.
    GradCheck {
        #[command(flatten)]
        config: ConfigArgs,
        /// Failure threshold on the max relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Export fused visual features for every test sample.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Attribution accuracy under corruption (kind x severity grid).
    CorruptEval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated kinds: noise, blur, pixelate.
        #[arg(long, default_value = "noise,blur,pixelate")]
        kinds: String,
        /// Comma-separated severities within 0..=5.
        #[arg(long, default_value = "0,1,2,3,4,5")]
        severities: String,
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Config { preset, out } => {
            let cfg = match preset.as_str() {
                "desk" => ModelConfig::desk(),
                "paper" => ModelConfig::paper(),
                other => {
                    return Err(Error::Config(format!("unknown preset `{other}`")));
                }
            };
            match out {
                Some(path) => std::fs::write(path, cfg.to_text())?,
                None => print!("{}", cfg.to_text()),
            }
            Ok(0)
        }
        Command::Synth {
            out,
            seed,
            seen,
            unseen,
            train_per_gen,
            test_per_gen,
            image,
            export_images,
        } => {
            let spec = SynthSpec {
                seen,
                unseen,
                train_per_gen,
                test_per_gen,
                real_train: train_per_gen,
                real_test: test_per_gen,
                image,
            };
            let records = commands::cmd_synth(&spec, seed, &out, export_images.as_deref())?;
            println!("wrote {} records to {}", records.len(), out.display());
            Ok(0)
        }
        Command::Train { config, manifest, out } => {
            let cfg = config.load()?;
            let artifacts = commands::cmd_train(&cfg, &manifest, &out, false)?;
            println!(
                "trained {} steps; checkpoint at {}",
                artifacts.record.steps,
                artifacts.record.checkpoint.display()
            );
            Ok(0)
        }
        Command::Eval {
            checkpoint,
            manifest,
            threshold,
            workers,
            out,
        } => {
            let (report, _) =
                commands::cmd_eval(&checkpoint, &manifest, threshold, workers, out.as_deref())?;
            print!("{}", report.to_table());
            Ok(0)
        }
        Command::Fid {
            manifest,
            manifest_gaze,
            image,
            out,
        } => {
            let rows = commands::cmd_fid(&manifest, manifest_gaze, out.as_deref(), image)?;
            println!("{:<14} {:>12}", "generator", "FID vs real");
            for (name, fid) in rows {
                println!("{name:<14} {fid:>12.6}");
            }
            Ok(0)
        }
        Command::GradCheck { config, tolerance } => {
            let cfg = config.load()?;
            let report = commands::cmd_grad_check(&cfg)?;
            print!("{}", report.to_table());
            for (group, worst) in report.group_worst() {
                println!("group {group:<16} worst {worst:.3e}");
            }
            if report.passed(tolerance) {
                println!(
                    "gradient check passed (worst {:.3e} < {tolerance:.1e})",
                    report.worst
                );
                Ok(0)
            } else {
                eprintln!(
                    "gradient check FAILED (worst {:.3e} >= {tolerance:.1e})",
                    report.worst
                );
                Ok(EXIT_VERIFICATION_FAILURE)
            }
        }
        Command::ExportEmbeddings {
            checkpoint,
            manifest,
            out,
            workers,
        } => {
            let rows = commands::cmd_export_embeddings(&checkpoint, &manifest, &out, workers)?;
            println!("wrote {rows} rows to {}", out.display());
            Ok(0)
        }
        Command::CorruptEval {
            checkpoint,
            manifest,
            kinds,
            severities,
            threshold,
            workers,
            out,
        } => {
            let kinds: Vec<CorruptionKind> = kinds
                .split(',')
                .map(|k| CorruptionKind::parse(k.trim()))
                .collect::<Result<_>>()?;
            let severities: Vec<usize> = severities
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad severity `{s}`")))
                })
                .collect::<Result<_>>()?;
            let cells = commands::cmd_corrupt_eval(
                &checkpoint,
                &manifest,
                &kinds,
                &severities,
                threshold,
                workers,
                out.as_deref(),
            )?;
            println!("{:<10} {:>8} {:>10}", "kind", "severity", "attr ACC");
            for c in cells {
                println!(
                    "{:<10} {:>8} {:>9.2}%",
                    c.kind.to_string(),
                    c.severity,
                    100.0 * c.attribution_acc
                );
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
