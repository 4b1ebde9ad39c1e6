//! Command implementations behind the CLI: training runs, open-set
//! evaluation, gaze-FID tables, gradient verification, embedding export,
//! and corruption sweeps. Each returns a report struct and optionally
//! writes text/delimited outputs.

use crate::checkpoint;
use crate::config::{ModelConfig, Precision};
use crate::corrupt::CorruptionKind;
use crate::data::synth::{render_record, synth_generate, SynthSpec};
use crate::data::{load_manifest, save_manifest, ManifestRecord, Split};
use crate::error::{Error, Result};
use crate::eval::{eval_records, CorruptionSetting, EvalOutput};
use crate::fid::fid_2d;
use crate::gaze::estimate_gaze_standin;
use crate::gradcheck::{grad_check_param, DEFAULT_COORDS};
use crate::metrics::{eval_attribution, eval_detection, AttributionReport, DetectionReport};
use crate::model::build_store;
use crate::params::ParameterStore;
use crate::train::{batch_forward, prepare_sample, run_training, Sample, StepMetrics};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Generate a synthetic benchmark manifest; optionally export the rendered
/// images as PPM files (sources then point at the files).
pub fn cmd_synth(
    spec: &SynthSpec,
    seed: u64,
    out: &Path,
    export_images: Option<&Path>,
) -> Result<Vec<ManifestRecord>> {
    let mut records = synth_generate(spec, seed);
    if let Some(dir) = export_images {
        std::fs::create_dir_all(dir)?;
        for r in records.iter_mut() {
            let img = render_record(r, spec.image)?;
            let file = dir.join(format!("{}.ppm", r.id));
            img.write_ppm(&file)?;
            r.source = crate::data::Source::Path(file.to_string_lossy().into_owned());
        }
    }
    save_manifest(&records, out)?;
    Ok(records)
}

/// Provenance record for one training run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub steps: u64,
    pub final_metrics: Option<StepMetrics>,
    pub checkpoint: PathBuf,
}

impl RunRecord {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "config_hash = {}", self.config_hash);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "started_unix = {}", self.started_unix);
        let _ = writeln!(out, "finished_unix = {}", self.finished_unix);
        let _ = writeln!(out, "steps = {}", self.steps);
        if let Some(m) = &self.final_metrics {
            let _ = writeln!(out, "final = {}", m.line());
        }
        let _ = writeln!(out, "checkpoint = {}", self.checkpoint.display());
        out
    }
}

pub struct TrainArtifacts {
    pub store: ParameterStore,
    pub record: RunRecord,
    pub metrics: Vec<StepMetrics>,
}

/// Train on the manifest's train split: per-epoch checkpoints, a metrics
/// log, a final checkpoint, and a run record, all under `out_dir`.
pub fn cmd_train(
    cfg: &ModelConfig,
    manifest_path: &Path,
    out_dir: &Path,
    quiet: bool,
) -> Result<TrainArtifacts> {
    let records = load_manifest(manifest_path)?;
    std::fs::create_dir_all(out_dir)?;
    let started = unix_now();
    let run = run_training(cfg, &records, |epoch, store, metrics| {
        checkpoint::save(store, cfg, &out_dir.join(format!("ckpt-epoch-{epoch}.gzclip")))?;
        if !quiet {
            if let Some(m) = metrics.last() {
                println!("{}", m.line());
            }
        }
        Ok(())
    })?;
    let final_path = out_dir.join("checkpoint.gzclip");
    checkpoint::save(&run.store, cfg, &final_path)?;
    let mut log = String::new();
    for m in &run.metrics {
        log.push_str(&m.line());
        log.push('\n');
    }
    std::fs::write(out_dir.join("metrics.log"), log)?;
    let record = RunRecord {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        started_unix: started,
        finished_unix: unix_now(),
        steps: run.metrics.len() as u64,
        final_metrics: run.metrics.last().cloned(),
        checkpoint: final_path,
    };
    std::fs::write(out_dir.join("run_record.txt"), record.to_text())?;
    std::fs::write(out_dir.join("config.txt"), cfg.to_text())?;
    Ok(TrainArtifacts {
        store: run.store,
        record,
        metrics: run.metrics,
    })
}

pub struct EvalReport {
    pub attribution: AttributionReport,
    pub detection: DetectionReport,
    pub samples: usize,
}

impl EvalReport {
    /// Aligned text table: attribution per generator, then detection rows,
    /// then macro averages.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>7} {:>10}",
            "generator", "samples", "attr ACC"
        );
        for row in &self.attribution.per_generator {
            let _ = writeln!(
                out,
                "{:<14} {:>7} {:>9.2}%",
                row.generator,
                row.total,
                100.0 * row.accuracy()
            );
        }
        let _ = writeln!(
            out,
            "{:<14} {:>7} {:>9.2}%  (threshold {})",
            "macro-average",
            "",
            100.0 * self.attribution.average,
            self.attribution.threshold
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<14} {:>7} {:>10} {:>10}",
            "detection", "unseen", "ACC", "AUC"
        );
        for row in &self.detection.per_generator {
            let _ = writeln!(
                out,
                "{:<14} {:>7} {:>9.2}% {:>10.4}",
                row.generator,
                if row.unseen { "yes" } else { "no" },
                100.0 * row.acc,
                row.auc
            );
        }
        if self.detection.unseen_acc.is_finite() {
            let _ = writeln!(
                out,
                "{:<14} {:>7} {:>9.2}% {:>10.4}",
                "macro-unseen", "", 100.0 * self.detection.unseen_acc, self.detection.unseen_auc
            );
        }
        if self.detection.seen_acc.is_finite() {
            let _ = writeln!(
                out,
                "{:<14} {:>7} {:>9.2}% {:>10.4}",
                "macro-seen", "", 100.0 * self.detection.seen_acc, self.detection.seen_auc
            );
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("generator\tsamples\tattr_acc\tdet_acc\tdet_auc\tunseen\n");
        for row in &self.attribution.per_generator {
            let det = self
                .detection
                .per_generator
                .iter()
                .find(|d| d.generator == row.generator);
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                row.generator,
                row.total,
                row.accuracy(),
                det.map(|d| d.acc.to_string()).unwrap_or_else(|| "-".into()),
                det.map(|d| d.auc.to_string()).unwrap_or_else(|| "-".into()),
                det.map(|d| d.unseen.to_string()).unwrap_or_else(|| "-".into()),
            );
        }
        out
    }
}

fn scores_tsv(out: &EvalOutput) -> String {
    let mut text = String::from("id\tgenerator\tattr_label\tdet_label\tfake_prob\tprobs\n");
    for s in &out.scores.scores {
        let probs = s
            .probs
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            text,
            "{}\t{}\t{}\t{}\t{}\t{}",
            s.id, s.generator, s.attribution_label, s.detection_label, s.fake_prob, probs
        );
    }
    text
}

/// Evaluate a checkpoint on a manifest's test split: per-generator
/// attribution ACC at the threshold, detection ACC/AUC against the real
/// pool, macro averages. The language encoder is never touched.
pub fn cmd_eval(
    checkpoint_path: &Path,
    manifest_path: &Path,
    threshold: f64,
    workers: usize,
    out_dir: Option<&Path>,
) -> Result<(EvalReport, EvalOutput)> {
    let (store, cfg) = checkpoint::load(checkpoint_path)?;
    let records = load_manifest(manifest_path)?;
    let seen = crate::data::seen_class_count(&records);
    if seen != 0 && seen != cfg.classes {
        return Err(Error::Version(format!(
            "checkpoint was trained with {} classes, manifest has {seen}",
            cfg.classes
        )));
    }
    let output = eval_records(&store, &cfg, &records, workers, None, true)?;
    let attribution = eval_attribution(&output.scores, threshold);
    let detection = eval_detection(&output.scores)?;
    let report = EvalReport {
        samples: output.scores.scores.len(),
        attribution,
        detection,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), report.to_table())?;
        std::fs::write(dir.join("report.tsv"), report.to_tsv())?;
        std::fs::write(dir.join("scores.tsv"), scores_tsv(&output))?;
    }
    Ok((report, output))
}

/// Gaze-FID table: per fake generator, the Frechet distance between its
/// test gaze distribution and the pooled real one, sorted descending.
pub fn cmd_fid(
    manifest_path: &Path,
    use_manifest_gaze: bool,
    out_file: Option<&Path>,
    image_size: usize,
) -> Result<Vec<(String, f64)>> {
    let records = load_manifest(manifest_path)?;
    let mut real: Vec<[f64; 2]> = Vec::new();
    let mut per_gen: indexmap::IndexMap<String, Vec<[f64; 2]>> = indexmap::IndexMap::new();
    for r in &records {
        let gaze = if use_manifest_gaze {
            r.gaze.ok_or_else(|| {
                Error::Data(format!("record `{}` lacks a gaze field", r.id))
            })?
        } else {
            let img = render_record(r, image_size)?;
            estimate_gaze_standin(&img.normalize()?)
        };
        let point = [gaze.yaw, gaze.pitch];
        if r.detection_label == 0 {
            real.push(point);
        } else {
            per_gen.entry(r.generator.clone()).or_default().push(point);
        }
    }
    if real.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 real samples for the FID reference, found {}",
            real.len()
        )));
    }
    let mut rows = Vec::new();
    for (name, pts) in per_gen {
        rows.push((name, fid_2d(&pts, &real)?));
    }
    rows.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    if let Some(path) = out_file {
        let mut text = String::from("generator\tfid_vs_real\n");
        for (name, fid) in &rows {
            let _ = writeln!(text, "{name}\t{fid}");
        }
        std::fs::write(path, text)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct GradCheckRow {
    pub name: String,
    pub group: String,
    /// None for frozen parameters (skipped).
    pub error: Option<f64>,
}

pub struct GradCheckReport {
    pub rows: Vec<GradCheckRow>,
    pub worst: f64,
    pub elapsed_secs: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.worst < tolerance
    }

    /// Worst error per group label.
    pub fn group_worst(&self) -> Vec<(String, f64)> {
        let mut groups: indexmap::IndexMap<String, f64> = indexmap::IndexMap::new();
        for row in &self.rows {
            if let Some(e) = row.error {
                let entry = groups.entry(row.group.clone()).or_insert(0.0);
                *entry = entry.max(e);
            }
        }
        groups.into_iter().collect()
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<34} {:<16} max rel err", "parameter", "group");
        for row in &self.rows {
            match row.error {
                Some(e) => {
                    let _ = writeln!(out, "{:<34} {:<16} {:.3e}", row.name, row.group, e);
                }
                None => {
                    let _ = writeln!(out, "{:<34} {:<16} frozen", row.name, row.group);
                }
            }
        }
        let _ = writeln!(out, "worst: {:.3e}  ({:.1}s)", self.worst, self.elapsed_secs);
        out
    }
}

fn group_of(name: &str) -> String {
    if name.starts_with("gaze.") {
        "gaze_adapter"
    } else if name.starts_with("vpe.") {
        "agpm"
    } else if name.contains(".gi.") {
        "gaze_injector"
    } else if name.starts_with("gie.lora") || name.starts_with("lre.lora") {
        "lora"
    } else if name.starts_with("gie.") {
        "gie_embed"
    } else if name.contains(".aws.") {
        "aws"
    } else if name.starts_with("lre.") {
        "lre_embed"
    } else if name == "fusion.logit_scale" {
        "temperature"
    } else if name.starts_with("fusion.") {
        "fusion"
    } else if name.starts_with("head.") {
        "experts"
    } else {
        "other"
    }
    .to_string()
}

/// Finite-difference verification of every trainable parameter group on a
/// small fixed batch at 64-bit precision. Frozen groups are listed and
/// skipped.
pub fn cmd_grad_check(base_cfg: &ModelConfig) -> Result<GradCheckReport> {
    let start = Instant::now();
    let mut cfg = base_cfg.clone();
    cfg.precision = Precision::F64;
    cfg.classes = cfg.classes.max(2);
    cfg.validate()?;

    // Two fixed synthetic samples: one real, one fake.
    let spec = SynthSpec {
        seen: 1,
        unseen: 0,
        train_per_gen: 1,
        test_per_gen: 0,
        real_train: 1,
        real_test: 0,
        image: cfg.image,
    };
    let records = synth_generate(&spec, 1234);
    let train_records: Vec<&ManifestRecord> =
        records.iter().filter(|r| r.split == Split::Train).collect();
    let vocab = if cfg.lre_enabled {
        let owned: Vec<ManifestRecord> = train_records.iter().map(|r| (*r).clone()).collect();
        Some(crate::lre::Vocabulary::from_records(&owned)?)
    } else {
        None
    };
    let store = build_store(&cfg, vocab.as_ref().map(|v| v.size()), cfg.seed)?;
    let samples: Vec<Sample> = train_records
        .iter()
        .map(|r| prepare_sample(&cfg, r))
        .collect::<Result<_>>()?;
    let sample_refs: Vec<&Sample> = samples.iter().collect();

    // Total loss as a pure function of the store (forward only).
    let loss_fn = |s: &ParameterStore| -> Result<f64> {
        let bg = batch_forward(s, &cfg, vocab.as_ref(), &sample_refs)?;
        bg.graph.scalar(bg.total)
    };

    // Analytic gradients from one backward pass.
    let mut bg = batch_forward(&store, &cfg, vocab.as_ref(), &sample_refs)?;
    bg.graph.backward(bg.total)?;
    let grads = bg.graph.param_grads();

    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for (name, param) in store.iter() {
        if param.frozen {
            rows.push(GradCheckRow {
                name: name.to_string(),
                group: group_of(name),
                error: None,
            });
            continue;
        }
        let zeros;
        let analytic = match grads.get(name) {
            Some(v) => v,
            None => {
                zeros = vec![0.0; param.numel()];
                &zeros
            }
        };
        let err = grad_check_param(
            loss_fn,
            &store,
            name,
            analytic,
            1e-5,
            DEFAULT_COORDS,
            &mut rng,
        )?;
        worst = worst.max(err);
        rows.push(GradCheckRow {
            name: name.to_string(),
            group: group_of(name),
            error: Some(err),
        });
    }
    Ok(GradCheckReport {
        rows,
        worst,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// One row per test sample: id, label, generator, then the s-dimensional
/// fused feature, tab-separated.
pub fn cmd_export_embeddings(
    checkpoint_path: &Path,
    manifest_path: &Path,
    out_file: &Path,
    workers: usize,
) -> Result<usize> {
    let (store, cfg) = checkpoint::load(checkpoint_path)?;
    let records = load_manifest(manifest_path)?;
    let output = eval_records(&store, &cfg, &records, workers, None, true)?;
    let mut text = String::from("id\tattr_label\tgenerator\tfeature\n");
    for (score, feat) in output.scores.scores.iter().zip(&output.features) {
        let feature = feat
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            text,
            "{}\t{}\t{}\t{}",
            score.id, score.attribution_label, score.generator, feature
        );
    }
    std::fs::write(out_file, text)?;
    Ok(output.scores.scores.len())
}

#[derive(Debug, Clone)]
pub struct CorruptCell {
    pub kind: CorruptionKind,
    pub severity: usize,
    pub attribution_acc: f64,
}

/// Attribution accuracy per (kind, severity) cell; severity 0 is the clean
/// baseline.
pub fn cmd_corrupt_eval(
    checkpoint_path: &Path,
    manifest_path: &Path,
    kinds: &[CorruptionKind],
    severities: &[usize],
    threshold: f64,
    workers: usize,
    out_file: Option<&Path>,
) -> Result<Vec<CorruptCell>> {
    let (store, cfg) = checkpoint::load(checkpoint_path)?;
    let records = load_manifest(manifest_path)?;
    for &s in severities {
        if s > 5 {
            return Err(Error::Config(format!("severity {s} outside 0..=5")));
        }
    }
    let mut cells = Vec::new();
    for &kind in kinds {
        for &severity in severities {
            let corruption = if severity == 0 {
                None
            } else {
                Some(CorruptionSetting {
                    kind,
                    severity,
                    seed: cfg.seed ^ 0xC0FFEE,
                })
            };
            let output = eval_records(&store, &cfg, &records, workers, corruption, true)?;
            let report = eval_attribution(&output.scores, threshold);
            cells.push(CorruptCell {
                kind,
                severity,
                attribution_acc: report.average,
            });
        }
    }
    if let Some(path) = out_file {
        let mut text = String::from("kind\tseverity\tattr_acc\n");
        for c in &cells {
            let _ = writeln!(text, "{}\t{}\t{}", c.kind, c.severity, c.attribution_acc);
        }
        std::fs::write(path, text)?;
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn synth_then_fid_produces_sorted_rows() {
        let dir = tempdir().unwrap();
        let manifest = dir.path().join("m.tsv");
        let mut spec = SynthSpec::desk().scaled(40, 30);
        spec.seen = 2;
        spec.unseen = 1;
        cmd_synth(&spec, 3, &manifest, None).unwrap();
        let rows = cmd_fid(&manifest, false, Some(&dir.path().join("fid.tsv")), 32).unwrap();
        assert_eq!(rows.len(), 3);
        for pair in rows.windows(2) {
            assert!(pair[0].1 >= pair[1].1, "not sorted descending");
        }
    }

    #[test]
    fn grad_check_flags_a_corrupted_gradient() {
        // The mutation test lives at the gradcheck level; here just check
        // the group labeling covers the expected families.
        for (name, group) in [
            ("gaze.adapter.w", "gaze_adapter"),
            ("vpe.agte.cls", "agpm"),
            ("gie.block0.gi.w_que", "gaze_injector"),
            ("gie.lora0.a", "lora"),
            ("lre.block1.aws.d", "aws"),
            ("fusion.logit_scale", "temperature"),
            ("head.attr.w", "experts"),
        ] {
            assert_eq!(group_of(name), group, "{name}");
        }
    }
}
