//! Inference over manifest records. The test-time path runs only the
//! visual modules: the language encoder is never constructed here, and the
//! run fails loudly if any language parameter is ever touched.
//!
//! Evaluation is pure given a read-only parameter store, so records fan out
//! across a worker pool.

use crate::config::ModelConfig;
use crate::corrupt::{corrupt, CorruptionKind};
use crate::data::synth::{derive_seed, render_record};
use crate::data::{ManifestRecord, Split};
use crate::error::{Error, Result};
use crate::fusion::predict;
use crate::metrics::{SampleScore, ScoreSet};
use crate::model::{resolve_gaze, visual_forward};
use crate::params::ParameterStore;
use crate::tensor::Graph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeSet;

/// Optional corruption applied to every image before inference.
#[derive(Debug, Clone, Copy)]
pub struct CorruptionSetting {
    pub kind: CorruptionKind,
    pub severity: usize,
    /// Seed stream for the stochastic corruption kinds.
    pub seed: u64,
}

/// Per-sample inference output.
pub struct EvalOutput {
    pub scores: ScoreSet,
    /// Fused visual feature per sample, row-aligned with `scores`.
    pub features: Vec<Vec<f64>>,
    /// Every parameter name the forward passes touched.
    pub touched: BTreeSet<String>,
}

type SampleResult = (SampleScore, Vec<f64>, BTreeSet<String>);

fn eval_one(
    store: &ParameterStore,
    cfg: &ModelConfig,
    record: &ManifestRecord,
    corruption: Option<CorruptionSetting>,
    index: usize,
) -> Result<SampleResult> {
    let mut image = render_record(record, cfg.image)?;
    if let Some(c) = corruption {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(c.seed, index as u64));
        image = corrupt(&image, c.kind, c.severity, &mut rng)?;
    }
    let gaze = resolve_gaze(cfg, record, &image)?;
    let mut g = Graph::new(cfg.precision);
    let out = visual_forward(&mut g, store, cfg, &image, gaze)?;
    let (attr_probs, det_probs) = predict(g.values(out.attr_logits), g.values(out.det_logits));
    let touched: BTreeSet<String> = g.touched_params().map(|s| s.to_string()).collect();
    let score = SampleScore {
        id: record.id.clone(),
        generator: record.generator.clone(),
        attribution_label: record.attribution_label,
        detection_label: record.detection_label,
        probs: attr_probs,
        fake_prob: det_probs[1],
    };
    Ok((score, g.values(out.fused).to_vec(), touched))
}

/// Run inference over the test split (or all records when `test_only` is
/// false), optionally corrupted, across `workers` threads.
pub fn eval_records(
    store: &ParameterStore,
    cfg: &ModelConfig,
    records: &[ManifestRecord],
    workers: usize,
    corruption: Option<CorruptionSetting>,
    test_only: bool,
) -> Result<EvalOutput> {
    let subset: Vec<(usize, &ManifestRecord)> = records
        .iter()
        .filter(|r| !test_only || r.split == Split::Test)
        .enumerate()
        .collect();
    if subset.is_empty() {
        return Err(Error::Data("no records to evaluate".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Contract(format!("worker pool: {e}")))?;
    let results: Vec<Result<SampleResult>> = pool.install(|| {
        subset
            .par_iter()
            .map(|(index, record)| eval_one(store, cfg, record, corruption, *index))
            .collect()
    });
    let mut scores = Vec::with_capacity(results.len());
    let mut features = Vec::with_capacity(results.len());
    let mut touched = BTreeSet::new();
    for r in results {
        let (score, feat, t) = r?;
        scores.push(score);
        features.push(feat);
        touched.extend(t);
    }
    if let Some(name) = touched.iter().find(|n| n.starts_with("lre.")) {
        return Err(Error::Contract(format!(
            "inference touched language parameter `{name}`"
        )));
    }
    Ok(EvalOutput {
        scores: ScoreSet::new(scores)?,
        features,
        touched,
    })
}
