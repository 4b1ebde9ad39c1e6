//! Training: batch assembly from manifest records, the single optimization
//! step over the full graph, and the epoch loop with step-decay scheduling.
//! Deterministic end to end: two runs with the same seed and config produce
//! bitwise-equal parameter stores.

use crate::config::ModelConfig;
use crate::data::synth::{derive_seed, render_record};
use crate::data::{ManifestRecord, Split};
use crate::error::{Error, Result};
use crate::fusion::MAX_LOGIT_SCALE;
use crate::gaze::GazeVector;
use crate::image::Image;
use crate::loss::{loss_cmc, loss_dfa, loss_dfd, total_loss};
use crate::lre::{ftg_generate, Vocabulary};
use crate::model::{build_store, contrastive_feature, resolve_gaze, text_forward, visual_forward};
use crate::optim::{lr_schedule, AdamParams, AdamState};
use crate::params::ParameterStore;
use crate::tensor::Graph;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One training sample, fully materialized.
#[derive(Debug)]
pub struct Sample {
    pub image: Image,
    pub gaze: GazeVector,
    pub attr_label: usize,
    pub det_label: usize,
    pub text: Option<String>,
}

/// Render and label a record for training. Unseen-labeled records are a
/// protocol violation here.
pub fn prepare_sample(cfg: &ModelConfig, record: &ManifestRecord) -> Result<Sample> {
    if record.attribution_label < 0 {
        return Err(Error::Protocol(format!(
            "record `{}` carries an unseen label and cannot be trained on",
            record.id
        )));
    }
    let label = record.attribution_label as usize;
    if label >= cfg.classes {
        return Err(Error::Protocol(format!(
            "record `{}` label {} outside the configured {} classes",
            record.id, label, cfg.classes
        )));
    }
    let image = render_record(record, cfg.image)?;
    let gaze = resolve_gaze(cfg, record, &image)?;
    let text = if cfg.lre_enabled {
        Some(ftg_generate(record, cfg.lre_prompt_level)?)
    } else {
        None
    };
    Ok(Sample {
        image,
        gaze,
        attr_label: label,
        det_label: record.detection_label as usize,
        text,
    })
}

/// Per-step metrics, one structured line each.
#[derive(Debug, Clone)]
pub struct StepMetrics {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss_dfa: f64,
    pub loss_dfd: f64,
    pub loss_cmc: Option<f64>,
    pub batch_acc: f64,
}

impl StepMetrics {
    pub fn line(&self) -> String {
        let cmc = match self.loss_cmc {
            Some(v) => format!("{v:.6}"),
            None => "-".to_string(),
        };
        format!(
            "step={} epoch={} lr={:.8} l_dfa={:.6} l_dfd={:.6} l_cmc={} acc={:.4}",
            self.step, self.epoch, self.lr, self.loss_dfa, self.loss_dfd, cmc, self.batch_acc
        )
    }
}

/// The assembled loss graph over one batch.
pub struct BatchGraph {
    pub graph: Graph,
    pub total: crate::tensor::TensorId,
    pub loss_dfa: f64,
    pub loss_dfd: f64,
    pub loss_cmc: Option<f64>,
    pub batch_acc: f64,
}

/// Forward every sample through the enabled modules and assemble the total
/// loss. Shared by the training step and the gradient checker.
pub fn batch_forward(
    store: &ParameterStore,
    cfg: &ModelConfig,
    vocab: Option<&Vocabulary>,
    batch: &[&Sample],
) -> Result<BatchGraph> {
    if batch.is_empty() {
        return Err(Error::Contract("batch_forward: empty batch".into()));
    }
    let mut g = Graph::new(cfg.precision);
    let mut attr_rows = Vec::with_capacity(batch.len());
    let mut det_rows = Vec::with_capacity(batch.len());
    let mut vis_rows = Vec::with_capacity(batch.len());
    let mut text_rows = Vec::with_capacity(batch.len());
    for sample in batch {
        let out = visual_forward(&mut g, store, cfg, &sample.image, sample.gaze)?;
        attr_rows.push(out.attr_logits);
        det_rows.push(out.det_logits);
        if cfg.lre_enabled {
            vis_rows.push(contrastive_feature(&mut g, store, cfg, &out)?);
            let vocab = vocab
                .ok_or_else(|| Error::Contract("language encoder enabled without vocabulary".into()))?;
            let text = sample
                .text
                .as_deref()
                .ok_or_else(|| Error::Contract("sample prepared without text".into()))?;
            text_rows.push(text_forward(&mut g, store, cfg, vocab, text)?);
        }
    }
    let attr_logits = g.concat_rows(&attr_rows)?;
    let det_logits = g.concat_rows(&det_rows)?;
    let attr_labels: Vec<usize> = batch.iter().map(|s| s.attr_label).collect();
    let det_labels: Vec<usize> = batch.iter().map(|s| s.det_label).collect();
    let l_dfa = loss_dfa(&mut g, attr_logits, &attr_labels, cfg.classes)?;
    let l_dfd = loss_dfd(&mut g, det_logits, &det_labels)?;
    let mut terms = vec![l_dfa, l_dfd];
    let mut cmc_value = None;
    if cfg.lre_enabled {
        let vis = g.concat_rows(&vis_rows)?;
        let txt = g.concat_rows(&text_rows)?;
        let scale = g.param(store, "fusion.logit_scale")?;
        let l_cmc = loss_cmc(&mut g, vis, txt, scale)?;
        cmc_value = Some(g.scalar(l_cmc)?);
        terms.push(l_cmc);
    }
    let total = total_loss(&mut g, &terms)?;
    let dfa_value = g.scalar(l_dfa)?;
    let dfd_value = g.scalar(l_dfd)?;

    let logits = g.values(attr_logits);
    let mut correct = 0;
    for (row, &label) in attr_labels.iter().enumerate() {
        let slice = &logits[row * cfg.classes..(row + 1) * cfg.classes];
        let argmax = slice
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        correct += usize::from(argmax == label);
    }
    Ok(BatchGraph {
        graph: g,
        total,
        loss_dfa: dfa_value,
        loss_dfd: dfd_value,
        loss_cmc: cmc_value,
        batch_acc: correct as f64 / batch.len() as f64,
    })
}

/// One optimization step over a prepared batch: forward every sample
/// through the enabled modules, sum the loss terms, backprop, Adam update,
/// and project the contrastive temperature back under its cap.
pub fn train_step(
    store: &mut ParameterStore,
    adam: &mut AdamState,
    cfg: &ModelConfig,
    vocab: Option<&Vocabulary>,
    batch: &[&Sample],
    lr: f64,
    epoch: usize,
) -> Result<StepMetrics> {
    let mut bg = batch_forward(store, cfg, vocab, batch)?;
    bg.graph.backward(bg.total)?;
    let grads = bg.graph.param_grads();
    adam.step(store, &grads, lr, cfg.precision)?;
    if let Some(p) = store.get_mut("fusion.logit_scale") {
        let cap = MAX_LOGIT_SCALE.ln();
        if p.values[0] > cap {
            p.values[0] = cfg.precision.quantize(cap);
        }
    }
    Ok(StepMetrics {
        step: adam.step_count(),
        epoch,
        lr,
        loss_dfa: bg.loss_dfa,
        loss_dfd: bg.loss_dfd,
        loss_cmc: bg.loss_cmc,
        batch_acc: bg.batch_acc,
    })
}

/// A finished (or in-progress) training run.
#[derive(Debug)]
pub struct TrainingRun {
    pub store: ParameterStore,
    pub vocab: Option<Vocabulary>,
    pub metrics: Vec<StepMetrics>,
}

/// Full training loop over the train split of `records`. Samples are
/// rendered once up front; batches reshuffle every epoch from a seeded
/// stream; only full batches run (the contrastive term needs at least two
/// samples). `on_epoch` fires after each epoch with the current store.
pub fn run_training(
    cfg: &ModelConfig,
    records: &[ManifestRecord],
    mut on_epoch: impl FnMut(usize, &ParameterStore, &[StepMetrics]) -> Result<()>,
) -> Result<TrainingRun> {
    cfg.validate()?;
    let train_records: Vec<&ManifestRecord> = records
        .iter()
        .filter(|r| r.split == Split::Train)
        .collect();
    if train_records.is_empty() {
        return Err(Error::Protocol("no training records in manifest".into()));
    }
    let seen = crate::data::seen_class_count(records);
    if seen != cfg.classes {
        return Err(Error::Config(format!(
            "manifest has {seen} seen classes, config expects {}",
            cfg.classes
        )));
    }
    let vocab = if cfg.lre_enabled {
        let train_only: Vec<ManifestRecord> = train_records.iter().map(|r| (*r).clone()).collect();
        Some(Vocabulary::from_records(&train_only)?)
    } else {
        None
    };
    let mut store = build_store(cfg, vocab.as_ref().map(|v| v.size()), cfg.seed)?;
    let mut adam = AdamState::new(AdamParams::from_config(cfg));

    let samples: Vec<Sample> = train_records
        .iter()
        .map(|r| prepare_sample(cfg, r))
        .collect::<Result<_>>()?;

    let mut metrics = Vec::new();
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg.lr, cfg.lr_decay_epochs);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x1000 + epoch as u64));
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            if chunk.len() < cfg.batch {
                continue;
            }
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let step = train_step(&mut store, &mut adam, cfg, vocab.as_ref(), &batch, lr, epoch)?;
            metrics.push(step);
        }
        on_epoch(epoch, &store, &metrics)?;
    }
    Ok(TrainingRun {
        store,
        vocab,
        metrics,
    })
}
