//! Language refinement encoder: fine-grained text generation from
//! hierarchical labels, a closed-vocabulary word tokenizer, L text blocks
//! built from frozen stand-in MHA/FF pairs with a trainable diagonal word
//! selector (AWS), LoRA after the trailing blocks, last-token pooling.
//!
//! Training-only: the inference path never executes this module.

use crate::blocks::{
    ff_forward, layer_norm_forward, lora_forward, mha_forward, register_encoder_block,
    register_lora,
};
use crate::config::{AwsPlacement, ModelConfig};
use crate::data::{Family, ForgeryType, ManifestRecord};
use crate::error::{Error, Result};
use crate::params::{gaussian, ParameterStore, INIT_STD};
use crate::tensor::{Graph, TensorId};
use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Hierarchical prompt texts. `l1` is always present; `l2..l4` are empty
/// only for real images.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptLevels {
    pub l1: String,
    pub l2: String,
    pub l3: String,
    pub l4: String,
}

/// Build the four-level template texts for a sample.
pub fn prompt_levels(
    is_real: bool,
    forgery: ForgeryType,
    family: Family,
    generator: &str,
) -> PromptLevels {
    if is_real {
        return PromptLevels {
            l1: "a photo of a real face".to_string(),
            l2: String::new(),
            l3: String::new(),
            l4: String::new(),
        };
    }
    let family_word = match family {
        Family::Gan => "gan",
        Family::Diffusion => "diffusion",
        Family::Flow => "flow",
        Family::Real => "real",
    };
    PromptLevels {
        l1: "a photo of a fake face".to_string(),
        l2: format!("{} manipulation", forgery.phrase()),
        l3: format!("made by a {} model", family_word),
        l4: format!("generator {}", generator.to_lowercase()),
    }
}

/// Concatenate a record's hierarchical texts up to `level` (1..=4).
/// Fake records must carry every requested level; real records simply stop
/// at their non-empty prefix.
pub fn ftg_generate(record: &ManifestRecord, level: usize) -> Result<String> {
    if !(1..=4).contains(&level) {
        return Err(Error::Config(format!("prompt level {level} outside 1..=4")));
    }
    let levels = [&record.l1, &record.l2, &record.l3, &record.l4];
    let mut parts: Vec<&str> = Vec::new();
    for (i, text) in levels.iter().take(level).enumerate() {
        if text.is_empty() {
            if record.is_real() {
                continue;
            }
            return Err(Error::Data(format!(
                "record `{}` lacks the l{} text required at level {}",
                record.id,
                i + 1,
                level
            )));
        }
        parts.push(text);
    }
    Ok(parts.join(", "))
}

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;

/// Closed vocabulary over the finite prompt corpus. Ids are dense and
/// assigned in first-occurrence order, after the reserved specials.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    map: IndexMap<String, usize>,
}

fn split_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_string())
        .collect()
}

impl Vocabulary {
    /// Scan the corpus in order and intern every word.
    pub fn build<'a>(corpus: impl Iterator<Item = &'a str>) -> Self {
        let mut map = IndexMap::new();
        for text in corpus {
            for word in split_words(text) {
                let next = map.len() + 3;
                map.entry(word).or_insert(next);
            }
        }
        Vocabulary { map }
    }

    /// Vocabulary built from every record's full level-4 prompt.
    pub fn from_records(records: &[ManifestRecord]) -> Result<Self> {
        let mut texts = Vec::with_capacity(records.len());
        for r in records {
            texts.push(ftg_generate(r, 4)?);
        }
        Ok(Vocabulary::build(texts.iter().map(|s| s.as_str())))
    }

    /// Total id count including PAD/BOS/EOS.
    pub fn size(&self) -> usize {
        self.map.len() + 3
    }

    /// `BOS + word ids + EOS`, padded or truncated to exactly `t` ids.
    /// Returns the ids and the EOS position used for pooling.
    pub fn encode(&self, text: &str, t: usize) -> Result<(Vec<usize>, usize)> {
        let mut words = split_words(text);
        if words.len() > t - 2 {
            words.truncate(t - 2);
        }
        let mut ids = Vec::with_capacity(t);
        ids.push(BOS_ID);
        for w in &words {
            let id = self
                .map
                .get(w)
                .ok_or_else(|| Error::Data(format!("word `{w}` outside the closed vocabulary")))?;
            ids.push(*id);
        }
        ids.push(EOS_ID);
        let eos = ids.len() - 1;
        ids.resize(t, PAD_ID);
        Ok((ids, eos))
    }
}

pub fn register_params(
    store: &mut ParameterStore,
    cfg: &ModelConfig,
    vocab_size: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    let s = cfg.dim_shared;
    let t = cfg.lre_tokens;
    // Token embedding stands in for a pretrained text embedding: frozen.
    store.insert(
        "lre.embed.table",
        vec![vocab_size, s],
        gaussian(rng, vocab_size * s, INIT_STD),
        true,
    )?;
    store.insert("lre.pos", vec![t, s], gaussian(rng, t * s, INIT_STD), false)?;
    for j in 0..cfg.lre_blocks {
        if cfg.lre_aws_enabled {
            // The selector diagonal is sampled from the standard normal.
            let d: Vec<f64> = (0..t).map(|_| StandardNormal.sample(rng)).collect();
            store.insert(&format!("lre.block{j}.aws.d"), vec![t], d, false)?;
        }
        register_encoder_block(store, &format!("lre.block{j}"), s, true, rng)?;
    }
    for k in 0..cfg.lre_lora_blocks {
        register_lora(store, &format!("lre.lora{k}"), s, cfg.lora_rank, rng)?;
    }
    Ok(())
}

/// Adaptive word selector: scale word-slot i by the learnable diagonal
/// entry d[i].
pub fn aws_apply(g: &mut Graph, x: TensorId, diag: TensorId) -> Result<TensorId> {
    g.row_scale(x, diag)
}

/// One text-refining block. The AWS placement decides where the diagonal
/// acts; with AWS disabled (or the diagonal fixed at ones) every placement
/// reduces to the vanilla frozen pre-norm block.
pub fn trtb_forward(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &ModelConfig,
    block: usize,
    x: TensorId,
) -> Result<TensorId> {
    let prefix = format!("lre.block{block}");
    let aws_diag = if cfg.lre_aws_enabled {
        Some(g.param(store, &format!("{prefix}.aws.d"))?)
    } else {
        None
    };
    match (cfg.lre_aws_placement, aws_diag) {
        (AwsPlacement::Before, Some(d)) => {
            let normed = layer_norm_forward(g, store, &format!("{prefix}.ln1"), x)?;
            let selected = aws_apply(g, normed, d)?;
            let attn = mha_forward(g, store, &format!("{prefix}.attn"), selected, cfg.heads)?;
            let h = g.add(x, attn)?;
            let normed2 = layer_norm_forward(g, store, &format!("{prefix}.ln2"), h)?;
            let ff = ff_forward(g, store, &format!("{prefix}.ff"), normed2)?;
            g.add(h, ff)
        }
        (AwsPlacement::Between, Some(d)) => {
            let normed = layer_norm_forward(g, store, &format!("{prefix}.ln1"), x)?;
            let attn = mha_forward(g, store, &format!("{prefix}.attn"), normed, cfg.heads)?;
            let h = g.add(x, attn)?;
            let normed2 = layer_norm_forward(g, store, &format!("{prefix}.ln2"), h)?;
            let selected = aws_apply(g, normed2, d)?;
            let ff = ff_forward(g, store, &format!("{prefix}.ff"), selected)?;
            g.add(h, ff)
        }
        (AwsPlacement::After, Some(d)) => {
            let normed = layer_norm_forward(g, store, &format!("{prefix}.ln1"), x)?;
            let attn = mha_forward(g, store, &format!("{prefix}.attn"), normed, cfg.heads)?;
            let h = g.add(x, attn)?;
            let normed2 = layer_norm_forward(g, store, &format!("{prefix}.ln2"), h)?;
            let ff = ff_forward(g, store, &format!("{prefix}.ff"), normed2)?;
            let y = g.add(h, ff)?;
            aws_apply(g, y, d)
        }
        (_, None) => {
            let normed = layer_norm_forward(g, store, &format!("{prefix}.ln1"), x)?;
            let attn = mha_forward(g, store, &format!("{prefix}.attn"), normed, cfg.heads)?;
            let h = g.add(x, attn)?;
            let normed2 = layer_norm_forward(g, store, &format!("{prefix}.ln2"), h)?;
            let ff = ff_forward(g, store, &format!("{prefix}.ff"), normed2)?;
            g.add(h, ff)
        }
    }
}

/// Full encoder over a tokenized prompt: embed, add positions, L blocks,
/// LoRA after the trailing blocks, pooled row at the EOS position.
pub fn lre_forward(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &ModelConfig,
    ids: &[usize],
    eos: usize,
) -> Result<TensorId> {
    if ids.len() != cfg.lre_tokens {
        return Err(Error::Dimension(format!(
            "lre_forward: {} ids, config expects {}",
            ids.len(),
            cfg.lre_tokens
        )));
    }
    let table = g.param(store, "lre.embed.table")?;
    let emb = g.embedding(table, ids)?;
    let pos = g.param(store, "lre.pos")?;
    let mut x = g.add(emb, pos)?;
    let first_lora_block = cfg.lre_blocks - cfg.lre_lora_blocks;
    for j in 0..cfg.lre_blocks {
        x = trtb_forward(g, store, cfg, j, x)?;
        if j >= first_lora_block {
            let k = j - first_lora_block;
            x = lora_forward(g, store, &format!("lre.lora{k}"), x, cfg.lora_rank, cfg.lora_alpha)?;
        }
    }
    g.slice_rows(x, eos, eos + 1)
}

/// Total selector parameters a configuration adds: one scalar per word slot
/// per block.
pub fn aws_parameter_count(cfg: &ModelConfig) -> usize {
    if cfg.lre_aws_enabled {
        cfg.lre_blocks * cfg.lre_tokens
    } else {
        0
    }
}
