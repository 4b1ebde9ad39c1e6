//! Gaze-aware image encoder: patch embedding, N transformer blocks built
//! from frozen stand-in MHA/FF pairs plus a trainable gaze injector, LoRA
//! adapters after the trailing blocks, class-token output.
//!
//! The frozen weights stand in for a pretrained backbone: randomly
//! initialized, registered frozen, and never updated.

use crate::blocks::{
    attention, ff_forward, layer_norm_forward, lora_forward, mha_forward, register_encoder_block,
    register_lora,
};
use crate::config::{ModelConfig, QueryMode};
use crate::error::{Error, Result};
use crate::params::{gaussian, weight_std, zeros, ParameterStore, INIT_STD};
use crate::tensor::{Graph, TensorId};
use rand::Rng;

pub fn register_params(
    store: &mut ParameterStore,
    cfg: &ModelConfig,
    rng: &mut impl Rng,
) -> Result<()> {
    let d = cfg.dim_image;
    let patch_dim = 3 * cfg.patch * cfg.patch;
    store.insert(
        "gie.patch.w",
        vec![patch_dim, d],
        gaussian(rng, patch_dim * d, weight_std(patch_dim, false)),
        false,
    )?;
    store.insert("gie.patch.b", vec![d], zeros(d), false)?;
    store.insert("gie.cls", vec![1, d], gaussian(rng, d, INIT_STD), false)?;
    let seq = cfg.patches + 1;
    store.insert(
        "gie.pos",
        vec![seq, d],
        gaussian(rng, seq * d, INIT_STD),
        false,
    )?;
    for j in 0..cfg.gie_blocks {
        // Frozen pretrained stand-in: norms, attention, feed-forward.
        register_encoder_block(store, &format!("gie.block{j}"), d, true, rng)?;
        if cfg.gaze_enabled {
            for leaf in ["w_que", "w_key", "w_val", "w_fc"] {
                store.insert(
                    &format!("gie.block{j}.gi.{leaf}"),
                    vec![d, d],
                    gaussian(rng, d * d, weight_std(d, false)),
                    false,
                )?;
            }
        }
    }
    for k in 0..cfg.gie_lora_blocks {
        register_lora(store, &format!("gie.lora{k}"), d, cfg.lora_rank, rng)?;
    }
    Ok(())
}

/// `[class || m patch tokens] + positions`.
pub fn patch_embed(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &ModelConfig,
    image: TensorId,
) -> Result<TensorId> {
    let shape = g.shape(image).to_vec();
    if shape != vec![3, cfg.image, cfg.image] {
        return Err(Error::Dimension(format!(
            "patch_embed: image shape {:?} does not match config {}x{}",
            shape, cfg.image, cfg.image
        )));
    }
    let patches = g.extract_patches(image, cfg.patch)?;
    let w = g.param(store, "gie.patch.w")?;
    let b = g.param(store, "gie.patch.b")?;
    let proj = g.matmul(patches, w)?;
    let tokens = g.add_bias(proj, b)?;
    let cls = g.param(store, "gie.cls")?;
    let seq = g.concat_rows(&[cls, tokens])?;
    let pos = g.param(store, "gie.pos")?;
    g.add(seq, pos)
}

/// Cross-attention from the chosen query tokens onto the gaze token(s):
/// Q from the queries, K and V from the gaze embedding, r heads, residual
/// through `W_fc`, non-query tokens passed through untouched.
pub fn gaze_injector(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &ModelConfig,
    prefix: &str,
    tokens: TensorId,
    gaze_token: TensorId,
) -> Result<TensorId> {
    let rows = g.shape(tokens)[0];
    let (queries, rest): (TensorId, Option<(TensorId, bool)>) = match cfg.gie_query_mode {
        QueryMode::Cls => {
            let cls = g.slice_rows(tokens, 0, 1)?;
            let patches = g.slice_rows(tokens, 1, rows)?;
            (cls, Some((patches, false)))
        }
        QueryMode::Patch => {
            let cls = g.slice_rows(tokens, 0, 1)?;
            let patches = g.slice_rows(tokens, 1, rows)?;
            (patches, Some((cls, true)))
        }
        QueryMode::All => (tokens, None),
    };
    let w_que = g.param(store, &format!("{prefix}.w_que"))?;
    let w_key = g.param(store, &format!("{prefix}.w_key"))?;
    let w_val = g.param(store, &format!("{prefix}.w_val"))?;
    let w_fc = g.param(store, &format!("{prefix}.w_fc"))?;
    let q = g.matmul(queries, w_que)?;
    let k = g.matmul(gaze_token, w_key)?;
    let v = g.matmul(gaze_token, w_val)?;
    let glo = attention(g, q, k, v, cfg.heads)?;
    let add = g.matmul(glo, w_fc)?;
    let updated = g.add(add, queries)?;
    match rest {
        None => Ok(updated),
        Some((other, other_first)) => {
            if other_first {
                g.concat_rows(&[other, updated])
            } else {
                g.concat_rows(&[updated, other])
            }
        }
    }
}

/// One gaze-aware image transformer block: frozen pre-norm MHA with
/// residual, gaze injector on the result, frozen pre-norm FF with residual.
pub fn gitb_forward(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &ModelConfig,
    block: usize,
    tokens: TensorId,
    gaze_token: Option<TensorId>,
) -> Result<TensorId> {
    let prefix = format!("gie.block{block}");
    let normed = layer_norm_forward(g, store, &format!("{prefix}.ln1"), tokens)?;
    let attn = mha_forward(g, store, &format!("{prefix}.attn"), normed, cfg.heads)?;
    let h = g.add(tokens, attn)?;
    let injected = match gaze_token {
        Some(gz) => gaze_injector(g, store, cfg, &format!("{prefix}.gi"), h, gz)?,
        None => h,
    };
    let normed2 = layer_norm_forward(g, store, &format!("{prefix}.ln2"), injected)?;
    let ff = ff_forward(g, store, &format!("{prefix}.ff"), normed2)?;
    g.add(injected, ff)
}

/// Full encoder: patch embedding, N blocks with LoRA after each of the last
/// `gie_lora_blocks`, class-token row out.
pub fn gie_forward(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &ModelConfig,
    image: TensorId,
    gaze_token: Option<TensorId>,
) -> Result<TensorId> {
    let mut x = patch_embed(g, store, cfg, image)?;
    let first_lora_block = cfg.gie_blocks - cfg.gie_lora_blocks;
    for j in 0..cfg.gie_blocks {
        x = gitb_forward(g, store, cfg, j, x, gaze_token)?;
        if j >= first_lora_block {
            let k = j - first_lora_block;
            x = lora_forward(g, store, &format!("gie.lora{k}"), x, cfg.lora_rank, cfg.lora_alpha)?;
        }
    }
    g.slice_rows(x, 0, 1)
}
