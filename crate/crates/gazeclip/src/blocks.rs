//! Shared transformer building blocks: multi-head self-attention,
//! feed-forward (GELU, 4x expansion), pre-norm encoder blocks, and LoRA
//! residual adapters. Parameter names are `{prefix}.{leaf}`; whether a
//! block is frozen is decided at registration time.

use crate::error::Result;
use crate::params::{gaussian, ones, weight_std, zeros, ParameterStore};
use crate::tensor::{Graph, TensorId};
use rand::Rng;

pub const LN_EPS: f64 = 1e-5;
pub const FF_EXPANSION: usize = 4;

pub fn register_layer_norm(
    store: &mut ParameterStore,
    prefix: &str,
    dim: usize,
    frozen: bool,
) -> Result<()> {
    store.insert(&format!("{prefix}.gamma"), vec![dim], ones(dim), frozen)?;
    store.insert(&format!("{prefix}.beta"), vec![dim], zeros(dim), frozen)?;
    Ok(())
}

pub fn register_mha(
    store: &mut ParameterStore,
    prefix: &str,
    dim: usize,
    frozen: bool,
    rng: &mut impl Rng,
) -> Result<()> {
    for leaf in ["wq", "wk", "wv", "wo"] {
        store.insert(
            &format!("{prefix}.{leaf}"),
            vec![dim, dim],
            gaussian(rng, dim * dim, weight_std(dim, frozen)),
            frozen,
        )?;
    }
    for leaf in ["bq", "bk", "bv", "bo"] {
        store.insert(&format!("{prefix}.{leaf}"), vec![dim], zeros(dim), frozen)?;
    }
    Ok(())
}

pub fn register_ff(
    store: &mut ParameterStore,
    prefix: &str,
    dim: usize,
    frozen: bool,
    rng: &mut impl Rng,
) -> Result<()> {
    let hidden = FF_EXPANSION * dim;
    store.insert(
        &format!("{prefix}.w1"),
        vec![dim, hidden],
        gaussian(rng, dim * hidden, weight_std(dim, frozen)),
        frozen,
    )?;
    store.insert(&format!("{prefix}.b1"), vec![hidden], zeros(hidden), frozen)?;
    store.insert(
        &format!("{prefix}.w2"),
        vec![hidden, dim],
        gaussian(rng, hidden * dim, weight_std(hidden, frozen)),
        frozen,
    )?;
    store.insert(&format!("{prefix}.b2"), vec![dim], zeros(dim), frozen)?;
    Ok(())
}

/// Register a full pre-norm encoder block: ln1, attention, ln2, feed-forward.
pub fn register_encoder_block(
    store: &mut ParameterStore,
    prefix: &str,
    dim: usize,
    frozen: bool,
    rng: &mut impl Rng,
) -> Result<()> {
    register_layer_norm(store, &format!("{prefix}.ln1"), dim, frozen)?;
    register_mha(store, &format!("{prefix}.attn"), dim, frozen, rng)?;
    register_layer_norm(store, &format!("{prefix}.ln2"), dim, frozen)?;
    register_ff(store, &format!("{prefix}.ff"), dim, frozen, rng)?;
    Ok(())
}

pub fn layer_norm_forward(
    g: &mut Graph,
    store: &ParameterStore,
    prefix: &str,
    x: TensorId,
) -> Result<TensorId> {
    let gamma = g.param(store, &format!("{prefix}.gamma"))?;
    let beta = g.param(store, &format!("{prefix}.beta"))?;
    g.layer_norm(x, gamma, beta, LN_EPS)
}

fn linear(
    g: &mut Graph,
    store: &ParameterStore,
    w: &str,
    b: &str,
    x: TensorId,
) -> Result<TensorId> {
    let w = g.param(store, w)?;
    let b = g.param(store, b)?;
    let h = g.matmul(x, w)?;
    g.add_bias(h, b)
}

/// Multi-head attention with separate query and key/value sources.
/// `1/sqrt(head_dim)` scaling, softmax over keys per query row.
pub fn attention(
    g: &mut Graph,
    q: TensorId,
    k: TensorId,
    v: TensorId,
    heads: usize,
) -> Result<TensorId> {
    let dim = g.shape(q)[1];
    let head_dim = dim / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut per_head = Vec::with_capacity(heads);
    for h in 0..heads {
        let (c0, c1) = (h * head_dim, (h + 1) * head_dim);
        let qh = g.slice_cols(q, c0, c1)?;
        let kh = g.slice_cols(k, c0, c1)?;
        let vh = g.slice_cols(v, c0, c1)?;
        let kt = g.transpose(kh)?;
        let logits = g.matmul(qh, kt)?;
        let scaled = g.mul_scalar(logits, scale)?;
        let probs = g.softmax_rows(scaled)?;
        per_head.push(g.matmul(probs, vh)?);
    }
    g.concat_cols(&per_head)
}

/// Self-attention with projections and output head, all named under
/// `{prefix}`.
pub fn mha_forward(
    g: &mut Graph,
    store: &ParameterStore,
    prefix: &str,
    x: TensorId,
    heads: usize,
) -> Result<TensorId> {
    let q = linear(g, store, &format!("{prefix}.wq"), &format!("{prefix}.bq"), x)?;
    let k = linear(g, store, &format!("{prefix}.wk"), &format!("{prefix}.bk"), x)?;
    let v = linear(g, store, &format!("{prefix}.wv"), &format!("{prefix}.bv"), x)?;
    let ctx = attention(g, q, k, v, heads)?;
    linear(
        g,
        store,
        &format!("{prefix}.wo"),
        &format!("{prefix}.bo"),
        ctx,
    )
}

pub fn ff_forward(
    g: &mut Graph,
    store: &ParameterStore,
    prefix: &str,
    x: TensorId,
) -> Result<TensorId> {
    let h = linear(g, store, &format!("{prefix}.w1"), &format!("{prefix}.b1"), x)?;
    let h = g.gelu(h)?;
    linear(g, store, &format!("{prefix}.w2"), &format!("{prefix}.b2"), h)
}

/// Pre-norm encoder block: `h = x + MHA(ln1(x)); y = h + FF(ln2(h))`.
pub fn encoder_block_forward(
    g: &mut Graph,
    store: &ParameterStore,
    prefix: &str,
    x: TensorId,
    heads: usize,
) -> Result<TensorId> {
    let normed = layer_norm_forward(g, store, &format!("{prefix}.ln1"), x)?;
    let attn = mha_forward(g, store, &format!("{prefix}.attn"), normed, heads)?;
    let h = g.add(x, attn)?;
    let normed2 = layer_norm_forward(g, store, &format!("{prefix}.ln2"), h)?;
    let ff = ff_forward(g, store, &format!("{prefix}.ff"), normed2)?;
    g.add(h, ff)
}

/// LoRA adapter: A Gaussian, B zero, so a fresh adapter is exactly the
/// identity.
pub fn register_lora(
    store: &mut ParameterStore,
    prefix: &str,
    dim: usize,
    rank: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    store.insert(
        &format!("{prefix}.a"),
        vec![dim, rank],
        gaussian(rng, dim * rank, weight_std(dim, false)),
        false,
    )?;
    store.insert(
        &format!("{prefix}.b"),
        vec![rank, dim],
        zeros(rank * dim),
        false,
    )?;
    Ok(())
}

/// `y = x + (alpha/rank) * x A B`, applied to the whole token sequence.
pub fn lora_forward(
    g: &mut Graph,
    store: &ParameterStore,
    prefix: &str,
    x: TensorId,
    rank: usize,
    alpha: f64,
) -> Result<TensorId> {
    let a = g.param(store, &format!("{prefix}.a"))?;
    let b = g.param(store, &format!("{prefix}.b"))?;
    let xa = g.matmul(x, a)?;
    let xab = g.matmul(xa, b)?;
    let scaled = g.mul_scalar(xab, alpha / rank as f64)?;
    g.add(x, scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Precision;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_x(g: &mut Graph, rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> TensorId {
        let v: Vec<f64> = (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        g.constant(v, vec![rows, dim]).unwrap()
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParameterStore::new();
        register_mha(&mut store, "blk", 8, false, &mut rng).unwrap();
        let mut g = Graph::new(Precision::F64);
        let x = random_x(&mut g, &mut rng, 5, 8);
        mha_forward(&mut g, &store, "blk", x, 2).unwrap();
        assert!(g.max_softmax_row_deviation() < 1e-6);
    }

    #[test]
    fn fresh_lora_is_exactly_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParameterStore::new();
        register_lora(&mut store, "lr", 6, 2, &mut rng).unwrap();
        let mut g = Graph::new(Precision::F64);
        let x = random_x(&mut g, &mut rng, 4, 6);
        let y = lora_forward(&mut g, &store, "lr", x, 2, 32.0).unwrap();
        for (a, b) in g.values(x).to_vec().iter().zip(g.values(y)) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rank_one_lora_matches_outer_product_algebra() {
        // A = e1, B = e1^T, alpha = rank = 1: y = x + x[:,0] outer e1.
        let dim = 4;
        let mut store = ParameterStore::new();
        let mut a = vec![0.0; dim];
        a[0] = 1.0;
        let mut b = vec![0.0; dim];
        b[0] = 1.0;
        store.insert("lr.a", vec![dim, 1], a, false).unwrap();
        store.insert("lr.b", vec![1, dim], b, false).unwrap();
        let mut g = Graph::new(Precision::F64);
        let xv = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let x = g.constant(xv.clone(), vec![2, dim]).unwrap();
        let y = lora_forward(&mut g, &store, "lr", x, 1, 1.0).unwrap();
        let mut expect = xv.clone();
        expect[0] += xv[0];
        expect[dim] += xv[dim];
        assert_eq!(g.values(y), expect.as_slice());
    }

    #[test]
    fn lora_matches_dense_materialization_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (dim, rank, alpha) = (6, 3, 12.0);
        let mut store = ParameterStore::new();
        register_lora(&mut store, "lr", dim, rank, &mut rng).unwrap();
        // Give B nonzero content so the adapter actually acts.
        store.get_mut("lr.b").unwrap().values =
            (0..rank * dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let a = store.get("lr.a").unwrap().values.clone();
        let b = store.get("lr.b").unwrap().values.clone();
        // Dense delta = (alpha/rank) * A B.
        let mut dense = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = 0.0;
                for r in 0..rank {
                    acc += a[i * rank + r] * b[r * dim + j];
                }
                dense[i * dim + j] = acc * alpha / rank as f64;
            }
        }
        let mut g = Graph::new(Precision::F64);
        let xv: Vec<f64> = (0..3 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = g.constant(xv.clone(), vec![3, dim]).unwrap();
        let y = lora_forward(&mut g, &store, "lr", x, rank, alpha).unwrap();
        for row in 0..3 {
            for j in 0..dim {
                let mut expect = xv[row * dim + j];
                for i in 0..dim {
                    expect += xv[row * dim + i] * dense[i * dim + j];
                }
                assert!((g.values(y)[row * dim + j] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn encoder_block_gradients_pass_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut store = ParameterStore::new();
        register_encoder_block(&mut store, "blk", 6, false, &mut rng).unwrap();
        let xv: Vec<f64> = (0..4 * 6).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let build = |g: &mut Graph, s: &ParameterStore| {
            let x = g.constant(xv.clone(), vec![4, 6])?;
            let y = encoder_block_forward(g, s, "blk", x, 2)?;
            let sq = g.mul(y, y)?;
            g.mean_all(sq)
        };
        let mut g = Graph::new(Precision::F64);
        let loss = build(&mut g, &store).unwrap();
        g.backward(loss).unwrap();
        let grads = g.param_grads();
        let mut check_rng = ChaCha8Rng::seed_from_u64(9);
        for (name, analytic) in grads.iter() {
            let err = crate::gradcheck::grad_check_param(
                |s: &ParameterStore| {
                    let mut g2 = Graph::new(Precision::F64);
                    let l = build(&mut g2, s)?;
                    g2.scalar(l)
                },
                &store,
                name,
                analytic,
                1e-5,
                40,
                &mut check_rng,
            )
            .unwrap();
            assert!(err < 1e-5, "{name}: {err}");
        }
    }

    #[test]
    fn joint_permutation_of_tokens_and_positions_is_invariant() {
        // Transformer algebra: permuting input rows permutes output rows.
        // With positions folded in before the block, permuting (token, pos)
        // pairs leaves any fixed row's output unchanged if that row is kept.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParameterStore::new();
        register_encoder_block(&mut store, "blk", 4, false, &mut rng).unwrap();
        let rows = 5;
        let base: Vec<f64> = (0..rows * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let run = |order: &[usize], store: &ParameterStore| -> Vec<f64> {
            let mut g = Graph::new(Precision::F64);
            let permuted: Vec<f64> = order
                .iter()
                .flat_map(|&r| base[r * 4..(r + 1) * 4].to_vec())
                .collect();
            let x = g.constant(permuted, vec![rows, 4]).unwrap();
            let y = encoder_block_forward(&mut g, store, "blk", x, 2).unwrap();
            // Row holding original token 0.
            let pos = order.iter().position(|&r| r == 0).unwrap();
            g.values(y)[pos * 4..(pos + 1) * 4].to_vec()
        };

        let identity: Vec<usize> = (0..rows).collect();
        let shuffled = vec![0, 3, 1, 4, 2];
        let a = run(&identity, &store);
        let b = run(&shuffled, &store);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}
