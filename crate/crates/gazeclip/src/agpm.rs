//! Appearance-gaze perception module: a stride-2 convolutional appearance
//! encoder followed by a transformer encoder over
//! `[class || appearance tokens || gaze token]`, returning the class row as
//! the fused appearance-gaze embedding. Everything here is trainable.

use crate::blocks::{encoder_block_forward, register_encoder_block, register_layer_norm, LN_EPS};
use crate::config::ModelConfig;
#[cfg(test)]
use crate::image::Image;
use crate::error::{Error, Result};
use crate::params::{gaussian, weight_std, zeros, ParameterStore, INIT_STD};
use crate::tensor::{Graph, TensorId};
use rand::Rng;

const KERNEL: usize = 3;

/// Sequence length entering the transformer: class + n appearance tokens,
/// plus the gaze token when the gaze branch is enabled.
pub fn sequence_len(cfg: &ModelConfig) -> usize {
    1 + cfg.appearance_tokens() + usize::from(cfg.gaze_enabled)
}

pub fn register_params(
    store: &mut ParameterStore,
    cfg: &ModelConfig,
    rng: &mut impl Rng,
) -> Result<()> {
    let a = cfg.dim_appearance;
    if cfg.gaze_enabled {
        store.insert(
            "vpe.gaze_proj.w",
            vec![cfg.dim_image, a],
            gaussian(rng, cfg.dim_image * a, weight_std(cfg.dim_image, false)),
            false,
        )?;
    }
    let mut in_ch = 3;
    for (i, &out_ch) in cfg.ae_channels.iter().enumerate() {
        store.insert(
            &format!("vpe.ae.stage{i}.conv.w"),
            vec![out_ch, in_ch, KERNEL, KERNEL],
            gaussian(
                rng,
                out_ch * in_ch * KERNEL * KERNEL,
                weight_std(in_ch * KERNEL * KERNEL, false),
            ),
            false,
        )?;
        store.insert(
            &format!("vpe.ae.stage{i}.conv.b"),
            vec![out_ch],
            zeros(out_ch),
            false,
        )?;
        register_layer_norm(store, &format!("vpe.ae.stage{i}.norm"), out_ch, false)?;
        in_ch = out_ch;
    }
    store.insert(
        "vpe.agte.proj.w",
        vec![cfg.feature_c, a],
        gaussian(rng, cfg.feature_c * a, weight_std(cfg.feature_c, false)),
        false,
    )?;
    store.insert("vpe.agte.proj.b", vec![a], zeros(a), false)?;
    store.insert("vpe.agte.cls", vec![1, a], gaussian(rng, a, INIT_STD), false)?;
    let seq = sequence_len(cfg);
    store.insert(
        "vpe.agte.pos",
        vec![seq, a],
        gaussian(rng, seq * a, INIT_STD),
        false,
    )?;
    for j in 0..cfg.agpm_blocks {
        register_encoder_block(store, &format!("vpe.agte.block{j}"), a, false, rng)?;
    }
    Ok(())
}

/// Convolutional stack: each stage is stride-2 conv (3x3, pad 1), layer
/// normalization over channels at each spatial position, then GELU.
/// Output feature map is `[c, h, w]` per the config.
pub fn appearance_encode(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &ModelConfig,
    image: TensorId,
) -> Result<TensorId> {
    let shape = g.shape(image).to_vec();
    if shape != vec![3, cfg.image, cfg.image] {
        return Err(Error::Dimension(format!(
            "appearance_encode: image shape {:?} does not match config {}x{}",
            shape, cfg.image, cfg.image
        )));
    }
    let mut x = image;
    for (i, &out_ch) in cfg.ae_channels.iter().enumerate() {
        let w = g.param(store, &format!("vpe.ae.stage{i}.conv.w"))?;
        let b = g.param(store, &format!("vpe.ae.stage{i}.conv.b"))?;
        let y = g.conv2d(x, w, b, 2, 1)?;
        // Channels-last layer norm: normalize each spatial position over
        // channels, then restore the planar layout.
        let (h, wd) = (g.shape(y)[1], g.shape(y)[2]);
        let flat = g.reshape(y, vec![out_ch, h * wd])?;
        let t = g.transpose(flat)?;
        let gamma = g.param(store, &format!("vpe.ae.stage{i}.norm.gamma"))?;
        let beta = g.param(store, &format!("vpe.ae.stage{i}.norm.beta"))?;
        let n = g.layer_norm(t, gamma, beta, LN_EPS)?;
        let act = g.gelu(n)?;
        let back = g.transpose(act)?;
        x = g.reshape(back, vec![out_ch, h, wd])?;
    }
    Ok(x)
}

/// Flatten the `[c,h,w]` map into n = h*w position vectors and project each
/// from c to a with a shared linear map.
pub fn tokenize_appearance(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &ModelConfig,
    map: TensorId,
) -> Result<TensorId> {
    let shape = g.shape(map).to_vec();
    if shape != vec![cfg.feature_c, cfg.feature_h, cfg.feature_w] {
        return Err(Error::Dimension(format!(
            "tokenize_appearance: map shape {:?} does not match config ({}, {}, {})",
            shape, cfg.feature_c, cfg.feature_h, cfg.feature_w
        )));
    }
    let n = cfg.appearance_tokens();
    let flat = g.reshape(map, vec![cfg.feature_c, n])?;
    let t = g.transpose(flat)?; // [n, c]
    let w = g.param(store, "vpe.agte.proj.w")?;
    let b = g.param(store, "vpe.agte.proj.b")?;
    let proj = g.matmul(t, w)?;
    g.add_bias(proj, b)
}

/// Full module forward: encode, tokenize, assemble the sequence with class
/// and (optionally) gaze tokens, add positions, run the encoder blocks, and
/// return the class row.
///
/// `gaze_token` is the d-dimensional gaze embedding; it is lifted to the
/// appearance width by a dedicated trainable projection.
pub fn agpm_forward(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &ModelConfig,
    image: TensorId,
    gaze_token: Option<TensorId>,
) -> Result<TensorId> {
    let map = appearance_encode(g, store, cfg, image)?;
    let tokens = tokenize_appearance(g, store, cfg, map)?;
    let cls = g.param(store, "vpe.agte.cls")?;
    let mut parts = vec![cls, tokens];
    if let Some(gz) = gaze_token {
        let w = g.param(store, "vpe.gaze_proj.w")?;
        let lifted = g.matmul(gz, w)?;
        parts.push(lifted);
    }
    let seq = g.concat_rows(&parts)?;
    let pos = g.param(store, "vpe.agte.pos")?;
    let mut x = g.add(seq, pos)?;
    for j in 0..cfg.agpm_blocks {
        x = encoder_block_forward(g, store, &format!("vpe.agte.block{j}"), x, cfg.heads)?;
    }
    g.slice_rows(x, 0, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Precision;
    use crate::gaze::gaze_adapter;
    use crate::gaze::GazeVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk_store(cfg: &ModelConfig, seed: u64) -> ParameterStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        store
            .insert(
                "gaze.adapter.w",
                vec![2, cfg.dim_image],
                crate::params::gaussian(&mut rng, 2 * cfg.dim_image, 0.1),
                false,
            )
            .unwrap();
        register_params(&mut store, cfg, &mut rng).unwrap();
        store
    }

    fn random_image(cfg: &ModelConfig, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image::new(cfg.image, cfg.image);
        for v in img.data.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        img
    }

    #[test]
    fn appearance_map_has_configured_shape() {
        let cfg = ModelConfig::desk();
        let store = desk_store(&cfg, 1);
        let img = random_image(&cfg, 2);
        let mut g = Graph::new(Precision::F64);
        let leaf = g.constant(img.data.clone(), img.shape()).unwrap();
        let map = appearance_encode(&mut g, &store, &cfg, leaf).unwrap();
        assert_eq!(g.shape(map), &[8, 4, 4]);
    }

    #[test]
    fn zero_image_zero_biases_gives_zero_map_through_first_conv() {
        // Linearity check on the first stage in isolation: zero input and
        // zero bias convolve to zero.
        let cfg = ModelConfig::desk();
        let store = desk_store(&cfg, 3);
        let mut g = Graph::new(Precision::F64);
        let zero = g
            .constant(vec![0.0; 3 * cfg.image * cfg.image], vec![3, cfg.image, cfg.image])
            .unwrap();
        let w = g.param(&store, "vpe.ae.stage0.conv.w").unwrap();
        let b = g.param(&store, "vpe.ae.stage0.conv.b").unwrap();
        let y = g.conv2d(zero, w, b, 2, 1).unwrap();
        assert!(g.values(y).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tokenize_matches_reshape_matmul_oracle() {
        let cfg = ModelConfig::desk();
        let store = desk_store(&cfg, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = cfg.feature_c;
        let n = cfg.appearance_tokens();
        let map: Vec<f64> = (0..c * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut g = Graph::new(Precision::F64);
        let leaf = g
            .constant(map.clone(), vec![c, cfg.feature_h, cfg.feature_w])
            .unwrap();
        let tokens = tokenize_appearance(&mut g, &store, &cfg, leaf).unwrap();
        assert_eq!(g.shape(tokens), &[n, cfg.dim_appearance]);
        let w = &store.get("vpe.agte.proj.w").unwrap().values;
        let b = &store.get("vpe.agte.proj.b").unwrap().values;
        for pos in 0..n {
            for j in 0..cfg.dim_appearance {
                let mut expect = b[j];
                for ch in 0..c {
                    // Token `pos` reads channel ch at spatial index pos.
                    expect += map[ch * n + pos] * w[ch * cfg.dim_appearance + j];
                }
                let got = g.values(tokens)[pos * cfg.dim_appearance + j];
                assert!((got - expect).abs() < 1e-6, "{got} vs {expect}");
            }
        }
    }

    #[test]
    fn single_position_map_tokenizes_to_one_projected_token() {
        let cfg = {
            let mut c = ModelConfig::desk();
            c.feature_h = 1;
            c.feature_w = 1;
            c
        };
        let mut store = ParameterStore::new();
        let a = cfg.dim_appearance;
        let w: Vec<f64> = (0..cfg.feature_c * a).map(|i| (i % 5) as f64 * 0.1).collect();
        store
            .insert("vpe.agte.proj.w", vec![cfg.feature_c, a], w.clone(), false)
            .unwrap();
        store.insert("vpe.agte.proj.b", vec![a], vec![0.0; a], false).unwrap();
        let mut g = Graph::new(Precision::F64);
        let map: Vec<f64> = (0..cfg.feature_c).map(|i| i as f64).collect();
        let leaf = g.constant(map.clone(), vec![cfg.feature_c, 1, 1]).unwrap();
        let tokens = tokenize_appearance(&mut g, &store, &cfg, leaf).unwrap();
        assert_eq!(g.shape(tokens), &[1, a]);
        for j in 0..a {
            let expect: f64 = (0..cfg.feature_c).map(|ch| map[ch] * w[ch * a + j]).sum();
            assert!((g.values(tokens)[j] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn sequence_enters_blocks_with_n_plus_2_rows() {
        let cfg = ModelConfig::desk();
        assert_eq!(sequence_len(&cfg), cfg.appearance_tokens() + 2);
        let store = desk_store(&cfg, 6);
        let img = random_image(&cfg, 7);
        let mut g = Graph::new(Precision::F64);
        let leaf = g.constant(img.data.clone(), img.shape()).unwrap();
        let gaze = gaze_adapter(&mut g, &store, GazeVector { yaw: 0.1, pitch: -0.2 }).unwrap();
        let out = agpm_forward(&mut g, &store, &cfg, leaf, Some(gaze)).unwrap();
        assert_eq!(g.shape(out), &[1, cfg.dim_appearance]);
        // Attention rows in every block are probability distributions.
        assert!(g.max_softmax_row_deviation() < 1e-6);
        // The position table itself pins the sequence length.
        assert_eq!(
            store.get("vpe.agte.pos").unwrap().shape,
            vec![cfg.appearance_tokens() + 2, cfg.dim_appearance]
        );
    }

    #[test]
    fn zero_blocks_degenerate_to_class_plus_position_row() {
        let mut cfg = ModelConfig::desk();
        cfg.agpm_blocks = 0;
        cfg.gaze_enabled = false;
        let store = desk_store(&cfg, 8);
        let img = random_image(&cfg, 9);
        let mut g = Graph::new(Precision::F64);
        let leaf = g.constant(img.data.clone(), img.shape()).unwrap();
        let out = agpm_forward(&mut g, &store, &cfg, leaf, None).unwrap();
        let cls = &store.get("vpe.agte.cls").unwrap().values;
        let pos = &store.get("vpe.agte.pos").unwrap().values;
        for j in 0..cfg.dim_appearance {
            assert!((g.values(out)[j] - (cls[j] + pos[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn class_output_invariant_under_joint_token_position_permutation() {
        // Permute the appearance tokens together with their position rows;
        // transformer algebra says the class-token output cannot change.
        let mut cfg = ModelConfig::desk();
        cfg.gaze_enabled = false;
        let store = desk_store(&cfg, 13);
        let n = cfg.appearance_tokens();
        let a = cfg.dim_appearance;
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let tokens: Vec<f64> = (0..n * a).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pos = store.get("vpe.agte.pos").unwrap().values.clone();

        let run = |order: &[usize]| -> Vec<f64> {
            let mut g = Graph::new(Precision::F64);
            let cls = g.param(&store, "vpe.agte.cls").unwrap();
            let permuted_tokens: Vec<f64> = order
                .iter()
                .flat_map(|&i| tokens[i * a..(i + 1) * a].to_vec())
                .collect();
            let toks = g.constant(permuted_tokens, vec![n, a]).unwrap();
            let seq = g.concat_rows(&[cls, toks]).unwrap();
            // Position rows: class row 0 stays, appearance rows permuted.
            let mut permuted_pos = pos[0..a].to_vec();
            for &i in order {
                permuted_pos.extend_from_slice(&pos[(1 + i) * a..(2 + i) * a]);
            }
            let p = g.constant(permuted_pos, vec![n + 1, a]).unwrap();
            let mut x = g.add(seq, p).unwrap();
            for j in 0..cfg.agpm_blocks {
                x = crate::blocks::encoder_block_forward(
                    &mut g,
                    &store,
                    &format!("vpe.agte.block{j}"),
                    x,
                    cfg.heads,
                )
                .unwrap();
            }
            let out = g.slice_rows(x, 0, 1).unwrap();
            g.values(out).to_vec()
        };

        let identity: Vec<usize> = (0..n).collect();
        let mut shuffled = identity.clone();
        shuffled.swap(0, 9);
        shuffled.swap(3, 15);
        shuffled.swap(7, 2);
        let base = run(&identity);
        let permuted = run(&shuffled);
        for (x, y) in base.iter().zip(&permuted) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn gradient_reaches_gaze_adapter_through_agpm() {
        let cfg = {
            let mut c = ModelConfig::desk();
            c.precision = Precision::F64;
            c
        };
        let store = desk_store(&cfg, 10);
        let img = random_image(&cfg, 11);
        let gaze = GazeVector { yaw: 0.3, pitch: -0.1 };
        let build = |g: &mut Graph, s: &ParameterStore| {
            let leaf = g.constant(img.data.clone(), img.shape())?;
            let token = gaze_adapter(g, s, gaze)?;
            let out = agpm_forward(g, s, &cfg, leaf, Some(token))?;
            let sq = g.mul(out, out)?;
            g.mean_all(sq)
        };
        let mut g = Graph::new(Precision::F64);
        let loss = build(&mut g, &store).unwrap();
        g.backward(loss).unwrap();
        let grads = g.param_grads();
        let adapter_grad = grads.get("gaze.adapter.w").unwrap();
        assert!(adapter_grad.iter().any(|v| v.abs() > 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let err = crate::gradcheck::grad_check_param(
            |s: &ParameterStore| {
                let mut g2 = Graph::new(Precision::F64);
                let l = build(&mut g2, s)?;
                g2.scalar(l)
            },
            &store,
            "gaze.adapter.w",
            adapter_grad,
            1e-5,
            64,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-4, "finite-difference error {err}");
    }
}
