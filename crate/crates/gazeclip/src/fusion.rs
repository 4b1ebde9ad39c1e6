//! Fusion of the image-encoder and appearance-gaze embeddings into the
//! shared visual feature, plus the attribution and detection experts.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::params::{gaussian, weight_std, zeros, ParameterStore};
use crate::tensor::{Graph, TensorId};
use rand::Rng;

/// CLIP-convention initial temperature: log(1/0.07).
pub fn initial_logit_scale() -> f64 {
    (1.0f64 / 0.07).ln()
}

/// Hard cap on exp(logit_scale), projected after each optimizer step.
pub const MAX_LOGIT_SCALE: f64 = 100.0;

pub fn register_params(
    store: &mut ParameterStore,
    cfg: &ModelConfig,
    rng: &mut impl Rng,
) -> Result<()> {
    let s = cfg.dim_shared;
    if cfg.gie_enabled {
        store.insert(
            "fusion.w_ig",
            vec![cfg.dim_image, s],
            gaussian(rng, cfg.dim_image * s, weight_std(cfg.dim_image, false)),
            false,
        )?;
    }
    if cfg.agpm_enabled {
        store.insert(
            "fusion.w_ag",
            vec![cfg.dim_appearance, s],
            gaussian(rng, cfg.dim_appearance * s, weight_std(cfg.dim_appearance, false)),
            false,
        )?;
    }
    if cfg.lre_enabled {
        store.insert(
            "fusion.logit_scale",
            vec![1],
            vec![initial_logit_scale()],
            false,
        )?;
    }
    store.insert(
        "head.attr.w",
        vec![s, cfg.classes],
        gaussian(rng, s * cfg.classes, weight_std(s, false)),
        false,
    )?;
    store.insert("head.attr.b", vec![cfg.classes], zeros(cfg.classes), false)?;
    store.insert(
        "head.det.w",
        vec![s, 2],
        gaussian(rng, s * 2, weight_std(s, false)),
        false,
    )?;
    store.insert("head.det.b", vec![2], zeros(2), false)?;
    Ok(())
}

/// Project each enabled global embedding to the shared width and add them
/// elementwise.
pub fn fuse(
    g: &mut Graph,
    store: &ParameterStore,
    i_ig: Option<TensorId>,
    i_ag: Option<TensorId>,
) -> Result<TensorId> {
    let mut acc: Option<TensorId> = None;
    if let Some(ig) = i_ig {
        let w = g.param(store, "fusion.w_ig")?;
        acc = Some(g.matmul(ig, w)?);
    }
    if let Some(ag) = i_ag {
        let w = g.param(store, "fusion.w_ag")?;
        let proj = g.matmul(ag, w)?;
        acc = Some(match acc {
            Some(prev) => g.add(prev, proj)?,
            None => proj,
        });
    }
    acc.ok_or_else(|| Error::Contract("fuse: no visual branch enabled".into()))
}

/// Projection of the appearance-gaze embedding alone into the shared space
/// (the alternative contrastive feature).
pub fn agpm_shared_feature(
    g: &mut Graph,
    store: &ParameterStore,
    i_ag: TensorId,
) -> Result<TensorId> {
    let w = g.param(store, "fusion.w_ag")?;
    g.matmul(i_ag, w)
}

pub fn attribution_logits(
    g: &mut Graph,
    store: &ParameterStore,
    visual: TensorId,
) -> Result<TensorId> {
    let w = g.param(store, "head.attr.w")?;
    let b = g.param(store, "head.attr.b")?;
    let h = g.matmul(visual, w)?;
    g.add_bias(h, b)
}

pub fn detection_logits(
    g: &mut Graph,
    store: &ParameterStore,
    visual: TensorId,
) -> Result<TensorId> {
    let w = g.param(store, "head.det.w")?;
    let b = g.param(store, "head.det.b")?;
    let h = g.matmul(visual, w)?;
    g.add_bias(h, b)
}

/// Softmax over a logit slice (stable, max-subtracted).
pub fn softmax_probs(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Attribution and detection simplices for one sample.
pub fn predict(attr_logits: &[f64], det_logits: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (softmax_probs(attr_logits), softmax_probs(det_logits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Precision;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_for(cfg: &ModelConfig, seed: u64) -> ParameterStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        register_params(&mut store, cfg, &mut rng).unwrap();
        store
    }

    #[test]
    fn zero_appearance_projection_reduces_to_image_branch() {
        let cfg = ModelConfig::desk();
        let mut store = store_for(&cfg, 1);
        let a = cfg.dim_appearance;
        store.get_mut("fusion.w_ag").unwrap().values = vec![0.0; a * cfg.dim_shared];
        let mut g = Graph::new(Precision::F64);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ig = g
            .constant(
                (0..cfg.dim_image).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                vec![1, cfg.dim_image],
            )
            .unwrap();
        let ag = g
            .constant(
                (0..a).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                vec![1, a],
            )
            .unwrap();
        let fused = fuse(&mut g, &store, Some(ig), Some(ag)).unwrap();
        let w_ig = g.param(&store, "fusion.w_ig").unwrap();
        let only = g.matmul(ig, w_ig).unwrap();
        for (x, y) in g.values(fused).to_vec().iter().zip(g.values(only)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_inputs_fuse_to_zero() {
        let cfg = ModelConfig::desk();
        let store = store_for(&cfg, 3);
        let mut g = Graph::new(Precision::F64);
        let ig = g.constant(vec![0.0; cfg.dim_image], vec![1, cfg.dim_image]).unwrap();
        let ag = g
            .constant(vec![0.0; cfg.dim_appearance], vec![1, cfg.dim_appearance])
            .unwrap();
        let fused = fuse(&mut g, &store, Some(ig), Some(ag)).unwrap();
        assert!(g.values(fused).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fuse_matches_matmul_add_oracle() {
        let cfg = ModelConfig::desk();
        let store = store_for(&cfg, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let igv: Vec<f64> = (0..cfg.dim_image).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let agv: Vec<f64> = (0..cfg.dim_appearance).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut g = Graph::new(Precision::F64);
        let ig = g.constant(igv.clone(), vec![1, cfg.dim_image]).unwrap();
        let ag = g.constant(agv.clone(), vec![1, cfg.dim_appearance]).unwrap();
        let fused = fuse(&mut g, &store, Some(ig), Some(ag)).unwrap();
        let wig = &store.get("fusion.w_ig").unwrap().values;
        let wag = &store.get("fusion.w_ag").unwrap().values;
        for j in 0..cfg.dim_shared {
            let mut expect = 0.0;
            for i in 0..cfg.dim_image {
                expect += igv[i] * wig[i * cfg.dim_shared + j];
            }
            for i in 0..cfg.dim_appearance {
                expect += agv[i] * wag[i * cfg.dim_shared + j];
            }
            assert!((g.values(fused)[j] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_logits_predict_uniform_simplices() {
        let (y, z) = predict(&[0.0; 11], &[0.0; 2]);
        for p in &y {
            assert!((p - 1.0 / 11.0).abs() < 1e-12);
        }
        assert!((z[0] - 0.5).abs() < 1e-12);
        let sum: f64 = y.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn argmax_is_invariant_to_uniform_logit_shift() {
        let logits = [0.3, -1.2, 2.0, 0.9];
        let shifted: Vec<f64> = logits.iter().map(|v| v + 17.5).collect();
        let a = softmax_probs(&logits);
        let b = softmax_probs(&shifted);
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(argmax(&a), argmax(&b));
        assert_eq!(argmax(&a), 2);
    }
}
