//! Model assembly: parameter-store construction in a fixed deterministic
//! order, and the visual/text forward paths shared by training, evaluation,
//! and verification.
//!
//! The inference path runs only the visual perception and image encoders —
//! the language branch exists solely at training time.

use crate::config::{CmcFeature, GazeSource, ModelConfig, Precision};
use crate::data::ManifestRecord;
use crate::error::{Error, Result};
use crate::gaze::{estimate_gaze_standin, gaze_adapter, GazeVector};
use crate::image::Image;
use crate::params::{gaussian, weight_std, ParameterStore};
use crate::tensor::{Graph, TensorId};
use crate::{agpm, fusion, gie, lre};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Build every parameter the configuration calls for, in a fixed order,
/// from a single seeded stream. `vocab_size` is required when the language
/// encoder is enabled.
pub fn build_store(
    cfg: &ModelConfig,
    vocab_size: Option<usize>,
    seed: u64,
) -> Result<ParameterStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    if cfg.gaze_enabled {
        store.insert(
            crate::gaze::GAZE_ADAPTER_PARAM,
            vec![2, cfg.dim_image],
            gaussian(&mut rng, 2 * cfg.dim_image, weight_std(2, false)),
            false,
        )?;
    }
    if cfg.agpm_enabled {
        agpm::register_params(&mut store, cfg, &mut rng)?;
    }
    if cfg.gie_enabled {
        gie::register_params(&mut store, cfg, &mut rng)?;
    }
    if cfg.lre_enabled {
        let vocab = vocab_size.ok_or_else(|| {
            Error::Contract("language encoder enabled but no vocabulary size given".into())
        })?;
        lre::register_params(&mut store, cfg, vocab, &mut rng)?;
    }
    fusion::register_params(&mut store, cfg, &mut rng)?;
    if cfg.precision == Precision::F32 {
        for name in store
            .iter()
            .map(|(n, _)| n.to_string())
            .collect::<Vec<_>>()
        {
            let p = store.get_mut(&name).unwrap();
            for v in p.values.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }
    Ok(store)
}

/// Resolve a sample's gaze vector from the configured source.
pub fn resolve_gaze(cfg: &ModelConfig, record: &ManifestRecord, image: &Image) -> Result<GazeVector> {
    match cfg.gaze_source {
        GazeSource::Manifest => record.gaze.ok_or_else(|| {
            Error::Data(format!(
                "record `{}` has no gaze field but gaze.source = manifest",
                record.id
            ))
        }),
        GazeSource::StandIn => Ok(estimate_gaze_standin(&image.normalize()?)),
    }
}

/// Per-sample outputs of the visual path.
pub struct VisualOutputs {
    pub fused: TensorId,
    pub attr_logits: TensorId,
    pub det_logits: TensorId,
    pub i_ig: Option<TensorId>,
    pub i_ag: Option<TensorId>,
}

/// Visual path: gaze token, appearance-gaze embedding, gaze-aware image
/// embedding, fusion, expert logits. The raw [0,1] image feeds the
/// encoders; only the gaze estimator sees the mean/std-normalized image.
pub fn visual_forward(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &ModelConfig,
    image: &Image,
    gaze: GazeVector,
) -> Result<VisualOutputs> {
    let image_leaf = g.constant(image.data.clone(), image.shape())?;
    let gaze_token = if cfg.gaze_enabled {
        Some(gaze_adapter(g, store, gaze)?)
    } else {
        None
    };
    let i_ag = if cfg.agpm_enabled {
        Some(agpm::agpm_forward(g, store, cfg, image_leaf, gaze_token)?)
    } else {
        None
    };
    let i_ig = if cfg.gie_enabled {
        Some(gie::gie_forward(g, store, cfg, image_leaf, gaze_token)?)
    } else {
        None
    };
    let fused = fusion::fuse(g, store, i_ig, i_ag)?;
    let attr_logits = fusion::attribution_logits(g, store, fused)?;
    let det_logits = fusion::detection_logits(g, store, fused)?;
    Ok(VisualOutputs {
        fused,
        attr_logits,
        det_logits,
        i_ig,
        i_ag,
    })
}

/// The visual feature paired with the text feature in the contrastive loss.
pub fn contrastive_feature(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &ModelConfig,
    outputs: &VisualOutputs,
) -> Result<TensorId> {
    match cfg.cmc_feature {
        CmcFeature::Fused => Ok(outputs.fused),
        CmcFeature::Agpm => {
            let i_ag = outputs.i_ag.ok_or_else(|| {
                Error::Config("cmc_feature = agpm requires the appearance module".into())
            })?;
            fusion::agpm_shared_feature(g, store, i_ag)
        }
    }
}

/// Text path: prompt to token ids to pooled feature.
pub fn text_forward(
    g: &mut Graph,
    store: &ParameterStore,
    cfg: &ModelConfig,
    vocab: &lre::Vocabulary,
    text: &str,
) -> Result<TensorId> {
    let (ids, eos) = vocab.encode(text, cfg.lre_tokens)?;
    lre::lre_forward(g, store, cfg, &ids, eos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{render, GeneratorSpec};

    #[test]
    fn store_is_deterministic_in_the_seed() {
        let cfg = ModelConfig::desk();
        let a = build_store(&cfg, Some(50), 3).unwrap();
        let b = build_store(&cfg, Some(50), 3).unwrap();
        assert_eq!(a.len(), b.len());
        for (name, _) in a.iter() {
            assert!(a.bitwise_equal(&b, name), "{name}");
        }
        let c = build_store(&cfg, Some(50), 4).unwrap();
        assert!(!a.bitwise_equal(&c, "gie.cls"));
    }

    #[test]
    fn module_toggles_change_registered_parameters() {
        let base = ModelConfig::desk();
        let full = build_store(&base, Some(50), 1).unwrap();
        let mut no_lre = base.clone();
        no_lre.lre_enabled = false;
        let visual_only = build_store(&no_lre, None, 1).unwrap();
        assert!(full.contains("lre.pos"));
        assert!(!visual_only.contains("lre.pos"));
        assert!(!visual_only.contains("fusion.logit_scale"));

        let mut no_gaze = base.clone();
        no_gaze.gaze_enabled = false;
        let gazeless = build_store(&no_gaze, Some(50), 1).unwrap();
        assert!(!gazeless.contains(crate::gaze::GAZE_ADAPTER_PARAM));
        assert!(!gazeless.contains("gie.block0.gi.w_que"));
        assert!(!gazeless.contains("vpe.gaze_proj.w"));
    }

    #[test]
    fn visual_forward_produces_expected_shapes() {
        let cfg = ModelConfig::desk();
        let store = build_store(&cfg, Some(50), 5).unwrap();
        let img = render(&GeneratorSpec::synthetic(0), 7, cfg.image);
        let gaze = resolve_gaze(&cfg, &dummy_record(), &img).unwrap();
        let mut g = Graph::new(cfg.precision);
        let out = visual_forward(&mut g, &store, &cfg, &img, gaze).unwrap();
        assert_eq!(g.shape(out.fused), &[1, cfg.dim_shared]);
        assert_eq!(g.shape(out.attr_logits), &[1, cfg.classes]);
        assert_eq!(g.shape(out.det_logits), &[1, 2]);
    }

    fn dummy_record() -> ManifestRecord {
        use crate::data::{Family, ForgeryType, Source, Split};
        ManifestRecord {
            id: "x".into(),
            source: Source::Seed(7),
            split: Split::Test,
            detection_label: 1,
            attribution_label: 1,
            generator: "syn-g00".into(),
            forgery_type: ForgeryType::Efs,
            family: Family::Gan,
            l1: "a photo of a fake face".into(),
            l2: "entire face synthesis manipulation".into(),
            l3: "made by a gan model".into(),
            l4: "generator syn-g00".into(),
            gaze: None,
        }
    }

    #[test]
    fn manifest_gaze_source_is_verbatim_and_errors_when_missing() {
        let mut cfg = ModelConfig::desk();
        cfg.gaze_source = GazeSource::Manifest;
        let img = Image::filled(cfg.image, cfg.image, 0.5);
        let mut record = dummy_record();
        record.gaze = Some(GazeVector { yaw: 0.1, pitch: -0.2 });
        let got = resolve_gaze(&cfg, &record, &img).unwrap();
        assert_eq!(got.yaw, 0.1);
        assert_eq!(got.pitch, -0.2);
        record.gaze = None;
        let err = resolve_gaze(&cfg, &record, &img).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn eval_style_forward_never_touches_language_parameters() {
        let cfg = ModelConfig::desk();
        let store = build_store(&cfg, Some(50), 9).unwrap();
        let img = render(&GeneratorSpec::real(), 11, cfg.image);
        let gaze = resolve_gaze(&cfg, &dummy_record(), &img).unwrap();
        let mut g = Graph::new(cfg.precision);
        visual_forward(&mut g, &store, &cfg, &img, gaze).unwrap();
        assert!(g.touched_params().all(|n| !n.starts_with("lre.")));
    }
}
