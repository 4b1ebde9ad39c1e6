//! The three-term training loss: attribution cross entropy, detection cross
//! entropy, and the symmetric cross-modal contrastive loss, summed
//! unweighted.

use crate::error::{Error, Result};
use crate::tensor::{Graph, TensorId};

/// Detection loss: mean cross entropy of the detection logits against the
/// 0/1 labels (real = class 0, fake = class 1).
pub fn loss_dfd(g: &mut Graph, det_logits: TensorId, labels: &[usize]) -> Result<TensorId> {
    for &l in labels {
        if l > 1 {
            return Err(Error::Data(format!("detection label {l} outside {{0,1}}")));
        }
    }
    g.cross_entropy_logits(det_logits, labels)
}

/// Attribution loss: mean cross entropy of the attribution logits against
/// the seen-class labels.
pub fn loss_dfa(
    g: &mut Graph,
    attr_logits: TensorId,
    labels: &[usize],
    classes: usize,
) -> Result<TensorId> {
    for &l in labels {
        if l >= classes {
            return Err(Error::Data(format!(
                "attribution label {l} outside 0..{classes}"
            )));
        }
    }
    g.cross_entropy_logits(attr_logits, labels)
}

/// Contrastive loss over a batch of visual and text features: L2-normalize
/// rows, scale similarities by exp(logit_scale), then symmetric cross
/// entropy against the diagonal, averaged over both directions.
pub fn loss_cmc(
    g: &mut Graph,
    image_feats: TensorId,
    text_feats: TensorId,
    logit_scale: TensorId,
) -> Result<TensorId> {
    let b = g.shape(image_feats)[0];
    if b < 2 {
        return Err(Error::Config(format!(
            "contrastive loss needs a batch of at least 2, got {b}"
        )));
    }
    if g.shape(image_feats) != g.shape(text_feats) {
        return Err(Error::Dimension(format!(
            "contrastive features disagree: {:?} vs {:?}",
            g.shape(image_feats),
            g.shape(text_feats)
        )));
    }
    let img = g.l2_normalize_rows(image_feats)?;
    let txt = g.l2_normalize_rows(text_feats)?;
    let txt_t = g.transpose(txt)?;
    let sims = g.matmul(img, txt_t)?;
    let scale = g.exp(logit_scale)?;
    let logits = g.scale_by_scalar(sims, scale)?;
    let diagonal: Vec<usize> = (0..b).collect();
    let image_to_text = g.cross_entropy_logits(logits, &diagonal)?;
    let logits_t = g.transpose(logits)?;
    let text_to_image = g.cross_entropy_logits(logits_t, &diagonal)?;
    let sum = g.add(image_to_text, text_to_image)?;
    g.mul_scalar(sum, 0.5)
}

/// Unweighted sum of the enabled loss terms.
pub fn total_loss(g: &mut Graph, terms: &[TensorId]) -> Result<TensorId> {
    let mut iter = terms.iter();
    let mut acc = *iter
        .next()
        .ok_or_else(|| Error::Contract("total_loss: no terms".into()))?;
    for &t in iter {
        acc = g.add(acc, t)?;
    }
    Ok(acc)
}

/// Reference form of the detection/attribution losses: mean over rows of
/// `-z . log(z_pre)` with explicit one-hot labels. Used as the oracle the
/// logits path is checked against.
pub fn cross_entropy_one_hot(predictions: &[Vec<f64>], one_hot: &[Vec<f64>]) -> Result<f64> {
    if predictions.len() != one_hot.len() || predictions.is_empty() {
        return Err(Error::Data("prediction/label batch mismatch".into()));
    }
    let mut total = 0.0;
    for (p, z) in predictions.iter().zip(one_hot) {
        if p.len() != z.len() {
            return Err(Error::Data("prediction/label width mismatch".into()));
        }
        let ones = z.iter().filter(|v| **v == 1.0).count();
        if ones != 1 || z.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::Data(format!("label row {z:?} is not one-hot")));
        }
        for (pi, zi) in p.iter().zip(z) {
            if *zi == 1.0 {
                total -= pi.ln();
            }
        }
    }
    Ok(total / predictions.len() as f64)
}
