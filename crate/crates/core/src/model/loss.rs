use crate::codec::TargetVector;
use crate::error::{Error, Result};

/// Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` inside the loss.
pub const PROB_CLIP: f64 = 1e-7;

/// Mean binary cross-entropy over the masked positions. Targets may be soft.
pub fn bce_loss(probs: &[f64], target: &TargetVector) -> Result<f64> {
    check(probs.len(), target)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for ((&p, &t), &m) in probs.iter().zip(&target.values).zip(&target.loss_mask) {
        if m {
            let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            total -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Loss and its gradient with respect to the logits. Clipped positions have
/// zero gradient.
pub fn bce_loss_grad(logits: &[f64], target: &TargetVector) -> Result<(f64, Vec<f64>)> {
    check(logits.len(), target)?;
    let probs: Vec<f64> = logits.iter().map(|&z| super::forward::sigmoid(z)).collect();
    let loss = bce_loss(&probs, target)?;
    let count = target.loss_mask.iter().filter(|&&m| m).count() as f64;
    let grad = probs
        .iter()
        .zip(&target.values)
        .zip(&target.loss_mask)
        .map(|((&p, &t), &m)| {
            if m && (PROB_CLIP..=1.0 - PROB_CLIP).contains(&p) {
                (p - t) / count
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss, grad))
}

fn check(len: usize, target: &TargetVector) -> Result<()> {
    if len != target.values.len() || len != target.loss_mask.len() {
        return Err(Error::Model(format!(
            "{len} outputs for a target of length {}",
            target.values.len()
        )));
    }
    if !target.loss_mask.iter().any(|&m| m) {
        return Err(Error::Model("loss mask selects no positions".into()));
    }
    Ok(())
}
