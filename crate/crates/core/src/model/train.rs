use serde::{Deserialize, Serialize};

use super::{bce_loss_grad, AdamW, ModelParams};
use crate::codec::{LossScope, PromptEncoding, TargetVector};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tokenizer::{SEP, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub adam_epsilon: f64,
    pub max_length: usize,
    pub seed: u64,
    pub loss_scope: LossScope,
    /// Global gradient-norm ceiling; `0` disables clipping.
    pub clip_norm: f64,
    /// Probability of replacing each non-label word token with `[UNK]`
    /// for one training step.
    pub token_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            batch_size: 4,
            epochs: 20,
            weight_decay: 2e-3,
            adam_epsilon: 1e-8,
            max_length: 256,
            seed: 42,
            loss_scope: LossScope::FullSequence,
            clip_norm: 1.0,
            token_dropout: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning_rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.token_dropout) {
            return Err(Error::Config(format!("token_dropout {} outside [0, 1)", self.token_dropout)));
        }
        if self.max_length < 3 {
            return Err(Error::Config("max_length must be at least 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean example loss per epoch, measured before each update.
    pub loss_trace: Vec<f64>,
}

/// Fine-tunes with AdamW. Each epoch visits the data in an order drawn from
/// `(seed, epoch)`; gradients are averaged over the batch in data order, so
/// the result depends only on the inputs.
pub fn train(
    mut params: ModelParams,
    data: &[(PromptEncoding, TargetVector)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Model("no training data".into()));
    }
    let mut opt = AdamW::new(&params, cfg.adam_epsilon, cfg.weight_decay);
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut grads = params.zeros_like();

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        SplitMix64::derive(cfg.seed, epoch as u64 + 1).shuffle(&mut order);
        let mut dropout_rng = SplitMix64::derive(cfg.seed, (epoch as u64 + 1) << 32);

        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads.scale(0.0);
            for &i in batch {
                let (enc, target) = &data[i];
                let cache = if cfg.token_dropout > 0.0 {
                    let ids = drop_tokens(enc, cfg.token_dropout, &mut dropout_rng);
                    params.forward_cached(&ids)?
                } else {
                    params.forward_cached(&enc.tokens.ids)?
                };
                let (loss, dlogits) = bce_loss_grad(&cache.logits, target)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
                }
                epoch_loss += loss;
                params.backward(&cache, &dlogits, &mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            if cfg.clip_norm > 0.0 {
                let norm = grads.l2_norm();
                if norm > cfg.clip_norm {
                    grads.scale(cfg.clip_norm / norm);
                }
            }
            opt.step(&mut params, &grads, cfg.learning_rate);
            if !params.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
            }
        }
        loss_trace.push(epoch_loss / data.len() as f64);
    }
    Ok(TrainOutcome { params, loss_trace })
}

fn drop_tokens(enc: &PromptEncoding, p: f64, rng: &mut SplitMix64) -> Vec<u32> {
    let mut ids = enc.tokens.ids.clone();
    for (j, id) in ids.iter_mut().enumerate() {
        let eligible = *id > SEP && !enc.label_positions.contains(&j);
        if eligible && rng.next_f64() < p {
            *id = UNK;
        }
    }
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::build_classification_targets;
    use crate::model::ModelConfig;
    use crate::template::CharSpan;
    use crate::tokenizer::TokenSeq;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 12,
            d_model: 16,
            layers: 1,
            heads: 2,
            d_ff: 32,
            max_length: 16,
        }
    }

    /// Token 4 or 5 decides which of the label tokens 10/11 is original.
    fn toy_data() -> Vec<(PromptEncoding, TargetVector)> {
        (0..8)
            .map(|i| {
                let cue = 4 + (i % 2) as u32;
                let ids = vec![2, cue, 6 + (i % 3) as u32, 10, 11, 3];
                let tokens = TokenSeq {
                    offsets: (0..4).map(|j| CharSpan::new(j, j + 1)).collect(),
                    ids,
                };
                let enc = PromptEncoding::new(tokens, vec![3, 4]).unwrap();
                let t = build_classification_targets(&enc, i % 2, LossScope::FullSequence).unwrap();
                (enc, t)
            })
            .collect()
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let params = ModelParams::init(5, tiny_config()).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 15,
            ..TrainConfig::default()
        };
        let out = train(params, &toy_data(), &cfg).unwrap();
        assert!(out.loss_trace.last().unwrap() < &out.loss_trace[0], "{:?}", out.loss_trace);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let params = ModelParams::init(5, tiny_config()).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 2,
            ..TrainConfig::default()
        };
        let out = train(params.clone(), &toy_data(), &cfg).unwrap();
        assert_eq!(out.params, params);
    }

    #[test]
    fn deterministic() {
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            epochs: 3,
            ..TrainConfig::default()
        };
        let run = || train(ModelParams::init(9, tiny_config()).unwrap(), &toy_data(), &cfg).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn rejects_empty_data_and_bad_config() {
        let p = ModelParams::init(1, tiny_config()).unwrap();
        assert!(train(p.clone(), &[], &TrainConfig::default()).is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(train(p, &toy_data(), &bad).is_err());
    }
}
