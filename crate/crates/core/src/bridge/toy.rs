use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendJob, BackendResult, PromptRecord, WIRE_VERSION};
use crate::codec::{PromptEncoding, TargetVector};
use crate::error::{Error, Result};
use crate::model::{train, ModelConfig, ModelParams};
use crate::template::char_slice;
use crate::tokenizer::{map_spans, Vocab};

/// Architecture of the in-process discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyShape {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    /// Minimum training-set frequency for a word to get its own id. Label
    /// words are always kept.
    pub min_count: usize,
    /// Multiplier applied to the job's learning rate. The grid values are
    /// sized for fine-tuning a pretrained discriminator; a freshly
    /// initialised toy needs far larger steps to move in the same budget.
    pub lr_scale: f64,
    /// Training-time probability of masking a non-label word as `[UNK]`.
    pub token_dropout: f64,
}

impl Default for ToyShape {
    fn default() -> Self {
        Self {
            d_model: 64,
            layers: 2,
            heads: 4,
            d_ff: 256,
            min_count: 3,
            lr_scale: 100.0,
            token_dropout: 0.2,
        }
    }
}

/// Trains a fresh toy discriminator per job on the job's training prompts
/// and scores its dev and test prompts.
#[derive(Debug, Clone, Default)]
pub struct ToyBackend {
    pub shape: ToyShape,
}

impl ToyBackend {
    pub fn new(shape: ToyShape) -> Self {
        Self { shape }
    }

    fn encode(vocab: &Vocab, record: &PromptRecord, max_length: usize) -> Result<PromptEncoding> {
        let tokens = vocab.encode_keeping(&record.text, &record.spans, max_length)?;
        let positions = map_spans(&tokens, &record.spans).map_err(|e| match e {
            Error::SpanAlignment { .. } => Error::Protocol(format!(
                "record `{}`: label word is not a single token ({e})",
                record.id
            )),
            other => other,
        })?;
        PromptEncoding::new(tokens, positions)
    }
}

impl Backend for ToyBackend {
    fn name(&self) -> String {
        "toy".into()
    }

    fn run(&self, job: &BackendJob) -> Result<BackendResult> {
        job.validate()?;
        let hp = &job.hyperparams;
        let corpus: Vec<&str> = job.train.iter().map(|r| r.text.as_str()).collect();
        let label_words: Vec<String> = job
            .train
            .iter()
            .flat_map(|r| r.spans.iter().map(|&s| char_slice(&r.text, s)))
            .collect();
        let vocab = Vocab::build_keeping_words(&corpus, self.shape.min_count, &label_words)?;

        let data = job
            .train
            .iter()
            .map(|r| {
                let enc = Self::encode(&vocab, r, hp.max_length)?;
                let targets = r.targets.as_deref().unwrap_or_default();
                let t = TargetVector::from_word_targets(enc.len(), &enc.label_positions, targets, hp.loss_scope)?;
                Ok((enc, t))
            })
            .collect::<Result<Vec<_>>>()?;

        let config = ModelConfig {
            vocab_size: vocab.len(),
            d_model: self.shape.d_model,
            layers: self.shape.layers,
            heads: self.shape.heads,
            d_ff: self.shape.d_ff,
            max_length: hp.max_length,
        };
        let params = ModelParams::init(hp.seed, config)?;
        let mut cfg = hp.train_config();
        cfg.learning_rate *= self.shape.lr_scale;
        cfg.token_dropout = self.shape.token_dropout;
        let model = train(params, &data, &cfg)?.params;

        let mut probs = BTreeMap::new();
        for record in job.scored() {
            let enc = Self::encode(&vocab, record, hp.max_length)?;
            let all = model.forward(&enc.tokens.ids)?;
            probs.insert(record.id.clone(), enc.label_positions.iter().map(|&p| all[p]).collect());
        }
        Ok(BackendResult {
            version: WIRE_VERSION,
            probs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{build_job, Hyperparams};
    use crate::dataset::{DatasetExample, Gold};
    use crate::registry::TaskSpec;

    fn ex(s1: &str, gold: usize) -> DatasetExample {
        DatasetExample {
            id: s1.into(),
            s1: s1.into(),
            s2: None,
            gold: Gold::Class(gold),
        }
    }

    fn small() -> ToyBackend {
        ToyBackend::new(ToyShape {
            d_model: 16,
            layers: 1,
            heads: 2,
            d_ff: 32,
            ..ToyShape::default()
        })
    }

    fn hp() -> Hyperparams {
        Hyperparams {
            epochs: 2,
            max_length: 32,
            ..Hyperparams::default()
        }
    }

    #[test]
    fn answers_dev_and_test() {
        let task = TaskSpec::load("sst-2").unwrap();
        let job = build_job(&task, &[ex("a b", 0), ex("c d", 1)], &[ex("a", 0)], &[ex("zzz", 1)], hp()).unwrap();
        let result = small().run(&job).unwrap();
        result.validate(&job).unwrap();
        assert_eq!(result.probs.len(), 2);
        assert_eq!(small().run(&job).unwrap(), result);
    }

    #[test]
    fn empty_test_set() {
        let task = TaskSpec::load("sst-2").unwrap();
        let job = build_job(&task, &[ex("a b", 0), ex("c d", 1)], &[ex("a", 0)], &[], hp()).unwrap();
        let result = small().run(&job).unwrap();
        assert_eq!(result.probs.keys().collect::<Vec<_>>(), ["dev-0"]);
    }

    #[test]
    fn multi_token_label_word_is_rejected() {
        let task = TaskSpec::new(
            "x",
            crate::registry::TaskKind::Classification { classes: 2 },
            "<S1> {LABELS}",
            vec!["not_good".into(), "good".into()],
            crate::registry::Metric::Accuracy,
        )
        .unwrap();
        let job = build_job(&task, &[ex("a", 0), ex("b", 1)], &[], &[], hp()).unwrap();
        let err = small().run(&job).unwrap_err();
        assert!(err.to_string().contains("single token"), "{err}");
    }
}
