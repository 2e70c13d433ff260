//! Discriminator backends and the job/result wire format.
//!
//! A job carries prompt text, the character spans of the label words and
//! word-level targets; token ids never cross the boundary, so a backend is
//! free to use its own tokenizer. Off-label tokens always target 0.
//!
//! ```json
//! {"version":1,"kind":"classification","hyperparams":{...},
//!  "train":[{"id":"train-0","text":"...","spans":[[10,15],[16,24]],"targets":[0.0,1.0]}],
//!  "dev":[...],"test":[...]}
//! {"version":1,"probs":{"dev-0":[0.12,0.93], "test-0":[...]}}
//! ```

mod external;
mod toy;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::codec::{classification_word_targets, regression_word_targets, LossScope};
use crate::dataset::{DatasetExample, Gold};
use crate::error::{Error, Result};
use crate::model::TrainConfig;
use crate::registry::{TaskKind, TaskSpec};
use crate::template::CharSpan;

pub use external::{ExternalBackend, WireMode};
pub use toy::{ToyBackend, ToyShape};

pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub adam_epsilon: f64,
    pub max_length: usize,
    pub seed: u64,
    pub loss_scope: LossScope,
}

impl Default for Hyperparams {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            weight_decay: t.weight_decay,
            adam_epsilon: t.adam_epsilon,
            max_length: t.max_length,
            seed: t.seed,
            loss_scope: t.loss_scope,
        }
    }
}

impl Hyperparams {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            weight_decay: self.weight_decay,
            adam_epsilon: self.adam_epsilon,
            max_length: self.max_length,
            seed: self.seed,
            loss_scope: self.loss_scope,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub text: String,
    pub spans: Vec<CharSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendJob {
    pub version: u32,
    pub kind: JobKind,
    pub hyperparams: Hyperparams,
    pub train: Vec<PromptRecord>,
    pub dev: Vec<PromptRecord>,
    pub test: Vec<PromptRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResult {
    pub version: u32,
    /// Replaced probability per label word, keyed by record id.
    pub probs: BTreeMap<String, Vec<f64>>,
}

impl PromptRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        let len = self.text.chars().count();
        if self.spans.is_empty() {
            return Err("no label spans".into());
        }
        let mut prev_end = 0;
        for span in &self.spans {
            if span.is_empty() || span.end > len {
                return Err(format!("span {span} invalid for text of {len} characters"));
            }
            if span.start < prev_end {
                return Err(format!("span {span} overlaps or is out of order"));
            }
            prev_end = span.end;
        }
        if let Some(t) = &self.targets {
            if t.len() != self.spans.len() {
                return Err(format!("{} targets for {} spans", t.len(), self.spans.len()));
            }
            if let Some(bad) = t.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(format!("target {bad} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

impl BackendJob {
    pub fn validate(&self) -> Result<()> {
        if self.version != WIRE_VERSION {
            return Err(Error::Protocol(format!("unsupported job version {}", self.version)));
        }
        if self.train.is_empty() {
            return Err(Error::Protocol("job has no training records".into()));
        }
        let mut seen = HashSet::new();
        for (set, records) in [("train", &self.train), ("dev", &self.dev), ("test", &self.test)] {
            for r in records {
                if !seen.insert(r.id.as_str()) {
                    return Err(Error::Protocol(format!("duplicate record id `{}`", r.id)));
                }
                r.validate()
                    .map_err(|m| Error::Protocol(format!("{set} record `{}`: {m}", r.id)))?;
                if set == "train" && r.targets.is_none() {
                    return Err(Error::Protocol(format!("train record `{}` has no targets", r.id)));
                }
                if self.kind == JobKind::Regression && r.spans.len() != 2 {
                    return Err(Error::Protocol(format!("regression record `{}` needs 2 spans", r.id)));
                }
            }
        }
        Ok(())
    }

    /// Records the backend must score, dev first.
    pub fn scored(&self) -> impl Iterator<Item = &PromptRecord> {
        self.dev.iter().chain(&self.test)
    }
}

impl BackendResult {
    /// Checks that exactly the dev and test ids are answered with one
    /// probability in `[0, 1]` per label word.
    pub fn validate(&self, job: &BackendJob) -> Result<()> {
        if self.version != WIRE_VERSION {
            return Err(Error::Protocol(format!("unsupported result version {}", self.version)));
        }
        let mut expected = 0;
        for record in job.scored() {
            expected += 1;
            let probs = self
                .probs
                .get(&record.id)
                .ok_or_else(|| Error::Protocol(format!("result is missing id `{}`", record.id)))?;
            if probs.len() != record.spans.len() {
                return Err(Error::Protocol(format!(
                    "id `{}`: {} probabilities for {} label words",
                    record.id,
                    probs.len(),
                    record.spans.len()
                )));
            }
            if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::Protocol(format!("id `{}`: probability {bad} outside [0, 1]", record.id)));
            }
        }
        if self.probs.len() != expected {
            let known: HashSet<&str> = job.scored().map(|r| r.id.as_str()).collect();
            let extra = self.probs.keys().find(|k| !known.contains(k.as_str()));
            return Err(Error::Protocol(format!(
                "result has unexpected id `{}`",
                extra.map(String::as_str).unwrap_or("?")
            )));
        }
        Ok(())
    }
}

pub trait Backend: Send + Sync {
    fn name(&self) -> String;

    fn run(&self, job: &BackendJob) -> Result<BackendResult>;
}

/// Renders examples into prompt records with ids `{prefix}-{index}`.
/// Targets are attached when `with_targets` is set.
pub fn prompt_records(
    task: &TaskSpec,
    examples: &[DatasetExample],
    prefix: &str,
    with_targets: bool,
) -> Result<Vec<PromptRecord>> {
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let prompt = task.template().render(&ex.s1, ex.s2.as_deref(), &task.label_words)?;
            let targets = if with_targets {
                Some(word_targets(task, ex.gold)?)
            } else {
                None
            };
            Ok(PromptRecord {
                id: format!("{prefix}-{i}"),
                text: prompt.text,
                spans: prompt.label_spans,
                targets,
            })
        })
        .collect()
}

pub fn word_targets(task: &TaskSpec, gold: Gold) -> Result<Vec<f64>> {
    match (task.kind, gold) {
        (TaskKind::Classification { classes }, Gold::Class(c)) => classification_word_targets(classes, c),
        (TaskKind::Regression { lower, upper }, g) => Ok(regression_word_targets(g.as_f64(), lower, upper)?.to_vec()),
        (TaskKind::Classification { .. }, Gold::Value(v)) => {
            Err(Error::Target(format!("classification gold must be a class index, got {v}")))
        }
    }
}

pub fn build_job(
    task: &TaskSpec,
    train: &[DatasetExample],
    dev: &[DatasetExample],
    test: &[DatasetExample],
    hyperparams: Hyperparams,
) -> Result<BackendJob> {
    Ok(BackendJob {
        version: WIRE_VERSION,
        kind: if task.kind.is_regression() {
            JobKind::Regression
        } else {
            JobKind::Classification
        },
        hyperparams,
        train: prompt_records(task, train, "train", true)?,
        dev: prompt_records(task, dev, "dev", true)?,
        test: prompt_records(task, test, "test", false)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(s1: &str, gold: usize) -> DatasetExample {
        DatasetExample {
            id: s1.into(),
            s1: s1.into(),
            s2: None,
            gold: Gold::Class(gold),
        }
    }

    fn job() -> BackendJob {
        let task = TaskSpec::load("sst-2").unwrap();
        build_job(
            &task,
            &[example("fun ride", 0), example("dull mess", 1)],
            &[example("fine", 0)],
            &[example("meh", 1)],
            Hyperparams::default(),
        )
        .unwrap()
    }

    #[test]
    fn wire_field_names() {
        let j = job();
        let v: serde_json::Value = serde_json::to_value(&j).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["kind"], "classification");
        assert_eq!(v["train"][0]["id"], "train-0");
        assert_eq!(v["train"][0]["text"], "fun ride It was great terrible");
        assert_eq!(v["train"][0]["spans"], serde_json::json!([[16, 21], [22, 30]]));
        assert_eq!(v["train"][0]["targets"], serde_json::json!([0.0, 1.0]));
        assert!(v["test"][0].get("targets").is_none());
        assert_eq!(v["hyperparams"]["loss_scope"], "full-sequence");
        for key in ["learning_rate", "batch_size", "epochs", "weight_decay", "adam_epsilon", "max_length", "seed"] {
            assert!(v["hyperparams"].get(key).is_some(), "{key}");
        }
        let back: BackendJob = serde_json::from_value(v).unwrap();
        assert_eq!(back, j);
    }

    #[test]
    fn result_validation() {
        let j = job();
        let ok = BackendResult {
            version: 1,
            probs: [("dev-0".to_string(), vec![0.2, 0.8]), ("test-0".to_string(), vec![0.5, 0.5])].into(),
        };
        ok.validate(&j).unwrap();

        let mut missing = ok.clone();
        missing.probs.remove("test-0");
        assert!(missing.validate(&j).unwrap_err().to_string().contains("test-0"));

        let mut out_of_range = ok.clone();
        out_of_range.probs.insert("dev-0".into(), vec![1.2, 0.1]);
        assert!(out_of_range.validate(&j).unwrap_err().to_string().contains("outside"));

        let mut wrong_len = ok.clone();
        wrong_len.probs.insert("dev-0".into(), vec![0.1]);
        assert!(wrong_len.validate(&j).is_err());

        let mut extra = ok;
        extra.probs.insert("train-0".into(), vec![0.1, 0.2]);
        assert!(extra.validate(&j).unwrap_err().to_string().contains("train-0"));
    }

    #[test]
    fn job_validation() {
        let mut j = job();
        j.validate().unwrap();
        j.test[0].id = "dev-0".into();
        assert!(j.validate().unwrap_err().to_string().contains("duplicate"));

        let mut j = job();
        j.train[0].spans[1] = CharSpan::new(20, 100);
        assert!(j.validate().is_err());

        let mut j = job();
        j.train[0].targets = None;
        assert!(j.validate().is_err());
    }

    #[test]
    fn regression_targets_on_the_wire() {
        let task = TaskSpec::load("sts-b").unwrap();
        let ex = DatasetExample {
            id: "k".into(),
            s1: "Kittens are eating food.".into(),
            s2: Some("Kittens are eating from dishes.".into()),
            gold: Gold::Value(4.0),
        };
        let recs = prompt_records(&task, &[ex], "train", true).unwrap();
        let t = recs[0].targets.as_ref().unwrap();
        assert!((t[0] - 0.8).abs() < 1e-12 && (t[1] - 0.2).abs() < 1e-12);
    }
}
