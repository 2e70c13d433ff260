//! Built-in task definitions and user task files.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::template::Template;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TaskKind {
    Classification { classes: usize },
    /// Bounded interval `[lower, upper]`.
    Regression { lower: f64, upper: f64 },
}

impl TaskKind {
    pub fn is_regression(&self) -> bool {
        matches!(self, TaskKind::Regression { .. })
    }

    /// Number of label description words a task of this kind carries.
    pub fn label_count(&self) -> usize {
        match *self {
            TaskKind::Classification { classes } => classes,
            TaskKind::Regression { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    F1,
    Matthews,
    Pearson,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::F1 => "f1",
            Metric::Matthews => "matthews",
            Metric::Pearson => "pearson",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "accuracy" | "acc" => Ok(Metric::Accuracy),
            "f1" => Ok(Metric::F1),
            "matthews" | "matt" | "mcc" => Ok(Metric::Matthews),
            "pearson" | "pear" => Ok(Metric::Pearson),
            other => Err(Error::InvalidTask(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
    pub template_src: String,
    template: Template,
    /// Classification: one word per class, class `i` ↔ word `i`.
    /// Regression: `[lower pole, upper pole]`.
    pub label_words: Vec<String>,
    pub metric: Metric,
    pub sentence_count: usize,
}

impl TaskSpec {
    pub fn new(
        name: impl Into<String>,
        kind: TaskKind,
        template_src: impl Into<String>,
        label_words: Vec<String>,
        metric: Metric,
    ) -> Result<Self> {
        let name = name.into();
        let template_src = template_src.into();
        let template = Template::parse(&template_src)
            .map_err(|e| Error::InvalidTask(format!("{name}: {e}")))?;
        let sentence_count = if template.has_s2() { 2 } else { 1 };

        match kind {
            TaskKind::Classification { classes } if classes < 2 => {
                return Err(Error::InvalidTask(format!("{name}: need at least 2 classes")));
            }
            TaskKind::Regression { lower, upper } if !(lower < upper) => {
                return Err(Error::InvalidTask(format!(
                    "{name}: regression bounds must satisfy lower < upper (got {lower}, {upper})"
                )));
            }
            _ => {}
        }
        if label_words.len() != kind.label_count() {
            return Err(Error::InvalidTask(format!(
                "{name}: expected {} label words, got {}",
                kind.label_count(),
                label_words.len()
            )));
        }
        for (i, word) in label_words.iter().enumerate() {
            if word.is_empty() || word.chars().any(char::is_whitespace) {
                return Err(Error::InvalidTask(format!(
                    "{name}: label word `{word}` must be a single non-empty word"
                )));
            }
            if label_words[..i].contains(word) {
                return Err(Error::InvalidTask(format!("{name}: duplicate label word `{word}`")));
            }
        }
        if kind.is_regression() && metric != Metric::Pearson {
            return Err(Error::InvalidTask(format!("{name}: regression tasks use the pearson metric")));
        }
        if !kind.is_regression() && metric == Metric::Pearson {
            return Err(Error::InvalidTask(format!("{name}: pearson needs a regression task")));
        }
        if matches!(metric, Metric::F1 | Metric::Matthews) && kind.label_count() != 2 {
            return Err(Error::InvalidTask(format!("{name}: {metric} needs a binary task")));
        }

        Ok(Self {
            name,
            kind,
            template_src,
            template,
            label_words,
            metric,
            sentence_count,
        })
    }

    pub fn template(&self) -> &Template {
        &self.template
    }

    /// Loads a built-in task by name, or a user task file when `name_or_path`
    /// points at an existing file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if let Some(task) = builtin(name_or_path) {
            return Ok(task);
        }
        let path = Path::new(name_or_path);
        if path.is_file() {
            return Self::from_file(path);
        }
        Err(Error::UnknownTask(name_or_path.to_string()))
    }

    /// Reads a task file:
    ///
    /// ```toml
    /// name = "movie-sentiment"
    /// kind = "classification"      # or "regression"
    /// bounds = [0.0, 5.0]          # regression only
    /// template = "<S1> It was {LABELS}"
    /// label_words = ["great", "terrible"]
    /// metric = "accuracy"
    /// ```
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::TaskFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct TaskFile {
            name: String,
            kind: String,
            template: String,
            label_words: Vec<String>,
            metric: Option<String>,
            bounds: Option<[f64; 2]>,
        }

        let file: TaskFile =
            toml::from_str(text).map_err(|e| Error::InvalidTask(e.message().to_string()))?;
        let kind = match file.kind.as_str() {
            "classification" => {
                if file.bounds.is_some() {
                    return Err(Error::InvalidTask("`bounds` only applies to regression".into()));
                }
                TaskKind::Classification {
                    classes: file.label_words.len(),
                }
            }
            "regression" => {
                let [lower, upper] = file
                    .bounds
                    .ok_or_else(|| Error::InvalidTask("regression task needs `bounds`".into()))?;
                TaskKind::Regression { lower, upper }
            }
            other => return Err(Error::InvalidTask(format!("unknown kind `{other}`"))),
        };
        let metric = match file.metric {
            Some(m) => m.parse()?,
            None if kind.is_regression() => Metric::Pearson,
            None => Metric::Accuracy,
        };
        Self::new(file.name, kind, file.template, file.label_words, metric)
    }
}

const SENTIMENT: &str = "<S1> It was {LABELS}";
const THIS_IS: &str = "<S1> This is {LABELS}";
const TREC: &str = "{LABELS}: <S1>";
const NLI: &str = "<S1> ? {LABELS}, <S2>";
const PARAPHRASE: &str = "<S1> {LABELS}, <S2>";

/// (name, kind, template, label words, metric), in presentation order.
const BUILTINS: &[(&str, Kind, &str, &[&str], Metric)] = &[
    ("sst-2", Kind::Classes, SENTIMENT, &["great", "terrible"], Metric::Accuracy),
    (
        "sst-5",
        Kind::Classes,
        SENTIMENT,
        &["great", "good", "okay", "bad", "terrible"],
        Metric::Accuracy,
    ),
    ("mr", Kind::Classes, SENTIMENT, &["great", "terrible"], Metric::Accuracy),
    ("cr", Kind::Classes, SENTIMENT, &["great", "terrible"], Metric::Accuracy),
    ("mpqa", Kind::Classes, SENTIMENT, &["great", "terrible"], Metric::Accuracy),
    ("subj", Kind::Classes, THIS_IS, &["subjective", "objective"], Metric::Accuracy),
    (
        "trec",
        Kind::Classes,
        TREC,
        &["Expression", "Entity", "Description", "Human", "Location", "Number"],
        Metric::Accuracy,
    ),
    ("cola", Kind::Classes, THIS_IS, &["correct", "incorrect"], Metric::Matthews),
    ("mnli", Kind::Classes, NLI, &["Yes", "Maybe", "No"], Metric::Accuracy),
    ("mnli-mm", Kind::Classes, NLI, &["Yes", "Maybe", "No"], Metric::Accuracy),
    ("snli", Kind::Classes, NLI, &["Yes", "Maybe", "No"], Metric::Accuracy),
    ("qnli", Kind::Classes, NLI, &["Yes", "No"], Metric::Accuracy),
    ("rte", Kind::Classes, NLI, &["Yes", "No"], Metric::Accuracy),
    ("mrpc", Kind::Classes, PARAPHRASE, &["Yes", "No"], Metric::F1),
    ("qqp", Kind::Classes, PARAPHRASE, &["Yes", "No"], Metric::F1),
    ("sts-b", Kind::Interval05, PARAPHRASE, &["No", "Yes"], Metric::Pearson),
];

#[derive(Clone, Copy)]
enum Kind {
    Classes,
    Interval05,
}

/// Names of the built-in tasks.
pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|b| b.0)
}

/// All built-in tasks.
pub fn builtins() -> Vec<TaskSpec> {
    builtin_names().filter_map(builtin).collect()
}

pub fn builtin(name: &str) -> Option<TaskSpec> {
    let lowered = name.to_ascii_lowercase();
    let &(name, kind, template, words, metric) = BUILTINS.iter().find(|b| b.0 == lowered)?;
    let kind = match kind {
        Kind::Classes => TaskKind::Classification { classes: words.len() },
        Kind::Interval05 => TaskKind::Regression { lower: 0.0, upper: 5.0 },
    };
    let words = words.iter().map(|w| w.to_string()).collect();
    Some(TaskSpec::new(name, kind, template, words, metric).expect("built-in tasks are valid"))
}
