use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("invalid task definition: {0}")]
    InvalidTask(String),

    #[error("{path}: {message}")]
    TaskFile { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Dataset {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("not enough examples{}: need {needed}, found {found}", class.map(|c| format!(" for class {c}")).unwrap_or_default())]
    InsufficientExamples {
        class: Option<usize>,
        needed: usize,
        found: usize,
    },

    #[error("template: {0}")]
    Template(String),

    #[error("render: {0}")]
    Render(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("span {start}..{end} is not aligned to a single token")]
    SpanAlignment { start: usize, end: usize },

    #[error("label span {start}..{end} does not fit in max_length {max_length}")]
    Truncation {
        start: usize,
        end: usize,
        max_length: usize,
    },

    #[error("target: {0}")]
    Target(String),

    #[error("model: {0}")]
    Model(String),

    #[error("sequence of length {len} exceeds max_length {max_length}")]
    SequenceTooLong { len: usize, max_length: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("metric: {0}")]
    Metric(String),

    #[error("protocol: {0}")]
    Protocol(String),

    #[error("backend process: {0}")]
    Process(String),

    #[error("backend timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("seed {seed}, lr {learning_rate}, batch {batch_size}: {source}")]
    Job {
        seed: u64,
        learning_rate: f64,
        batch_size: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{} of {} jobs failed; first: {}", .0.failures.len(), .0.total_jobs, .0.failures[0])]
    Experiment(Box<crate::protocol::ExperimentFailure>),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
