//! Few-shot text classification and regression as token-replaced detection.
//!
//! Every label description word is written into the prompt, a discriminator
//! scores each token as original or replaced, and the prediction is the
//! least-replaced label word (or, for regression, an interpolation between
//! the two pole words).

pub mod bridge;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod protocol;
pub mod registry;
pub mod rng;
pub mod sampling;
pub mod synthetic;
pub mod template;
pub mod tokenizer;

pub use codec::{LabelProbabilities, LossScope, Prediction, PromptEncoding, TargetVector};
pub use dataset::{DatasetExample, Gold, Schema};
pub use error::{Error, Result};
pub use registry::{Metric, TaskKind, TaskSpec};
pub use sampling::{sample_few_shot, FewShotSplit, DEFAULT_SEEDS};
pub use template::{CharSpan, RenderedPrompt, Template};
