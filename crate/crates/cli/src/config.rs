//! Run configuration: TOML file sections, command-line overrides, defaults.
//!
//! Precedence is flag > file > default. The backend selector additionally
//! falls back to `TRD_BACKEND` before the built-in default `toy`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use trd_core::bridge::{Backend, ExternalBackend, ToyBackend, ToyShape, WireMode};
use trd_core::protocol::{ExperimentConfig, Grid};
use trd_core::{LossScope, Schema, TaskSpec};

use crate::cli::RunArgs;
use crate::CliError;

pub const BACKEND_ENV: &str = "TRD_BACKEND";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub backend: BackendSection,
    pub toy: Option<ToyShape>,
    pub data: Option<Schema>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub task: Option<String>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub k: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub k_sweep: Option<Vec<usize>>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: Option<usize>,
    pub weight_decay: Option<f64>,
    pub adam_epsilon: Option<f64>,
    pub max_length: Option<usize>,
    pub loss_scope: Option<LossScope>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub learning_rates: Option<Vec<f64>>,
    pub batch_sizes: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    /// `toy` or `external:<command>`.
    pub selector: Option<String>,
    pub wire: Option<Wire>,
    pub timeout_secs: Option<u64>,
    pub concurrency: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Wire {
    Stdio,
    Files,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendSelector {
    Toy,
    External(String),
}

impl BackendSelector {
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "toy" {
            return Ok(Self::Toy);
        }
        match s.strip_prefix("external:") {
            Some(cmd) if !cmd.trim().is_empty() => Ok(Self::External(cmd.trim().to_string())),
            _ => Err(format!("backend must be `toy` or `external:<command>`, got `{s}`")),
        }
    }
}

/// Everything a run needs, fully resolved.
pub struct RunConfig {
    pub task: TaskSpec,
    pub train: PathBuf,
    pub test: PathBuf,
    pub schema: Schema,
    pub experiment: ExperimentConfig,
    pub k_sweep: Option<Vec<usize>>,
    pub output: PathBuf,
    pub backend: BackendSelector,
    pub wire: Wire,
    pub timeout: Duration,
    pub toy: ToyShape,
}

impl RunConfig {
    pub fn resolve(args: &RunArgs, env_backend: Option<String>) -> Result<Self, CliError> {
        let (file, base) = match &args.config {
            Some(path) => (load_file(path)?, path.parent().map(Path::to_path_buf).unwrap_or_default()),
            None => (ConfigFile::default(), PathBuf::new()),
        };
        let rel = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };

        let task_name = args
            .task
            .clone()
            .or_else(|| file.experiment.task.as_ref().map(|t| resolve_task_name(t, &base)))
            .ok_or_else(|| CliError::Usage("missing field `experiment.task` (or --task)".into()))?;
        let task = TaskSpec::load(&task_name).map_err(|e| CliError::Usage(e.to_string()))?;

        let train = args
            .train
            .clone()
            .or_else(|| file.experiment.train.as_ref().map(rel))
            .ok_or_else(|| CliError::Usage("missing field `experiment.train` (or --train)".into()))?;
        let test = args
            .test
            .clone()
            .or_else(|| file.experiment.test.as_ref().map(rel))
            .ok_or_else(|| CliError::Usage("missing field `experiment.test` (or --test)".into()))?;
        let output = args
            .output
            .clone()
            .or_else(|| file.experiment.output.as_ref().map(rel))
            .unwrap_or_else(|| PathBuf::from("report.json"));

        let defaults = ExperimentConfig::default();
        let default_grid = Grid::default();
        let experiment = ExperimentConfig {
            k: args.k.or(file.experiment.k).unwrap_or(defaults.k),
            seeds: args.seeds.clone().or(file.experiment.seeds).unwrap_or(defaults.seeds),
            grid: Grid {
                learning_rates: args
                    .learning_rates
                    .clone()
                    .or(file.grid.learning_rates)
                    .unwrap_or(default_grid.learning_rates),
                batch_sizes: args
                    .batch_sizes
                    .clone()
                    .or(file.grid.batch_sizes)
                    .unwrap_or(default_grid.batch_sizes),
            },
            epochs: args.epochs.or(file.training.epochs).unwrap_or(defaults.epochs),
            weight_decay: file.training.weight_decay.unwrap_or(defaults.weight_decay),
            adam_epsilon: file.training.adam_epsilon.unwrap_or(defaults.adam_epsilon),
            max_length: args.max_length.or(file.training.max_length).unwrap_or(defaults.max_length),
            loss_scope: args.loss_scope.or(file.training.loss_scope).unwrap_or(defaults.loss_scope),
            concurrency: args
                .concurrency
                .or(file.backend.concurrency)
                .unwrap_or(defaults.concurrency),
        };
        experiment.validate().map_err(|e| CliError::Usage(e.to_string()))?;

        let k_sweep = args.k_sweep.clone().or(file.experiment.k_sweep);
        if let Some(ks) = &k_sweep {
            if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) || ks.contains(&0) {
                return Err(CliError::Usage("k_sweep must be a strictly ascending list of positive K".into()));
            }
        }

        let selector = args
            .backend
            .clone()
            .or(file.backend.selector)
            .or(env_backend)
            .unwrap_or_else(|| "toy".into());
        let backend = BackendSelector::parse(&selector).map_err(CliError::Usage)?;

        Ok(Self {
            schema: file.data.unwrap_or_else(|| Schema::for_task(&task)),
            task,
            train,
            test,
            experiment,
            k_sweep,
            output,
            backend,
            wire: args.wire.or(file.backend.wire).unwrap_or(Wire::Stdio),
            timeout: Duration::from_secs(args.timeout_secs.or(file.backend.timeout_secs).unwrap_or(3600)),
            toy: file.toy.unwrap_or_default(),
        })
    }

    pub fn build_backend(&self) -> Result<Box<dyn Backend>, CliError> {
        Ok(match &self.backend {
            BackendSelector::Toy => Box::new(ToyBackend::new(self.toy)),
            BackendSelector::External(cmd) => {
                let mode = match self.wire {
                    Wire::Stdio => WireMode::Stdio,
                    Wire::Files => WireMode::Files,
                };
                Box::new(
                    ExternalBackend::from_command_line(cmd)
                        .map_err(|e| CliError::Usage(e.to_string()))?
                        .with_mode(mode)
                        .with_timeout(self.timeout),
                )
            }
        })
    }
}

fn load_file(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| {
        let location = e.span().map(|span| {
            let line = text[..span.start].matches('\n').count();
            let source = text.lines().nth(line).unwrap_or("").trim();
            format!(":{} `{source}`", line + 1)
        });
        CliError::Usage(format!("{}{}: {}", path.display(), location.unwrap_or_default(), e.message()))
    })
}

/// Task names in a config file may be built-in names or task-file paths
/// relative to the config file.
fn resolve_task_name(name: &str, base: &Path) -> String {
    if trd_core::registry::builtin(name).is_some() {
        return name.to_string();
    }
    let p = Path::new(name);
    if p.is_absolute() {
        name.to_string()
    } else {
        base.join(p).to_string_lossy().into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_parsing() {
        assert_eq!(BackendSelector::parse("toy").unwrap(), BackendSelector::Toy);
        assert_eq!(
            BackendSelector::parse("external:python3 serve.py").unwrap(),
            BackendSelector::External("python3 serve.py".into())
        );
        assert!(BackendSelector::parse("external:").is_err());
        assert!(BackendSelector::parse("gpu").is_err());
    }

    #[test]
    fn unknown_field_is_named() {
        let err = toml::from_str::<ConfigFile>("[experiment]\nkk = 3\n").unwrap_err();
        assert!(err.message().contains("kk"), "{}", err.message());
        let err = toml::from_str::<ConfigFile>("[experiment]\nk = \"many\"\n").unwrap_err();
        assert!(err.to_string().contains("k"), "{err}");
    }

    #[test]
    fn sections_parse() {
        let text = r#"
            [experiment]
            task = "sst-2"
            train = "train.jsonl"
            test = "test.jsonl"
            k = 8
            seeds = [1, 2]
            k_sweep = [8, 16]

            [training]
            epochs = 5
            loss_scope = "label-only"

            [grid]
            learning_rates = [1e-5]
            batch_sizes = [4]

            [backend]
            selector = "external:./serve"
            wire = "files"
            concurrency = 2

            [toy]
            d_model = 32

            [data]
            format = "tsv"
            header = true
        "#;
        let c: ConfigFile = toml::from_str(text).unwrap();
        assert_eq!(c.experiment.k, Some(8));
        assert_eq!(c.training.loss_scope, Some(LossScope::LabelPositionsOnly));
        assert_eq!(c.backend.wire, Some(Wire::Files));
        assert_eq!(c.toy.unwrap().d_model, 32);
        assert_eq!(c.toy.unwrap().layers, 2);
        assert!(c.data.unwrap().header);
    }
}
