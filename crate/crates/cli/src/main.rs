mod cli;
mod config;

// Stdout writes that tolerate a closed pipe (`trd tasks | head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

macro_rules! out_raw {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;
use trd_core::dataset::read_dataset;
use trd_core::protocol::{curve_csv, k_sweep, run_experiment, ExperimentReport};
use trd_core::registry::builtins;
use trd_core::synthetic::{self, SyntheticConfig};
use trd_core::{Error, Gold, TaskKind, TaskSpec};

use cli::{Cli, Command, RenderArgs, RunArgs, SynthArgs, SynthKind};
use config::{RunConfig, BACKEND_ENV};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration; exit code 2.
    Usage(String),
    /// Failure while running; exit code 1.
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tasks => {
            out_raw!("{}", tasks_listing());
            Ok(())
        }
        Command::Render(args) => render(&args),
        Command::Run(args) => run(&args),
        Command::Sweep(args) => run(&RunArgs {
            k_sweep: Some(args.ks),
            ..args.run
        }),
        Command::Synth(args) => synth(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn tasks_listing() -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<8} {:<16} {:<9} {:<46} template", "task", "kind", "metric", "label words");
    for t in builtins() {
        let kind = match t.kind {
            TaskKind::Classification { classes } => format!("classification/{classes}"),
            TaskKind::Regression { lower, upper } => format!("regression[{lower},{upper}]"),
        };
        let _ = writeln!(
            out,
            "{:<8} {:<16} {:<9} {:<46} {}",
            t.name,
            kind,
            t.metric.name(),
            t.label_words.join(" "),
            t.template_src
        );
    }
    out
}

fn render(args: &RenderArgs) -> Result<(), CliError> {
    let task = TaskSpec::load(&args.task).map_err(|e| CliError::Usage(e.to_string()))?;
    let prompt = task
        .template()
        .render(&args.s1, args.s2.as_deref(), &task.label_words)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if args.json {
        let value = json!({ "text": prompt.text, "spans": prompt.label_spans, "label_words": task.label_words });
        out!("{value}");
        return Ok(());
    }
    out!("{}", prompt.text);
    for (word, span) in task.label_words.iter().zip(&prompt.label_spans) {
        out!("  {word:<12} {span}");
    }
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args, std::env::var(BACKEND_ENV).ok())?;
    let pool = read_dataset(&cfg.train, &cfg.schema, &cfg.task)?;
    let test = read_dataset(&cfg.test, &cfg.schema, &cfg.task)?;
    let backend = cfg.build_backend()?;

    let outcome = match &cfg.k_sweep {
        None => run_experiment(&cfg.task, &pool, &test, &cfg.experiment, backend.as_ref()).map(|r| vec![r]),
        Some(ks) => k_sweep(&cfg.task, &pool, &test, ks, &cfg.experiment, backend.as_ref()),
    };
    let reports = match outcome {
        Ok(r) => r,
        Err(Error::Experiment(failure)) => {
            let partial = cfg.output.with_extension("partial.json");
            let body = serde_json::to_string_pretty(&failure.completed).map_err(Error::from)?;
            write(&partial, &(body + "\n"))?;
            for f in &failure.failures {
                eprintln!("job failed: {f}");
            }
            eprintln!("partial grid log written to {}", partial.display());
            return Err(Error::Experiment(failure).into());
        }
        Err(e) => return Err(e.into()),
    };

    let body = if cfg.k_sweep.is_some() {
        serde_json::to_string_pretty(&reports).map_err(Error::from)? + "\n"
    } else {
        reports[0].to_json()?
    };
    write(&cfg.output, &body)?;
    for r in &reports {
        out_raw!("{}", summary(r));
    }
    out!("report: {}", cfg.output.display());
    if cfg.k_sweep.is_some() {
        let curve = cfg.output.with_extension("csv");
        write(&curve, &curve_csv(&reports))?;
        out!("curve: {}", curve.display());
    }
    Ok(())
}

fn summary(r: &ExperimentReport) -> String {
    let mut out = format!("{} ({}) K={} {}: {}\n", r.task, r.metric, r.k, r.backend, r.summary);
    for s in &r.seeds {
        let _ = writeln!(
            out,
            "  seed {:>4}  lr {:e}  batch {}  dev {:.1}  test {:.1}",
            s.seed,
            s.learning_rate,
            s.batch_size,
            100.0 * s.dev_score,
            100.0 * s.test_score
        );
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(io_error(dir, e)))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(io_error(path, e)))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let pool_cfg = SyntheticConfig {
        seed: args.seed,
        ..SyntheticConfig::default()
    };
    let test_cfg = SyntheticConfig {
        seed: args.seed.wrapping_add(1),
        ..pool_cfg
    };
    let (task_ref, pool, test) = match args.kind {
        SynthKind::Sentiment => (
            "sst-2",
            synthetic::sentiment(args.count, pool_cfg),
            synthetic::sentiment(args.count, test_cfg),
        ),
        SynthKind::Regression => {
            let task = synthetic::regression_task()?;
            let toml = format!(
                "name = \"{}\"\nkind = \"regression\"\nbounds = [0.0, 5.0]\ntemplate = \"{}\"\nlabel_words = [\"{}\", \"{}\"]\nmetric = \"pearson\"\n",
                task.name, task.template_src, task.label_words[0], task.label_words[1]
            );
            write(&args.out.join("task.toml"), &toml)?;
            (
                "task.toml",
                synthetic::regression(args.count, pool_cfg),
                synthetic::regression(args.count, test_cfg),
            )
        }
    };
    for (name, data) in [("train.jsonl", &pool), ("test.jsonl", &test)] {
        let mut body = String::new();
        for ex in data {
            let label = match ex.gold {
                Gold::Class(c) => json!(c),
                Gold::Value(v) => json!(v),
            };
            let _ = writeln!(body, "{}", json!({ "id": ex.id, "s1": ex.s1, "label": label }));
        }
        write(&args.out.join(name), &body)?;
    }
    let config = format!(
        "[experiment]\ntask = \"{task_ref}\"\ntrain = \"train.jsonl\"\ntest = \"test.jsonl\"\noutput = \"report.json\"\n"
    );
    write(&args.out.join("config.toml"), &config)?;
    out!("wrote {}", args.out.display());
    Ok(())
}
