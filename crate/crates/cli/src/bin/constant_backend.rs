//! Wire-protocol test double: answers every dev and test record with the
//! same replaced probability for each label word.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use trd_core::bridge::{BackendJob, BackendResult, WIRE_VERSION};

#[derive(Parser)]
#[command(name = "trd-constant-backend")]
struct Args {
    /// Probability reported for every label word.
    #[arg(long, default_value_t = 0.5)]
    prob: f64,
    #[arg(long, requires = "result_file")]
    job_file: Option<PathBuf>,
    #[arg(long, requires = "job_file")]
    result_file: Option<PathBuf>,
}

fn answer(job: &BackendJob, prob: f64) -> BackendResult {
    let probs: BTreeMap<String, Vec<f64>> = job
        .dev
        .iter()
        .chain(&job.test)
        .map(|r| (r.id.clone(), vec![prob; r.spans.len()]))
        .collect();
    BackendResult {
        version: WIRE_VERSION,
        probs,
    }
}

fn run(args: &Args) -> Result<(), String> {
    let job_text = match &args.job_file {
        Some(path) => std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?,
        None => {
            let mut line = String::new();
            std::io::stdin().lock().read_line(&mut line).map_err(|e| e.to_string())?;
            line
        }
    };
    let job: BackendJob = serde_json::from_str(&job_text).map_err(|e| format!("bad job: {e}"))?;
    let out = serde_json::to_string(&answer(&job, args.prob)).map_err(|e| e.to_string())?;
    match &args.result_file {
        Some(path) => std::fs::write(path, out + "\n").map_err(|e| format!("{}: {e}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{out}").and_then(|_| stdout.flush()).map_err(|e| e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("trd-constant-backend: {e}");
            ExitCode::FAILURE
        }
    }
}
