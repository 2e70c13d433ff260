//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::io::Write;
use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use trd_core::bridge::{Backend, BackendJob, BackendResult, ToyBackend, ToyShape};
use trd_core::codec::{
    build_classification_targets, build_regression_targets, decode_classification, decode_regression,
    regression_word_targets, LabelProbabilities, LossScope, Prediction, PromptEncoding,
};
use trd_core::metrics::{accuracy, f1, matthews, pearson};
use trd_core::model::{grad_check, ModelConfig, ModelParams};
use trd_core::protocol::{run_experiment, ExperimentConfig};
use trd_core::rng::SplitMix64;
use trd_core::synthetic::{self, SyntheticConfig};
use trd_core::tokenizer::{map_spans, Vocab};
use trd_core::{Result, TaskSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn report(name: &str, outcome: Result<Outcome>) -> bool {
    let (pass, detail) = match outcome {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = out.flush();
    pass
}

fn render(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_trd"))
        .arg("render")
        .args(args)
        .output()
        .expect("trd binary runs");
    String::from_utf8_lossy(&out.stdout).lines().next().unwrap_or("").to_string()
}

fn prompt_fidelity() -> Result<Outcome> {
    let cases = [
        (
            vec!["sst-2", "I am so excited about the concert."],
            "I am so excited about the concert. It was great terrible",
        ),
        (
            vec!["sst-5", "This is one of his best films."],
            "This is one of his best films. It was great good okay bad terrible",
        ),
        (
            vec!["sts-b", "Kittens are eating food.", "Kittens are eating from dishes."],
            "Kittens are eating food. No Yes, Kittens are eating from dishes.",
        ),
    ];
    let mismatches: Vec<String> = cases
        .iter()
        .filter_map(|(args, want)| {
            let got = render(args);
            (got != *want).then(|| format!("{}: got {got:?}", args[0]))
        })
        .collect();
    Ok(check(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "3/3 prompts byte-exact".to_string()
        } else {
            mismatches.join("; ")
        },
    ))
}

fn encode(task: &TaskSpec, s1: &str, s2: Option<&str>) -> Result<PromptEncoding> {
    let prompt = task.template().render(s1, s2, &task.label_words)?;
    let vocab = Vocab::build(&[prompt.text.as_str()], 1)?;
    let tokens = vocab.encode_keeping(&prompt.text, &prompt.label_spans, 256)?;
    let positions = map_spans(&tokens, &prompt.label_spans)?;
    PromptEncoding::new(tokens, positions)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn target_fidelity() -> Result<Outcome> {
    // [CLS] this is one of his best films . it was great good okay bad terrible [SEP]
    let sst5 = TaskSpec::load("sst-5")?;
    let enc = encode(&sst5, "This is one of his best films.", None)?;
    let t = build_classification_targets(&enc, 0, LossScope::FullSequence)?;
    let mut want = vec![0.0; 17];
    want[12..16].copy_from_slice(&[1.0; 4]);
    let cls_err = max_diff(&t.values, &want);

    // [CLS] kittens are eating food . no yes , kittens are eating from dishes . [SEP]
    let stsb = TaskSpec::load("sts-b")?;
    let enc = encode(&stsb, "Kittens are eating food.", Some("Kittens are eating from dishes."))?;
    let t = build_regression_targets(&enc, 4.0, 0.0, 5.0, LossScope::FullSequence)?;
    let mut want = vec![0.0; 16];
    want[6] = 0.8;
    want[7] = 0.2;
    let reg_err = max_diff(&t.values, &want);

    Ok(check(
        cls_err <= 1e-12 && reg_err <= 1e-12,
        format!(
            "sst-5 gold=great max err {cls_err:.1e}; sts-b y=4.0 label-region {:?} max err {reg_err:.1e}",
            &t.values[5..9]
        ),
    ))
}

fn decoding_oracle() -> Result<Outcome> {
    let mut rng = SplitMix64::new(2024);
    let mut class_mismatch = 0;
    for _ in 0..10_000 {
        let k = 2 + rng.next_below(9) as usize;
        // Coarse values so ties are common.
        let probs: Vec<f64> = (0..k).map(|_| rng.next_below(11) as f64 / 10.0).collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(a.cmp(&b)));
        let want = order[0];
        if decode_classification(&LabelProbabilities(probs))? != Prediction::ClassIndex(want) {
            class_mismatch += 1;
        }
    }

    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let lower = rng.uniform(-10.0, 10.0);
        let upper = lower + rng.uniform(0.1, 20.0);
        let y = rng.uniform(lower, upper);
        let [y_l, y_u] = regression_word_targets(y, lower, upper)?;
        let decoded = decode_regression(y_l, y_u, lower, upper);
        worst = worst.max((decoded.value - y).abs());
    }
    Ok(check(
        class_mismatch == 0 && worst <= 1e-9,
        format!("classification mismatches {class_mismatch}/10000; regression max round-trip err {worst:.1e}"),
    ))
}

fn gradient_correctness() -> Result<Outcome> {
    let config = ModelConfig {
        vocab_size: 30,
        d_model: 16,
        layers: 1,
        heads: 2,
        d_ff: 64,
        max_length: 32,
    };
    let params = ModelParams::init(11, config)?;
    let task = TaskSpec::load("sst-2")?;
    let prompt = task.template().render("a fine and gentle film .", None, &task.label_words)?;
    let vocab = Vocab::build(&[prompt.text.as_str()], 1)?;
    let tokens = vocab.encode_keeping(&prompt.text, &prompt.label_spans, 32)?;
    let positions = map_spans(&tokens, &prompt.label_spans)?;
    let enc = PromptEncoding::new(tokens, positions)?;
    let target = build_classification_targets(&enc, 1, LossScope::FullSequence)?;
    let start = Instant::now();
    let r = grad_check(&params, &(enc, target), 1e-4)?;
    let elapsed = start.elapsed();
    Ok(check(
        r.max_relative_error < 1e-4 && elapsed.as_secs_f64() < 1.0,
        format!(
            "max relative error {:.2e} over {} projections in {:.0} ms",
            r.max_relative_error,
            r.projections,
            elapsed.as_secs_f64() * 1e3
        ),
    ))
}

fn end_to_end() -> Result<Outcome> {
    let cfg = ExperimentConfig::default();
    let test_cfg = SyntheticConfig {
        seed: 99,
        ..SyntheticConfig::default()
    };
    let backend = ToyBackend::default();
    let start = Instant::now();

    let sst2 = TaskSpec::load("sst-2")?;
    let pool = synthetic::sentiment(200, SyntheticConfig::default());
    let test = synthetic::sentiment(200, test_cfg);
    let cls = run_experiment(&sst2, &pool, &test, &cfg, &backend)?;

    let reg_task = synthetic::regression_task()?;
    let pool = synthetic::regression(200, SyntheticConfig::default());
    let test = synthetic::regression(200, test_cfg);
    let reg = run_experiment(&reg_task, &pool, &test, &cfg, &backend)?;

    Ok(check(
        cls.mean >= 0.90 && reg.mean >= 0.8,
        format!(
            "sentiment accuracy {} (need >= 90.0), regression pearson {} (need >= 80.0), K=16, 5 seeds, 10 grid points, {:.0} s",
            cls.summary,
            reg.summary,
            start.elapsed().as_secs_f64()
        ),
    ))
}

struct Counting<B> {
    inner: B,
    jobs: AtomicUsize,
}

impl<B: Backend> Backend for Counting<B> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn run(&self, job: &BackendJob) -> Result<BackendResult> {
        self.jobs.fetch_add(1, Ordering::SeqCst);
        self.inner.run(job)
    }
}

fn protocol_determinism() -> Result<Outcome> {
    let shape = ToyShape {
        d_model: 16,
        layers: 1,
        heads: 2,
        d_ff: 32,
        ..ToyShape::default()
    };
    let cfg = ExperimentConfig {
        k: 4,
        epochs: 2,
        concurrency: 4,
        ..ExperimentConfig::default()
    };
    let task = TaskSpec::load("sst-2")?;
    let pool = synthetic::sentiment(60, SyntheticConfig::default());
    let test = synthetic::sentiment(40, SyntheticConfig { seed: 5, ..SyntheticConfig::default() });

    let counting = Counting {
        inner: ToyBackend::new(shape),
        jobs: AtomicUsize::new(0),
    };
    let a = run_experiment(&task, &pool, &test, &cfg, &counting)?.to_json()?;
    let jobs = counting.jobs.load(Ordering::SeqCst);
    let serial = ExperimentConfig { concurrency: 1, ..cfg };
    let b = run_experiment(&task, &pool, &test, &serial, &ToyBackend::new(shape))?.to_json()?;
    Ok(check(
        a == b && jobs == 50,
        format!("reports identical: {} ({} bytes); jobs dispatched: {jobs} (want 50)", a == b, a.len()),
    ))
}

fn metric_fixtures() -> Result<Outcome> {
    let mut errs = Vec::new();
    // TP=FP=FN=TN=1
    let (p, g) = ([1, 1, 0, 0], [1, 0, 1, 0]);
    errs.push((f1(&p, &g)?.value - 0.5).abs());
    errs.push(matthews(&p, &g)?.value.abs());
    errs.push((accuracy(&p, &g)? - 0.5).abs());
    // TP=5, FP=2, FN=1, TN=4
    let p = [1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
    let g = [1, 1, 1, 1, 1, 0, 0, 1, 0, 0, 0, 0];
    errs.push((f1(&p, &g)?.value - 10.0 / 13.0).abs());
    errs.push((matthews(&p, &g)?.value - 18.0 / 1260f64.sqrt()).abs());
    errs.push((accuracy(&p, &g)? - 0.75).abs());
    // Pearson of [1..5] against [2, 4, 5, 4, 5] is sqrt(0.6).
    errs.push((pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 5.0, 4.0, 5.0])?.value - 0.6f64.sqrt()).abs());
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Ok(check(
        worst <= 1e-12,
        format!("{} fixture values, max abs error {worst:.1e}", errs.len()),
    ))
}

fn main() -> ExitCode {
    let results = [
        report("prompt fidelity", prompt_fidelity()),
        report("target fidelity", target_fidelity()),
        report("decoding oracle equivalence", decoding_oracle()),
        report("gradient correctness", gradient_correctness()),
        report("end-to-end toy learning", end_to_end()),
        report("protocol determinism", protocol_determinism()),
        report("metric validation", metric_fixtures()),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
