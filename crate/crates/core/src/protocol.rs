//! Multi-seed few-shot evaluation with dev-set grid search.
//!
//! For every seed a split is sampled, one backend job runs per grid point,
//! and the grid point with the best dev score supplies that seed's test
//! score. Ties go to the lower learning rate, then the smaller batch.
//! Scores are fractions; the summary string scales them by 100.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::{build_job, Backend, BackendJob, BackendResult, Hyperparams};
use crate::codec::{decode_classification, decode_regression, LabelProbabilities, LossScope, Prediction};
use crate::dataset::DatasetExample;
use crate::error::{Error, Result};
use crate::metrics::{mean_std, pearson, score_classes, MetricValue};
use crate::registry::{TaskKind, TaskSpec};
use crate::sampling::{sample_few_shot, DEFAULT_SEEDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            learning_rates: vec![1e-5, 2e-5, 3e-5, 4e-5, 5e-5],
            batch_sizes: vec![4, 8],
        }
    }
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.batch_sizes.is_empty() {
            return Err(Error::Config("grid needs at least one learning rate and one batch size".into()));
        }
        if let Some(lr) = self.learning_rates.iter().find(|lr| !(**lr > 0.0 && lr.is_finite())) {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        if self.batch_sizes.contains(&0) {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    /// Grid points in tie-break order: ascending learning rate, then batch size.
    pub fn points(&self) -> Vec<(f64, usize)> {
        let mut lrs = self.learning_rates.clone();
        lrs.sort_by(f64::total_cmp);
        lrs.dedup();
        let mut bss = self.batch_sizes.clone();
        bss.sort_unstable();
        bss.dedup();
        lrs.iter().flat_map(|&lr| bss.iter().map(move |&bs| (lr, bs))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub k: usize,
    pub seeds: Vec<u64>,
    pub grid: Grid,
    pub epochs: usize,
    pub weight_decay: f64,
    pub adam_epsilon: f64,
    pub max_length: usize,
    pub loss_scope: LossScope,
    /// Maximum number of backend jobs in flight.
    pub concurrency: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let hp = Hyperparams::default();
        Self {
            k: 16,
            seeds: DEFAULT_SEEDS.to_vec(),
            grid: Grid::default(),
            epochs: hp.epochs,
            weight_decay: hp.weight_decay,
            adam_epsilon: hp.adam_epsilon,
            max_length: hp.max_length,
            loss_scope: hp.loss_scope,
            concurrency: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be positive".into()));
        }
        self.grid.validate()?;
        self.hyperparams(0, 1e-5, 1).train_config().validate()
    }

    fn hyperparams(&self, seed: u64, learning_rate: f64, batch_size: usize) -> Hyperparams {
        Hyperparams {
            learning_rate,
            batch_size,
            epochs: self.epochs,
            weight_decay: self.weight_decay,
            adam_epsilon: self.adam_epsilon,
            max_length: self.max_length,
            seed,
            loss_scope: self.loss_scope,
        }
    }
}

/// Outcome of one backend job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointLog {
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dev_score: f64,
    pub test_score: f64,
    /// The metric was undefined on dev or test and scored as 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dev_score: f64,
    pub test_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub task: String,
    pub metric: String,
    pub k: usize,
    pub backend: String,
    pub seeds: Vec<SeedResult>,
    pub mean: f64,
    pub std: f64,
    /// `mean (std)` in percent, one decimal.
    pub summary: String,
    pub grid_log: Vec<GridPointLog>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Jobs that failed, plus the log of those that completed.
#[derive(Debug)]
pub struct ExperimentFailure {
    pub total_jobs: usize,
    pub failures: Vec<Error>,
    pub completed: Vec<GridPointLog>,
}

pub fn format_summary(mean: f64, std: f64) -> String {
    format!("{:.1} ({:.1})", 100.0 * mean, 100.0 * std)
}

/// Scores a backend result on labelled examples whose record ids were
/// generated with `prefix`.
pub fn score_result(
    task: &TaskSpec,
    result: &BackendResult,
    examples: &[DatasetExample],
    prefix: &str,
) -> Result<MetricValue> {
    let probs = |i: usize| -> Result<&Vec<f64>> {
        let id = format!("{prefix}-{i}");
        result
            .probs
            .get(&id)
            .ok_or_else(|| Error::Protocol(format!("result is missing `{id}`")))
    };
    match task.kind {
        TaskKind::Classification { .. } => {
            let mut preds = Vec::with_capacity(examples.len());
            let mut golds = Vec::with_capacity(examples.len());
            for (i, ex) in examples.iter().enumerate() {
                let Prediction::ClassIndex(c) = decode_classification(&LabelProbabilities(probs(i)?.clone()))? else {
                    unreachable!("classification decodes to a class index");
                };
                preds.push(c);
                golds.push(ex.gold.class().ok_or_else(|| Error::Target(format!("`{}` has no class label", ex.id)))?);
            }
            score_classes(task.metric, &preds, &golds)
        }
        TaskKind::Regression { lower, upper } => {
            let mut preds = Vec::with_capacity(examples.len());
            for i in 0..examples.len() {
                let p = probs(i)?;
                preds.push(decode_regression(p[0], p[1], lower, upper).value);
            }
            let golds: Vec<f64> = examples.iter().map(|e| e.gold.as_f64()).collect();
            pearson(&preds, &golds)
        }
    }
}

struct PreparedJob {
    seed: u64,
    learning_rate: f64,
    batch_size: usize,
    job: BackendJob,
    dev: usize,
}

/// Runs the full protocol for one `k`. `pool` is the labelled data splits
/// are drawn from; `test` is scored in full for every job.
pub fn run_experiment(
    task: &TaskSpec,
    pool: &[DatasetExample],
    test: &[DatasetExample],
    cfg: &ExperimentConfig,
    backend: &dyn Backend,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if test.is_empty() {
        return Err(Error::Config("test set is empty".into()));
    }
    for ex in pool.iter().chain(test) {
        ex.validate(task)
            .map_err(|m| Error::Config(format!("example `{}`: {m}", ex.id)))?;
    }

    let points = cfg.grid.points();
    let mut splits = Vec::with_capacity(cfg.seeds.len());
    let mut jobs = Vec::with_capacity(cfg.seeds.len() * points.len());
    for &seed in &cfg.seeds {
        let split = sample_few_shot(pool, task, cfg.k, seed)?;
        for &(lr, bs) in &points {
            let job = build_job(task, &split.train, &split.dev, test, cfg.hyperparams(seed, lr, bs))?;
            jobs.push(PreparedJob {
                seed,
                learning_rate: lr,
                batch_size: bs,
                job,
                dev: splits.len(),
            });
        }
        splits.push(split);
    }

    let run = |p: &PreparedJob| -> Result<GridPointLog> {
        let wrap = |e: Error| Error::Job {
            seed: p.seed,
            learning_rate: p.learning_rate,
            batch_size: p.batch_size,
            source: Box::new(e),
        };
        let result = backend.run(&p.job).map_err(wrap)?;
        let dev = score_result(task, &result, &splits[p.dev].dev, "dev").map_err(wrap)?;
        let test = score_result(task, &result, test, "test").map_err(wrap)?;
        Ok(GridPointLog {
            seed: p.seed,
            learning_rate: p.learning_rate,
            batch_size: p.batch_size,
            dev_score: dev.value,
            test_score: test.value,
            degenerate: dev.degenerate || test.degenerate,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<GridPointLog>> = pool.install(|| jobs.par_iter().map(run).collect());

    let total_jobs = outcomes.len();
    let mut log = Vec::with_capacity(total_jobs);
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(entry) => log.push(entry),
            Err(e) => failures.push(e),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Experiment(Box::new(ExperimentFailure {
            total_jobs,
            failures,
            completed: log,
        })));
    }

    let seeds: Vec<SeedResult> = cfg
        .seeds
        .iter()
        .map(|&seed| {
            let mut best: Option<&GridPointLog> = None;
            for entry in log.iter().filter(|e| e.seed == seed) {
                if best.is_none_or(|b| entry.dev_score > b.dev_score) {
                    best = Some(entry);
                }
            }
            let best = best.expect("every seed has grid points");
            SeedResult {
                seed,
                learning_rate: best.learning_rate,
                batch_size: best.batch_size,
                dev_score: best.dev_score,
                test_score: best.test_score,
            }
        })
        .collect();
    let scores: Vec<f64> = seeds.iter().map(|s| s.test_score).collect();
    let (mean, std) = mean_std(&scores);
    Ok(ExperimentReport {
        task: task.name.clone(),
        metric: task.metric.name().into(),
        k: cfg.k,
        backend: backend.name(),
        seeds,
        mean,
        std,
        summary: format_summary(mean, std),
        grid_log: log,
    })
}

/// One experiment per `k`, in the given (ascending) order.
pub fn k_sweep(
    task: &TaskSpec,
    pool: &[DatasetExample],
    test: &[DatasetExample],
    ks: &[usize],
    cfg: &ExperimentConfig,
    backend: &dyn Backend,
) -> Result<Vec<ExperimentReport>> {
    if ks.is_empty() {
        return Err(Error::Config("k list is empty".into()));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("k list must be strictly ascending".into()));
    }
    ks.iter()
        .map(|&k| run_experiment(task, pool, test, &ExperimentConfig { k, ..cfg.clone() }, backend))
        .collect()
}

/// `k,mean,std` rows, scores in percent.
pub fn curve_csv(reports: &[ExperimentReport]) -> String {
    let mut out = String::from("k,mean,std\n");
    for r in reports {
        let _ = writeln!(out, "{},{:.4},{:.4}", r.k, 100.0 * r.mean, 100.0 * r.std);
    }
    out
}
