//! Task metrics. Binary metrics treat class 1 as the positive class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    /// The metric's denominator vanished and `value` was set to 0.
    pub degenerate: bool,
}

impl MetricValue {
    fn ok(value: f64) -> Self {
        Self {
            value,
            degenerate: false,
        }
    }

    fn degenerate() -> Self {
        Self {
            value: 0.0,
            degenerate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BinaryConfusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl BinaryConfusion {
    pub fn from_labels(preds: &[usize], golds: &[usize]) -> Result<Self> {
        check_lengths(preds.len(), golds.len())?;
        let mut c = Self::default();
        for (&p, &g) in preds.iter().zip(golds) {
            match (p, g) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 1) => c.fn_ += 1,
                (0, 0) => c.tn += 1,
                _ => return Err(Error::Metric(format!("binary metric got labels ({p}, {g})"))),
            }
        }
        Ok(c)
    }

    pub fn f1(&self) -> MetricValue {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return MetricValue::degenerate();
        }
        MetricValue::ok(2.0 * self.tp as f64 / denom as f64)
    }

    pub fn matthews(&self) -> MetricValue {
        let (tp, fp, fn_, tn) = (self.tp as f64, self.fp as f64, self.fn_ as f64, self.tn as f64);
        let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        if denom == 0.0 {
            return MetricValue::degenerate();
        }
        MetricValue::ok((tp * tn - fp * fn_) / denom)
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Metric(format!("{a} predictions for {b} gold labels")));
    }
    if a == 0 {
        return Err(Error::Metric("no predictions".into()));
    }
    Ok(())
}

pub fn accuracy(preds: &[usize], golds: &[usize]) -> Result<f64> {
    check_lengths(preds.len(), golds.len())?;
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}

pub fn f1(preds: &[usize], golds: &[usize]) -> Result<MetricValue> {
    Ok(BinaryConfusion::from_labels(preds, golds)?.f1())
}

pub fn matthews(preds: &[usize], golds: &[usize]) -> Result<MetricValue> {
    Ok(BinaryConfusion::from_labels(preds, golds)?.matthews())
}

pub fn pearson(preds: &[f64], golds: &[f64]) -> Result<MetricValue> {
    check_lengths(preds.len(), golds.len())?;
    let n = preds.len() as f64;
    let mp = preds.iter().sum::<f64>() / n;
    let mg = golds.iter().sum::<f64>() / n;
    let (mut cov, mut vp, mut vg) = (0.0, 0.0, 0.0);
    for (&p, &g) in preds.iter().zip(golds) {
        cov += (p - mp) * (g - mg);
        vp += (p - mp) * (p - mp);
        vg += (g - mg) * (g - mg);
    }
    let denom = (vp * vg).sqrt();
    if denom == 0.0 || !denom.is_finite() {
        return Ok(MetricValue::degenerate());
    }
    Ok(MetricValue::ok((cov / denom).clamp(-1.0, 1.0)))
}

/// Class-label metric by name. Pearson here correlates the class indices.
pub fn score_classes(metric: Metric, preds: &[usize], golds: &[usize]) -> Result<MetricValue> {
    match metric {
        Metric::Accuracy => accuracy(preds, golds).map(MetricValue::ok),
        Metric::F1 => f1(preds, golds),
        Metric::Matthews => matthews(preds, golds),
        Metric::Pearson => {
            let p: Vec<f64> = preds.iter().map(|&x| x as f64).collect();
            let g: Vec<f64> = golds.iter().map(|&x| x as f64).collect();
            pearson(&p, &g)
        }
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
