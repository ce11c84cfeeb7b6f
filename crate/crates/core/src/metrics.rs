//! Anytime and per-task accuracy metrics.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::registry::ClassId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub samples_seen: usize,
    pub accuracy: f64,
}

/// Accuracy measured every `interval` training samples, plus a final point at
/// `total_samples` when that is not a multiple of the interval.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AccuracyTrace {
    pub interval: usize,
    pub total_samples: usize,
    pub points: Vec<TracePoint>,
}

impl AccuracyTrace {
    pub fn new(interval: usize, total_samples: usize) -> Self {
        AccuracyTrace {
            interval,
            total_samples,
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, samples_seen: usize, accuracy: f64) {
        self.points.push(TracePoint { samples_seen, accuracy });
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Parameter("accuracy trace is empty".into()));
        }
        let mut prev = 0;
        for p in &self.points {
            if p.samples_seen <= prev {
                return Err(Error::Parameter(format!(
                    "trace sample counts must increase strictly ({} after {prev})",
                    p.samples_seen
                )));
            }
            if !(0.0..=1.0).contains(&p.accuracy) {
                return Err(Error::Parameter(format!("accuracy {} outside [0, 1]", p.accuracy)));
            }
            prev = p.samples_seen;
        }
        if prev != self.total_samples {
            return Err(Error::Parameter(format!(
                "trace ends at {prev} samples, expected {}",
                self.total_samples
            )));
        }
        Ok(())
    }

    /// Two-column CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("samples_seen,accuracy\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{}", p.samples_seen, p.accuracy);
        }
        out
    }
}

/// Area under the anytime-accuracy curve, normalized to `[0, 1]`.
///
/// Rectangle rule: each point covers the samples since the previous one, and
/// the sum is divided by `total_samples`. With evaluations every `Δn` samples
/// this is `Σ f(i·Δn)·Δn / total`.
pub fn auc_accuracy(trace: &AccuracyTrace) -> Result<f64> {
    trace.validate()?;
    // Accumulate deviations from the first point so a flat curve is exact.
    let base = trace.points[0].accuracy;
    let mut prev = 0;
    let mut area = 0.0;
    for p in &trace.points {
        area += (p.accuracy - base) * (p.samples_seen - prev) as f64;
        prev = p.samples_seen;
    }
    Ok((base + area / trace.total_samples as f64).clamp(0.0, 1.0))
}

/// Non-overlapping partials whose exact sum equals the sum of `values`
/// (Shewchuk's algorithm, as in Python's `math.fsum`).
fn exact_partials(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    partials
}

/// Correctly rounded value of the exact sum held in `partials`.
fn round_partials(partials: &[f64]) -> f64 {
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    // Round half to even can be wrong when the partials below break the tie.
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Mean of the per-task accuracies.
///
/// The sum is accumulated exactly, so the result does not depend on the
/// order of the tasks and equal values average to themselves.
pub fn avg_accuracy(per_task: &[f64]) -> Result<f64> {
    if per_task.is_empty() {
        return Err(Error::Parameter("no task accuracies to average".into()));
    }
    let n = per_task.len() as f64;
    let partials = exact_partials(per_task.iter().copied());
    let hi = round_partials(&partials);
    let lo = round_partials(&exact_partials(partials.iter().copied().chain([-hi])));
    // One correction step on the quotient: q + (hi - q·n + lo) / n.
    let q = hi / n;
    let r = (-q).mul_add(n, hi) + lo;
    Ok(q + r / n)
}

/// Fraction of positions where the prediction equals the truth.
pub fn task_accuracy(predictions: &[ClassId], truth: &[ClassId]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::Parameter(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Parameter("accuracy of an empty evaluation set".into()));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub auc: f64,
    pub avg: f64,
    pub last: f64,
    pub per_task: Vec<f64>,
    pub trace: AccuracyTrace,
}

impl MetricsReport {
    pub fn from_parts(per_task: Vec<f64>, trace: AccuracyTrace) -> Result<Self> {
        let avg = avg_accuracy(&per_task)?;
        let auc = auc_accuracy(&trace)?;
        let last = *per_task.last().expect("checked non-empty");
        Ok(MetricsReport {
            auc,
            avg,
            last,
            per_task,
            trace,
        })
    }

    /// Flat `key=value` block. Values are fractions in `[0, 1]`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "auc={}", self.auc);
        let _ = writeln!(out, "avg={}", self.avg);
        let _ = writeln!(out, "last={}", self.last);
        let _ = writeln!(out, "tasks={}", self.per_task.len());
        for (k, a) in self.per_task.iter().enumerate() {
            let _ = writeln!(out, "task_{}_acc={a}", k + 1);
        }
        let _ = writeln!(out, "eval_interval={}", self.trace.interval);
        let _ = writeln!(out, "total_samples={}", self.trace.total_samples);
        out
    }
}
