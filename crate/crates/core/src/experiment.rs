//! End-to-end runs: scenario construction, training with anytime evaluation,
//! invariance verification against the batch solver, and grid sweeps.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::buffer::BufferLayer;
use crate::error::{Error, Result};
use crate::learner::LearnerState;
use crate::metrics::{task_accuracy, AccuracyTrace, MetricsReport};
use crate::registry::ClassId;
use crate::scenario::{generate_siblurry, generate_synthetic, ScenarioSpec, SyntheticSpec, TaskBatch, TaskStream};

/// Every knob of a single run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub gamma: f64,
    pub buffer_width: usize,
    pub num_tasks: usize,
    pub disjoint_ratio: f64,
    pub blurry_ratio: f64,
    pub seed: u64,
    /// Anytime evaluation interval in training samples.
    pub eval_interval: usize,
    pub eclg: bool,
    pub classes: usize,
    pub per_class: usize,
    pub input_dim: usize,
    pub separation: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gamma: 100.0,
            buffer_width: 64,
            num_tasks: 5,
            disjoint_ratio: 0.5,
            blurry_ratio: 0.1,
            seed: 1,
            eval_interval: 100,
            eclg: true,
            classes: 10,
            per_class: 200,
            input_dim: 32,
            separation: 8.0,
        }
    }
}

impl RunConfig {
    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            classes: self.classes,
            per_class: self.per_class,
            dim: self.input_dim,
            separation: self.separation,
            seed: self.seed,
        }
    }

    pub fn scenario_spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            num_tasks: self.num_tasks,
            disjoint_ratio: self.disjoint_ratio,
            blurry_ratio: self.blurry_ratio,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_interval == 0 {
            return Err(Error::Parameter("evaluation interval must be positive".into()));
        }
        if self.buffer_width == 0 {
            return Err(Error::Parameter("buffer width must be positive".into()));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::Parameter(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        self.scenario_spec().validate()
    }

    /// Synthetic data split into a Si-Blurry stream, still in backbone space.
    pub fn raw_stream(&self) -> Result<TaskStream> {
        self.validate()?;
        let data = generate_synthetic(&self.synthetic_spec())?;
        generate_siblurry(&self.scenario_spec(), &data.train, data.test)
    }

    pub fn buffer(&self, input_dim: usize) -> Result<BufferLayer> {
        BufferLayer::new(self.seed, input_dim, self.buffer_width)
    }

    /// Synthetic stream passed through this run's buffer layer.
    pub fn buffered_stream(&self) -> Result<TaskStream> {
        let raw = self.raw_stream()?;
        raw.embed(&self.buffer(self.input_dim)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskLog {
    /// Zero-based position in the stream.
    pub task: usize,
    pub samples: usize,
    pub new_classes: usize,
    pub exposed_classes: usize,
    pub eclg_max_abs: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub state: LearnerState,
    pub report: MetricsReport,
    pub task_logs: Vec<TaskLog>,
}

/// Test rows whose class the learner already knows.
fn seen_subset(test: &TaskBatch, state: &LearnerState) -> TaskBatch {
    test.filter_labels(|id| state.registry().contains(id))
}

/// Accuracy on the seen-class part of `test`, or `None` when that part is empty.
pub fn evaluate_seen(state: &LearnerState, test: &TaskBatch) -> Result<Option<f64>> {
    if state.registry().is_empty() {
        return Ok(None);
    }
    let subset = seen_subset(test, state);
    if subset.is_empty() {
        return Ok(None);
    }
    let pred = state.predict(&subset.features)?;
    Ok(Some(task_accuracy(&pred.labels, &subset.labels)?))
}

fn apply(state: &mut LearnerState, batch: &TaskBatch, eclg: bool) -> Result<crate::learner::TaskUpdateDecomposition> {
    if eclg {
        state.update_task(batch)
    } else {
        state.update_task_without_eclg(batch)
    }
}

/// Trains over a buffered stream and records the anytime trace.
///
/// Anytime points are taken whenever the running sample count reaches a
/// multiple of `eval_interval`, and at the very end. A point inside a task
/// scores the learner that has absorbed the task's rows up to that point as a
/// single update, so it is exactly the model an interrupted task would leave.
///
/// When `resume` is given, the first `resume.tasks_seen()` tasks are skipped
/// and the report covers only the remaining ones. `on_task_end` sees the state
/// after every task and may persist it.
pub fn run_stream(
    stream: &TaskStream,
    gamma: f64,
    eval_interval: usize,
    eclg: bool,
    resume: Option<LearnerState>,
    mut on_task_end: impl FnMut(usize, &LearnerState) -> Result<()>,
) -> Result<RunOutcome> {
    if eval_interval == 0 {
        return Err(Error::Parameter("evaluation interval must be positive".into()));
    }
    let width = stream
        .tasks
        .first()
        .map(|t| t.features.cols())
        .ok_or_else(|| Error::Parameter("stream has no tasks".into()))?;
    let mut state = match resume {
        Some(s) => s,
        None => LearnerState::new(gamma, width)?,
    };
    let skip = usize::try_from(state.tasks_seen()).unwrap_or(usize::MAX);
    if skip >= stream.tasks.len() {
        return Err(Error::State(format!(
            "checkpoint has seen {skip} tasks, stream only has {}",
            stream.tasks.len()
        )));
    }
    let remaining = &stream.tasks[skip..];
    let total: usize = remaining.iter().map(TaskBatch::len).sum();
    let mut trace = AccuracyTrace::new(eval_interval, total);
    let mut per_task = Vec::with_capacity(remaining.len());
    let mut logs = Vec::with_capacity(remaining.len());
    let mut seen = 0usize;

    for (offset, batch) in remaining.iter().enumerate() {
        let task = skip + offset;
        let start = seen;
        let end = seen + batch.len();
        let mut next_eval = (start / eval_interval + 1) * eval_interval;
        while next_eval < end {
            let mut snapshot = state.clone();
            apply(&mut snapshot, &batch.slice(0, next_eval - start), eclg)?;
            if let Some(acc) = evaluate_seen(&snapshot, &stream.test)? {
                trace.push(next_eval, acc);
            }
            next_eval += eval_interval;
        }

        let known_before = state.registry().len();
        let exposed: BTreeSet<ClassId> = batch
            .labels
            .iter()
            .copied()
            .filter(|&id| state.registry().contains(id))
            .collect();
        let decomposition = apply(&mut state, batch, eclg)?;
        seen = end;

        let accuracy = evaluate_seen(&state, &stream.test)?.ok_or_else(|| {
            Error::Parameter(format!(
                "test set has no samples of the classes seen through task {task}"
            ))
        })?;
        if end.is_multiple_of(eval_interval) || offset + 1 == remaining.len() {
            trace.push(end, accuracy);
        }
        per_task.push(accuracy);
        let log = TaskLog {
            task,
            samples: batch.len(),
            new_classes: state.registry().len() - known_before,
            exposed_classes: exposed.len(),
            eclg_max_abs: decomposition.eclg_max_abs(),
            accuracy,
        };
        log::debug!(
            "task {} samples={} new={} exposed={} eclg_max={:e} acc={:.4}",
            log.task,
            log.samples,
            log.new_classes,
            log.exposed_classes,
            log.eclg_max_abs,
            log.accuracy
        );
        logs.push(log);
        on_task_end(task, &state)?;
    }

    let report = MetricsReport::from_parts(per_task, trace)?;
    Ok(RunOutcome {
        state,
        report,
        task_logs: logs,
    })
}

/// Builds the synthetic stream for `config` and trains on it.
pub fn run_config(config: &RunConfig) -> Result<RunOutcome> {
    let stream = config.buffered_stream()?;
    run_stream(
        &stream,
        config.gamma,
        config.eval_interval,
        config.eclg,
        None,
        |_, _| Ok(()),
    )
}

/// One grid cell of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepCell {
    pub disjoint_ratio: f64,
    pub blurry_ratio: f64,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    /// Mean and standard error (sample standard deviation over `√n`).
    pub fn of(values: &[f64]) -> Option<MeanSe> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        Some(MeanSe { mean, se })
    }
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub cell: SweepCell,
    pub seeds: Vec<u64>,
    /// One entry per seed, in seed order.
    pub runs: Vec<std::result::Result<MetricsReport, String>>,
}

impl CellResult {
    pub fn failed(&self) -> bool {
        self.runs.iter().any(|r| r.is_err())
    }

    pub fn first_error(&self) -> Option<&str> {
        self.runs.iter().find_map(|r| r.as_ref().err().map(String::as_str))
    }

    fn stat(&self, f: impl Fn(&MetricsReport) -> f64) -> Option<MeanSe> {
        if self.failed() {
            return None;
        }
        let vals: Vec<f64> = self.runs.iter().filter_map(|r| r.as_ref().ok()).map(f).collect();
        MeanSe::of(&vals)
    }

    pub fn auc(&self) -> Option<MeanSe> {
        self.stat(|r| r.auc)
    }

    pub fn avg(&self) -> Option<MeanSe> {
        self.stat(|r| r.avg)
    }

    pub fn last(&self) -> Option<MeanSe> {
        self.stat(|r| r.last)
    }
}

/// Runs every cell for every seed. Failures are recorded per run and do not
/// stop the sweep. Cells run on the rayon pool; each owns its learner, so the
/// numbers do not depend on the thread count.
pub fn run_sweep(base: &RunConfig, cells: &[SweepCell], seeds: &[u64]) -> Vec<CellResult> {
    cells
        .par_iter()
        .map(|&cell| {
            let runs = seeds
                .iter()
                .map(|&seed| {
                    let config = RunConfig {
                        disjoint_ratio: cell.disjoint_ratio,
                        blurry_ratio: cell.blurry_ratio,
                        gamma: cell.gamma,
                        seed,
                        ..base.clone()
                    };
                    run_config(&config).map(|o| o.report).map_err(|e| e.to_string())
                })
                .collect();
            CellResult {
                cell,
                seeds: seeds.to_vec(),
                runs,
            }
        })
        .collect()
}

fn pct(v: Option<MeanSe>) -> String {
    match v {
        Some(m) => format!("{:.4}±{:.4}", 100.0 * m.mean, 100.0 * m.se),
        None => "FAILED".to_string(),
    }
}

/// Tab-separated table, percentages as `mean±standard error`.
pub fn sweep_table(results: &[CellResult]) -> String {
    let mut out = String::from("r_d\tr_b\tgamma\tseeds\tauc\tavg\tlast\tstatus\n");
    for r in results {
        let status = match r.first_error() {
            Some(e) => format!("FAILED: {e}"),
            None => "ok".to_string(),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.cell.disjoint_ratio,
            r.cell.blurry_ratio,
            r.cell.gamma,
            r.seeds.len(),
            pct(r.auc()),
            pct(r.avg()),
            pct(r.last()),
            status
        ));
    }
    out
}

#[cfg(any(test, feature = "oracle"))]
pub use verify::*;

#[cfg(any(test, feature = "oracle"))]
mod verify {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::oracle::{joint_solve, AccumulatedDataset};

    /// Recursive learner versus the batch ridge solution on the same data.
    #[derive(Clone, Debug)]
    pub struct VerifyReport {
        pub max_abs_diff: f64,
        /// Largest absolute difference per class column, in learner column order.
        pub per_class: Vec<(ClassId, f64)>,
        pub recursive_accuracy: f64,
        pub joint_accuracy: f64,
        /// Test rows on which the two classifiers pick different classes.
        pub decision_mismatches: usize,
    }

    impl VerifyReport {
        pub fn passes(&self, tolerance: f64) -> bool {
            self.max_abs_diff <= tolerance
        }
    }

    /// Columns of `joint` reordered to match `state`'s registry.
    pub fn align_columns(state: &LearnerState, data: &AccumulatedDataset, joint: &DenseMatrix) -> Result<DenseMatrix> {
        let ids = state.registry().ids();
        if ids.len() != data.registry.len() {
            return Err(Error::State(format!(
                "learner knows {} classes, batch data has {}",
                ids.len(),
                data.registry.len()
            )));
        }
        let mut aligned = DenseMatrix::zeros(joint.rows(), ids.len());
        for (col, &id) in ids.iter().enumerate() {
            let src = data
                .registry
                .column_of(id)
                .ok_or_else(|| Error::State(format!("class {id} missing from batch data")))?;
            for i in 0..joint.rows() {
                aligned[(i, col)] = joint[(i, src)];
            }
        }
        Ok(aligned)
    }

    /// Compares a trained state with the batch solution over `tasks`.
    pub fn compare_with_joint(state: &LearnerState, tasks: &[TaskBatch], test: &TaskBatch) -> Result<VerifyReport> {
        let data = AccumulatedDataset::from_tasks(state.width(), tasks)?;
        let joint = align_columns(state, &data, &joint_solve(&data, state.gamma())?)?;
        let w = state.weights();
        let per_class = state
            .registry()
            .ids()
            .iter()
            .enumerate()
            .map(|(col, &id)| {
                let diff = (0..w.rows()).fold(0.0f64, |m, i| m.max((w[(i, col)] - joint[(i, col)]).abs()));
                (id, diff)
            })
            .collect();
        let joint_state = LearnerState::from_parts(
            state.memory().clone(),
            joint.clone(),
            state.registry().clone(),
            state.gamma(),
            state.tasks_seen(),
        )?;
        let subset = seen_subset(test, state);
        let (recursive_accuracy, joint_accuracy, decision_mismatches) = if subset.is_empty() {
            (f64::NAN, f64::NAN, 0)
        } else {
            let a = state.predict(&subset.features)?;
            let b = joint_state.predict(&subset.features)?;
            let mismatches = a.labels.iter().zip(&b.labels).filter(|(x, y)| x != y).count();
            (
                task_accuracy(&a.labels, &subset.labels)?,
                task_accuracy(&b.labels, &subset.labels)?,
                mismatches,
            )
        };
        Ok(VerifyReport {
            max_abs_diff: w.max_abs_diff(&joint)?,
            per_class,
            recursive_accuracy,
            joint_accuracy,
            decision_mismatches,
        })
    }

    /// Trains recursively over a buffered stream and compares with the batch solve.
    pub fn verify_stream(stream: &TaskStream, gamma: f64) -> Result<VerifyReport> {
        let width = stream
            .tasks
            .first()
            .map(|t| t.features.cols())
            .ok_or_else(|| Error::Parameter("stream has no tasks".into()))?;
        let mut state = LearnerState::new(gamma, width)?;
        for t in &stream.tasks {
            state.update_task(t)?;
        }
        compare_with_joint(&state, &stream.tasks, &stream.test)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            buffer_width: 24,
            classes: 5,
            per_class: 40,
            input_dim: 8,
            num_tasks: 3,
            eval_interval: 25,
            ..RunConfig::default()
        }
    }

    #[test]
    fn trace_ends_at_total_and_last_matches_final_task() {
        let out = run_config(&small()).unwrap();
        let r = &out.report;
        assert_eq!(r.trace.points.last().unwrap().samples_seen, 180);
        assert_eq!(r.last, *r.per_task.last().unwrap());
        assert_eq!(r.trace.points.last().unwrap().accuracy, r.last);
        r.trace.validate().unwrap();
        assert_eq!(out.task_logs.len(), 3);
    }

    #[test]
    fn runs_are_deterministic() {
        let a = run_config(&small()).unwrap();
        let b = run_config(&small()).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn zero_gamma_is_an_error_not_a_panic() {
        let cfg = RunConfig { gamma: 0.0, ..small() };
        assert!(matches!(run_config(&cfg), Err(Error::Parameter(_))));
    }

    #[test]
    fn sweep_marks_failed_cells() {
        let cells = [
            SweepCell {
                disjoint_ratio: 0.5,
                blurry_ratio: 0.1,
                gamma: 0.0,
            },
            SweepCell {
                disjoint_ratio: 0.5,
                blurry_ratio: 0.1,
                gamma: 10.0,
            },
        ];
        let res = run_sweep(&small(), &cells, &[1, 2]);
        assert!(res[0].failed());
        assert!(!res[1].failed());
        let table = sweep_table(&res);
        assert!(table.lines().nth(1).unwrap().contains("FAILED"));
        assert!(!table.lines().nth(2).unwrap().contains("FAILED"));
    }

    #[test]
    fn standard_error() {
        let m = MeanSe::of(&[1.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert!((m.se - 1.0).abs() < 1e-15);
        assert_eq!(MeanSe::of(&[0.4]).unwrap().se, 0.0);
        assert!(MeanSe::of(&[]).is_none());
    }

    #[test]
    fn verify_passes_on_small_stream() {
        let stream = small().buffered_stream().unwrap();
        let rep = verify_stream(&stream, 100.0).unwrap();
        assert!(rep.passes(1e-8), "{}", rep.max_abs_diff);
        assert_eq!(rep.decision_mismatches, 0);
    }
}
