//! Task streams for generalized class-incremental learning.
//!
//! [`generate_siblurry`] splits a labelled training set into `K` tasks with
//! stochastic boundaries: a fraction of the classes is *disjoint* (each lives
//! in exactly one task), the rest is *blurry* (its samples may leak into other
//! tasks). [`generate_synthetic`] produces Gaussian-cluster features so that
//! experiments run without any external data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::buffer::BufferLayer;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::registry::ClassId;
use crate::rng::{stream, substream, BoxMuller};

/// Which representation the rows of a batch live in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureSpace {
    /// Raw backbone features, `d_E` wide.
    Backbone,
    /// Output of the buffer layer, `d_B` wide.
    Buffered,
}

/// Features and class labels of one task (or of a test split).
#[derive(Clone, Debug, PartialEq)]
pub struct TaskBatch {
    pub features: DenseMatrix,
    pub labels: Vec<ClassId>,
    pub space: FeatureSpace,
}

impl TaskBatch {
    pub fn backbone(features: DenseMatrix, labels: Vec<ClassId>) -> Self {
        TaskBatch {
            features,
            labels,
            space: FeatureSpace::Backbone,
        }
    }

    pub fn buffered(features: DenseMatrix, labels: Vec<ClassId>) -> Self {
        TaskBatch {
            features,
            labels,
            space: FeatureSpace::Buffered,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Passes backbone features through `layer`. Buffered batches are
    /// returned as they are.
    pub fn embed(&self, layer: &BufferLayer) -> Result<TaskBatch> {
        match self.space {
            FeatureSpace::Buffered => Ok(self.clone()),
            FeatureSpace::Backbone => Ok(TaskBatch::buffered(layer.embed(&self.features)?, self.labels.clone())),
        }
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> TaskBatch {
        TaskBatch {
            features: self.features.row_range(start, end),
            labels: self.labels[start..end].to_vec(),
            space: self.space,
        }
    }

    /// Keeps only the rows whose label satisfies `keep`.
    pub fn filter_labels(&self, keep: impl Fn(ClassId) -> bool) -> TaskBatch {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep(self.labels[i])).collect();
        TaskBatch {
            features: self.features.select_rows(&rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            space: self.space,
        }
    }

    /// Per-class sample counts, keyed by class id.
    pub fn class_counts(&self) -> BTreeMap<ClassId, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }
}

/// `floor(x + 0.5)` for non-negative `x`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Sizes of `groups` near-equal parts of `n`, larger parts first.
fn group_sizes(n: usize, groups: usize) -> Vec<usize> {
    let base = n / groups;
    let extra = n % groups;
    (0..groups).map(|g| base + usize::from(g < extra)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Radius of the sphere the class means are drawn on.
    pub separation: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub train: TaskBatch,
    pub test: TaskBatch,
}

/// Gaussian clusters with unit covariance.
///
/// Class `c` (ids `0..classes`) has its mean drawn uniformly on the sphere of
/// radius `separation`; each class is split 90/10 into train and test rows
/// (train count rounded half up). Rows are grouped by class.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.classes == 0 || spec.per_class == 0 || spec.dim == 0 {
        return Err(Error::Parameter(
            "synthetic classes, per-class count and dimension must be positive".into(),
        ));
    }
    if !(spec.separation.is_finite() && spec.separation >= 0.0) {
        return Err(Error::Parameter(format!(
            "separation must be non-negative, got {}",
            spec.separation
        )));
    }
    let mut mean_rng = BoxMuller::new(substream(spec.seed, stream::SYNTHETIC_MEANS));
    let mut noise = BoxMuller::new(substream(spec.seed, stream::SYNTHETIC_SAMPLES));

    let n_train = round_half_up(0.9 * spec.per_class as f64).min(spec.per_class);
    let n_test = spec.per_class - n_train;
    let mut train = Vec::with_capacity(spec.classes * n_train * spec.dim);
    let mut test = Vec::with_capacity(spec.classes * n_test * spec.dim);
    let mut train_labels = Vec::new();
    let mut test_labels = Vec::new();

    for class in 0..spec.classes {
        let mut mean: Vec<f64> = (0..spec.dim).map(|_| mean_rng.next()).collect();
        let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut mean {
            *v *= spec.separation / norm;
        }
        for i in 0..spec.per_class {
            let (dst, labels) = if i < n_train {
                (&mut train, &mut train_labels)
            } else {
                (&mut test, &mut test_labels)
            };
            dst.extend(mean.iter().map(|m| m + noise.next()));
            labels.push(class as ClassId);
        }
    }

    Ok(SyntheticData {
        train: TaskBatch::backbone(
            DenseMatrix::from_vec(train_labels.len(), spec.dim, train)?,
            train_labels,
        ),
        test: TaskBatch::backbone(DenseMatrix::from_vec(test_labels.len(), spec.dim, test)?, test_labels),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub num_tasks: usize,
    /// Fraction of classes confined to a single task.
    pub disjoint_ratio: f64,
    /// Fraction of blurry-class samples moved to a different task.
    pub blurry_ratio: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_tasks == 0 {
            return Err(Error::Parameter("number of tasks must be at least 1".into()));
        }
        for (name, v) in [
            ("disjoint ratio", self.disjoint_ratio),
            ("blurry ratio", self.blurry_ratio),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parameter(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Audit record of one task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskManifest {
    pub task: usize,
    pub class_counts: BTreeMap<ClassId, usize>,
}

impl TaskManifest {
    pub fn samples(&self) -> usize {
        self.class_counts.values().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioManifest {
    pub spec: ScenarioSpec,
    pub disjoint_classes: Vec<ClassId>,
    pub blurry_classes: Vec<ClassId>,
    /// Number of blurry samples moved away from their home task.
    pub moved_samples: usize,
    pub tasks: Vec<TaskManifest>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskStream {
    pub tasks: Vec<TaskBatch>,
    /// For each task, the rows of the source training set it holds, in task order.
    pub source_rows: Vec<Vec<usize>>,
    pub test: TaskBatch,
    pub manifest: ScenarioManifest,
}

impl TaskStream {
    pub fn total_train_samples(&self) -> usize {
        self.tasks.iter().map(TaskBatch::len).sum()
    }

    /// Embeds every task and the test split through `layer`.
    pub fn embed(&self, layer: &BufferLayer) -> Result<TaskStream> {
        Ok(TaskStream {
            tasks: self.tasks.iter().map(|t| t.embed(layer)).collect::<Result<_>>()?,
            source_rows: self.source_rows.clone(),
            test: self.test.embed(layer)?,
            manifest: self.manifest.clone(),
        })
    }
}

/// Splits `train` into a Si-Blurry task stream; `test` is carried along unchanged.
///
/// 1. `round(r_D · classes)` classes, chosen uniformly, become disjoint; the
///    rest are blurry.
/// 2. Both groups are shuffled and cut into `K` near-equal consecutive chunks,
///    larger chunks first. Chunk `t` of each group seeds task `t`.
/// 3. Every task hands `round(r_B · n_t)` of its blurry samples, chosen
///    uniformly, to one of the other `K − 1` tasks picked uniformly per sample.
/// 4. Each task's rows are shuffled.
///
/// Steps 1–2, 3 and 4 draw from separate streams of `spec.seed`, so the class
/// split does not change with `K`.
pub fn generate_siblurry(spec: &ScenarioSpec, train: &TaskBatch, test: TaskBatch) -> Result<TaskStream> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::Parameter("training set is empty".into()));
    }
    let k = spec.num_tasks;
    let classes: Vec<ClassId> = train
        .labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if spec.disjoint_ratio > 0.0 && classes.len() < k {
        return Err(Error::Parameter(format!(
            "{} classes cannot fill {k} tasks with a positive disjoint ratio",
            classes.len()
        )));
    }

    let mut class_rng = substream(spec.seed, stream::CLASS_PARTITION);
    let mut shuffled = classes.clone();
    shuffled.shuffle(&mut class_rng);
    let n_disjoint = round_half_up(spec.disjoint_ratio * classes.len() as f64).min(classes.len());
    let (disjoint, blurry) = shuffled.split_at(n_disjoint);
    if spec.disjoint_ratio >= 1.0 && disjoint.len() < k {
        return Err(Error::Parameter(format!(
            "{} disjoint classes for {k} tasks",
            disjoint.len()
        )));
    }

    let mut rows_by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (row, &l) in train.labels.iter().enumerate() {
        rows_by_class.entry(l).or_default().push(row);
    }
    let chunk_rows = |group: &[ClassId]| -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(k);
        let mut start = 0;
        for size in group_sizes(group.len(), k) {
            let rows = group[start..start + size]
                .iter()
                .flat_map(|c| rows_by_class[c].iter().copied())
                .collect();
            out.push(rows);
            start += size;
        }
        out
    };
    let mut task_rows = chunk_rows(disjoint);
    let blurry_rows = chunk_rows(blurry);

    let mut move_rng = substream(spec.seed, stream::BLURRY_REASSIGN);
    let mut received: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut moved = 0;
    for (t, rows) in blurry_rows.into_iter().enumerate() {
        let mut rows = rows;
        let n_move = if k > 1 {
            round_half_up(spec.blurry_ratio * rows.len() as f64).min(rows.len())
        } else {
            0
        };
        rows.shuffle(&mut move_rng);
        for &row in &rows[..n_move] {
            let mut target = move_rng.random_range(0..k - 1);
            if target >= t {
                target += 1;
            }
            received[target].push(row);
        }
        moved += n_move;
        task_rows[t].extend_from_slice(&rows[n_move..]);
    }

    let mut shuffle_rng = substream(spec.seed, stream::TASK_SHUFFLE);
    let mut tasks = Vec::with_capacity(k);
    let mut source_rows = Vec::with_capacity(k);
    let mut manifests = Vec::with_capacity(k);
    for (t, (mut rows, extra)) in task_rows.into_iter().zip(received).enumerate() {
        rows.extend(extra);
        if rows.is_empty() {
            return Err(Error::Parameter(format!(
                "task {t} received no samples; use fewer tasks or more classes"
            )));
        }
        rows.shuffle(&mut shuffle_rng);
        let batch = TaskBatch {
            features: train.features.select_rows(&rows),
            labels: rows.iter().map(|&r| train.labels[r]).collect(),
            space: train.space,
        };
        manifests.push(TaskManifest {
            task: t,
            class_counts: batch.class_counts(),
        });
        tasks.push(batch);
        source_rows.push(rows);
    }

    let mut disjoint_classes = disjoint.to_vec();
    let mut blurry_classes = blurry.to_vec();
    disjoint_classes.sort_unstable();
    blurry_classes.sort_unstable();
    Ok(TaskStream {
        tasks,
        source_rows,
        test,
        manifest: ScenarioManifest {
            spec: spec.clone(),
            disjoint_classes,
            blurry_classes,
            moved_samples: moved,
            tasks: manifests,
        },
    })
}

fn join_ids(ids: &[ClassId]) -> String {
    ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ScenarioManifest {
    /// Line-oriented `key=value` rendering, one `task` line per task.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# gacl scenario manifest");
        let _ = writeln!(out, "version=1");
        let _ = writeln!(out, "tasks={}", self.spec.num_tasks);
        let _ = writeln!(out, "disjoint_ratio={}", self.spec.disjoint_ratio);
        let _ = writeln!(out, "blurry_ratio={}", self.spec.blurry_ratio);
        let _ = writeln!(out, "seed={}", self.spec.seed);
        let _ = writeln!(out, "moved_samples={}", self.moved_samples);
        let _ = writeln!(out, "disjoint_classes={}", join_ids(&self.disjoint_classes));
        let _ = writeln!(out, "blurry_classes={}", join_ids(&self.blurry_classes));
        for t in &self.tasks {
            let counts = t
                .class_counts
                .iter()
                .map(|(c, n)| format!("{c}:{n}"))
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(
                out,
                "task index={} samples={} num_classes={} classes={}",
                t.task,
                t.samples(),
                t.class_counts.len(),
                counts
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<ScenarioManifest> {
        let bad = |msg: String| Error::Format(crate::error::FormatError::Malformed(msg));
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        let mut tasks = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("task ") {
                let mut index = None;
                let mut counts = BTreeMap::new();
                for part in rest.split_whitespace() {
                    let (k, v) = part
                        .split_once('=')
                        .ok_or_else(|| bad(format!("line {}: expected key=value", lineno + 1)))?;
                    match k {
                        "index" => {
                            index = Some(
                                v.parse::<usize>()
                                    .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?,
                            )
                        }
                        "classes" => {
                            for pair in v.split(',').filter(|p| !p.is_empty()) {
                                let (c, n) = pair
                                    .split_once(':')
                                    .ok_or_else(|| bad(format!("line {}: bad class count {pair:?}", lineno + 1)))?;
                                let c = c.parse().map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
                                let n = n.parse().map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
                                counts.insert(c, n);
                            }
                        }
                        _ => {}
                    }
                }
                let task = index.ok_or_else(|| bad(format!("line {}: task without index", lineno + 1)))?;
                tasks.push(TaskManifest {
                    task,
                    class_counts: counts,
                });
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key=value", lineno + 1)))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("missing key {k}")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse::<f64>().map_err(|e| bad(format!("{k}: {e}"))) };
        let int = |k: &str| -> Result<u64> { get(k)?.parse::<u64>().map_err(|e| bad(format!("{k}: {e}"))) };
        let ids = |k: &str| -> Result<Vec<ClassId>> {
            get(k)?
                .split(',')
                .filter(|p| !p.is_empty())
                .map(|p| p.parse().map_err(|e| bad(format!("{k}: {e}"))))
                .collect()
        };
        if int("version")? != 1 {
            return Err(bad(format!("unsupported manifest version {}", get("version")?)));
        }
        let spec = ScenarioSpec {
            num_tasks: int("tasks")? as usize,
            disjoint_ratio: num("disjoint_ratio")?,
            blurry_ratio: num("blurry_ratio")?,
            seed: int("seed")?,
        };
        if tasks.len() != spec.num_tasks {
            return Err(bad(format!("{} task lines for {} tasks", tasks.len(), spec.num_tasks)));
        }
        Ok(ScenarioManifest {
            spec,
            disjoint_classes: ids("disjoint_classes")?,
            blurry_classes: ids("blurry_classes")?,
            moved_samples: int("moved_samples")? as usize,
            tasks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(classes: usize, per_class: usize, seed: u64) -> SyntheticData {
        generate_synthetic(&SyntheticSpec {
            classes,
            per_class,
            dim: 4,
            separation: 3.0,
            seed,
        })
        .unwrap()
    }

    fn spec(k: usize, rd: f64, rb: f64, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            num_tasks: k,
            disjoint_ratio: rd,
            blurry_ratio: rb,
            seed,
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_split_90_10() {
        let a = data(3, 20, 5);
        let b = data(3, 20, 5);
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 54);
        assert_eq!(a.test.len(), 6);
        assert_ne!(a, data(3, 20, 6));
    }

    #[test]
    fn synthetic_means_sit_on_the_sphere() {
        let d = generate_synthetic(&SyntheticSpec {
            classes: 2,
            per_class: 4000,
            dim: 3,
            separation: 5.0,
            seed: 1,
        })
        .unwrap();
        let rows: Vec<usize> = (0..d.train.len()).filter(|&i| d.train.labels[i] == 1).collect();
        let x = d.train.features.select_rows(&rows);
        let mean: Vec<f64> = (0..3)
            .map(|j| x.column(j).iter().sum::<f64>() / rows.len() as f64)
            .collect();
        let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 5.0).abs() < 0.1, "{norm}");
    }

    #[test]
    fn synthetic_rejects_bad_specs() {
        let mut s = SyntheticSpec {
            classes: 0,
            per_class: 1,
            dim: 1,
            separation: 1.0,
            seed: 0,
        };
        assert!(generate_synthetic(&s).is_err());
        s.classes = 1;
        s.separation = -1.0;
        assert!(generate_synthetic(&s).is_err());
    }

    #[test]
    fn fully_disjoint_never_repeats_a_class() {
        let d = data(10, 30, 1);
        let stream = generate_siblurry(&spec(5, 1.0, 0.5, 3), &d.train, d.test).unwrap();
        let mut seen = BTreeSet::new();
        for t in &stream.tasks {
            for c in t.class_counts().keys() {
                assert!(seen.insert(*c), "class {c} in two tasks");
            }
        }
        assert_eq!(stream.manifest.moved_samples, 0);
    }

    #[test]
    fn rows_are_partitioned_exactly() {
        let d = data(7, 25, 2);
        let stream = generate_siblurry(&spec(3, 0.4, 0.3, 9), &d.train, d.test.clone()).unwrap();
        let mut all: Vec<usize> = stream.source_rows.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..d.train.len()).collect::<Vec<_>>());
        for (task, rows) in stream.tasks.iter().zip(&stream.source_rows) {
            assert_eq!(task.features, d.train.features.select_rows(rows));
        }
        assert_eq!(stream.test, d.test);
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let d = data(4, 10, 1);
        assert!(generate_siblurry(&spec(5, 1.0, 0.1, 1), &d.train, d.test.clone()).is_err());
        assert!(generate_siblurry(&spec(0, 0.5, 0.1, 1), &d.train, d.test.clone()).is_err());
        assert!(generate_siblurry(&spec(2, 1.2, 0.1, 1), &d.train, d.test.clone()).is_err());
        assert!(generate_siblurry(&spec(2, 0.5, -0.1, 1), &d.train, d.test.clone()).is_err());
        // One blurry class, nothing moves, so three of the four tasks stay empty.
        let one = data(1, 10, 1);
        assert!(generate_siblurry(&spec(4, 0.0, 0.0, 1), &one.train, one.test).is_err());
    }

    #[test]
    fn class_split_ignores_task_count() {
        let d = data(12, 10, 4);
        let a = generate_siblurry(&spec(3, 0.5, 0.1, 8), &d.train, d.test.clone()).unwrap();
        let b = generate_siblurry(&spec(6, 0.5, 0.1, 8), &d.train, d.test.clone()).unwrap();
        assert_eq!(a.manifest.disjoint_classes, b.manifest.disjoint_classes);
    }

    #[test]
    fn manifest_text_round_trips() {
        let d = data(6, 20, 4);
        let stream = generate_siblurry(&spec(3, 0.5, 0.2, 8), &d.train, d.test).unwrap();
        let text = stream.manifest.to_text();
        assert_eq!(ScenarioManifest::parse(&text).unwrap(), stream.manifest);
        assert!(ScenarioManifest::parse("version=1\ntasks=2\n").is_err());
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(2.4999), 2);
        assert_eq!(group_sizes(7, 3), vec![3, 2, 2]);
        assert_eq!(group_sizes(2, 4), vec![1, 1, 0, 0]);
    }
}
