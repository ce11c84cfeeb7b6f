//! Recursive analytic classifier for generalized class-incremental streams.
//!
//! The learner keeps two matrices and nothing else:
//!
//! * `r`, the inverse regularized autocorrelation `(Σ XᵀX + γI)⁻¹` of every
//!   buffered embedding seen so far, and
//! * `w`, the ridge-regression classifier over all registered classes.
//!
//! Each task folds its embeddings into `r` with a Woodbury update and then
//! corrects `w` in closed form. The result after any number of tasks is the
//! same matrix a single ridge regression over the concatenated data would
//! produce, no matter how the samples were split into tasks or whether classes
//! reappear. Classes that were already registered when a task arrives
//! contribute through the exposed-class label gain (`w_eclg`); classes seen
//! for the first time open new columns.
//!
//! The memory starts at `r₀ = γ⁻¹ I`, the value the closed form gives for an
//! empty dataset. Starting from `γI` instead breaks the equivalence at the
//! first task unless `γ = 1`.

use crate::error::{Error, Result};
use crate::linalg::{woodbury_update, DenseMatrix};
use crate::registry::{ClassId, ClassRegistry};
use crate::scenario::{FeatureSpace, TaskBatch};

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerState {
    r: DenseMatrix,
    w: DenseMatrix,
    registry: ClassRegistry,
    gamma: f64,
    tasks_seen: u64,
}

/// The two additive parts of one task's weight update.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskUpdateDecomposition {
    /// Previous weights corrected for the new data, plus the columns of the
    /// classes this task introduced.
    pub w_unexposed: DenseMatrix,
    /// Gain from labels of classes that were already registered. Zero in the
    /// columns of newly introduced classes.
    pub w_eclg: DenseMatrix,
}

impl TaskUpdateDecomposition {
    pub fn eclg_max_abs(&self) -> f64 {
        self.w_eclg.max_abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: DenseMatrix,
    pub labels: Vec<ClassId>,
}

impl LearnerState {
    /// Fresh learner with `r = γ⁻¹ I` and no classes.
    pub fn new(gamma: f64, width: usize) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Parameter(format!(
                "regularization gamma must be positive and finite, got {gamma}; \
                 gamma = 0 leaves the autocorrelation matrix singular whenever the \
                 buffered features are rank deficient"
            )));
        }
        if width == 0 {
            return Err(Error::Parameter("buffer width must be positive".into()));
        }
        Ok(LearnerState {
            r: DenseMatrix::from_diagonal_value(width, 1.0 / gamma),
            w: DenseMatrix::zeros(width, 0),
            registry: ClassRegistry::new(),
            gamma,
            tasks_seen: 0,
        })
    }

    /// Reassembles a state from persisted parts, checking shapes and symmetry.
    pub fn from_parts(
        r: DenseMatrix,
        w: DenseMatrix,
        registry: ClassRegistry,
        gamma: f64,
        tasks_seen: u64,
    ) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::State(format!("non-positive gamma {gamma}")));
        }
        if !r.is_square() || r.rows() == 0 {
            return Err(Error::State(format!("memory matrix is {}x{}", r.rows(), r.cols())));
        }
        if w.rows() != r.rows() || w.cols() != registry.len() {
            return Err(Error::State(format!(
                "weight is {}x{}, expected {}x{}",
                w.rows(),
                w.cols(),
                r.rows(),
                registry.len()
            )));
        }
        if r.max_asymmetry() != 0.0 {
            return Err(Error::State("memory matrix is not symmetric".into()));
        }
        if !r.all_finite() || !w.all_finite() {
            return Err(Error::State("non-finite entries".into()));
        }
        Ok(LearnerState {
            r,
            w,
            registry,
            gamma,
            tasks_seen,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn width(&self) -> usize {
        self.r.rows()
    }

    pub fn tasks_seen(&self) -> u64 {
        self.tasks_seen
    }

    pub fn registry(&self) -> &ClassRegistry {
        &self.registry
    }

    /// Inverse regularized autocorrelation matrix.
    pub fn memory(&self) -> &DenseMatrix {
        &self.r
    }

    /// Classifier weights, `width × classes`.
    pub fn weights(&self) -> &DenseMatrix {
        &self.w
    }

    /// Learns one task. On error the state is left untouched.
    pub fn update_task(&mut self, batch: &TaskBatch) -> Result<TaskUpdateDecomposition> {
        self.apply(batch, true)
    }

    /// Same as [`update_task`](Self::update_task) but drops the exposed-class
    /// gain from the new weights. The returned decomposition still reports the
    /// gain that was discarded. Ablation only: this breaks equivalence with
    /// joint training as soon as a class reappears.
    pub fn update_task_without_eclg(&mut self, batch: &TaskBatch) -> Result<TaskUpdateDecomposition> {
        self.apply(batch, false)
    }

    fn apply(&mut self, batch: &TaskBatch, keep_eclg: bool) -> Result<TaskUpdateDecomposition> {
        if batch.space != FeatureSpace::Buffered {
            return Err(Error::Parameter(
                "task batch holds backbone features; embed it through the buffer first".into(),
            ));
        }
        let x = &batch.features;
        if x.rows() == 0 {
            return Err(Error::Parameter("empty task batch".into()));
        }
        if x.cols() != self.width() {
            return Err(Error::shape(
                "update_task",
                format!("{} buffered features", self.width()),
                x.cols(),
            ));
        }
        if batch.labels.len() != x.rows() {
            return Err(Error::shape(
                "update_task",
                format!("{} labels", x.rows()),
                batch.labels.len(),
            ));
        }

        let mut registry = self.registry.clone();
        let split = registry.split_and_register(&batch.labels);

        let r = woodbury_update(&self.r, x)?;
        // r Xᵀ is shared by all three products below.
        let rxt = r.matmul_t(x)?;

        let correction = rxt.matmul(&x.matmul(&self.w)?)?;
        let w_unexposed = self.w.sub(&correction)?.hstack(&rxt.matmul(&split.unexposed)?)?;
        let w_eclg = rxt.matmul(&split.exposed)?.pad_cols(registry.len())?;

        let w = if keep_eclg {
            w_unexposed.add(&w_eclg)?
        } else {
            w_unexposed.clone()
        };
        if !w.all_finite() {
            return Err(Error::NonFinite("update_task"));
        }

        self.r = r;
        self.w = w;
        self.registry = registry;
        self.tasks_seen += 1;
        Ok(TaskUpdateDecomposition { w_unexposed, w_eclg })
    }

    /// Scores `embeddings` and returns the arg-max class per row. Ties go to
    /// the lowest column.
    pub fn predict(&self, embeddings: &DenseMatrix) -> Result<Prediction> {
        if self.registry.is_empty() {
            return Err(Error::State("cannot predict before any class is registered".into()));
        }
        if embeddings.cols() != self.width() {
            return Err(Error::shape(
                "predict",
                format!("{} buffered features", self.width()),
                embeddings.cols(),
            ));
        }
        let logits = embeddings.matmul(&self.w)?;
        let labels = argmax_rows(&logits)
            .into_iter()
            .map(|col| self.registry.id_at(col))
            .collect();
        Ok(Prediction { logits, labels })
    }
}

/// Column of the first maximum in each row.
pub fn argmax_rows(m: &DenseMatrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
