//! Batch ridge regression over retained samples.
//!
//! This keeps every sample it is given, so it is only compiled for tests and
//! with the `oracle` feature. It is the reference the recursive learner is
//! checked against.

use crate::error::{Error, Result};
use crate::linalg::{spd_solve, DenseMatrix};
use crate::registry::{ClassId, ClassRegistry};
use crate::scenario::TaskBatch;

/// Stacked features and zero-filled one-hot targets over all tasks so far.
#[derive(Clone, Debug, PartialEq)]
pub struct AccumulatedDataset {
    pub x_total: DenseMatrix,
    pub y_total: DenseMatrix,
    pub registry: ClassRegistry,
}

impl AccumulatedDataset {
    pub fn new(width: usize) -> Self {
        AccumulatedDataset {
            x_total: DenseMatrix::zeros(0, width),
            y_total: DenseMatrix::zeros(0, 0),
            registry: ClassRegistry::new(),
        }
    }

    pub fn from_tasks<'a>(width: usize, tasks: impl IntoIterator<Item = &'a TaskBatch>) -> Result<Self> {
        let mut acc = Self::new(width);
        for t in tasks {
            acc.push(&t.features, &t.labels)?;
        }
        Ok(acc)
    }

    /// Appends one task: old targets gain zero columns for the task's new classes.
    pub fn push(&mut self, x: &DenseMatrix, labels: &[ClassId]) -> Result<()> {
        if x.cols() != self.x_total.cols() || x.rows() != labels.len() {
            return Err(Error::shape(
                "accumulate",
                format!("{} labelled rows of width {}", labels.len(), self.x_total.cols()),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
        let split = self.registry.split_and_register(labels);
        let old = self.y_total.pad_cols(self.registry.len())?;
        let old = if old.rows() == 0 {
            DenseMatrix::zeros(0, self.registry.len())
        } else {
            old
        };
        self.y_total = old.vstack(&split.combined())?;
        self.x_total = self.x_total.vstack(x)?;
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.x_total.cols()
    }
}

/// `Xᵀ Y`.
pub fn cross_correlation(data: &AccumulatedDataset) -> DenseMatrix {
    if data.x_total.rows() == 0 {
        return DenseMatrix::zeros(data.width(), data.y_total.cols());
    }
    data.x_total
        .t_matmul(&data.y_total)
        .expect("row counts match by construction")
}

/// Ridge solution `(XᵀX + γI)⁻¹ XᵀY` by a Cholesky solve. `γ = 0` is allowed
/// and fails with a singular-pivot error when `XᵀX` is rank deficient.
pub fn joint_solve(data: &AccumulatedDataset, gamma: f64) -> Result<DenseMatrix> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::Parameter(format!("gamma must be non-negative, got {gamma}")));
    }
    let mut gram = data.x_total.t_matmul(&data.x_total)?;
    gram.add_diagonal(gamma);
    spd_solve(&gram, &cross_correlation(data))
}
