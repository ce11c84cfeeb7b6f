//! Exemplar-free class-incremental learning with a closed-form recursive
//! classifier whose weights match batch ridge regression on all data seen.
//!
//! The `oracle` feature exposes the batch solver used for verification.

pub mod buffer;
pub mod error;
pub mod experiment;
pub mod io;
pub mod learner;
pub mod linalg;
pub mod metrics;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod registry;
pub mod rng;
pub mod scenario;

pub use error::{Error, FormatError, Result};
pub use learner::{LearnerState, Prediction, TaskUpdateDecomposition};
pub use linalg::DenseMatrix;
pub use registry::{ClassId, ClassRegistry};
pub use scenario::{FeatureSpace, TaskBatch};
