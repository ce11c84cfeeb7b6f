//! Dense linear algebra: products, Cholesky solves and the Woodbury
//! inverse update.

mod cholesky;
mod dense;
mod woodbury;

pub use cholesky::{spd_inverse, spd_solve, Cholesky, SYMMETRY_TOLERANCE};
pub use dense::DenseMatrix;
pub use woodbury::woodbury_update;
