use super::cholesky::Cholesky;
use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Folds the rows of `x` into an inverse Gram matrix.
///
/// Given `r_prev = (A)⁻¹` (symmetric, d×d) and new rows `x` (n×d), returns
/// `(A + xᵀx)⁻¹` computed as
/// `r_prev − r_prev xᵀ (I + x r_prev xᵀ)⁻¹ x r_prev`, then re-symmetrized.
/// Only an n×n system is factored, so the cost is independent of how many
/// rows went into `A`.
pub fn woodbury_update(r_prev: &DenseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if !r_prev.is_square() {
        return Err(Error::shape(
            "woodbury_update",
            "square memory matrix",
            format!("{}x{}", r_prev.rows(), r_prev.cols()),
        ));
    }
    if x.cols() != r_prev.rows() {
        return Err(Error::shape(
            "woodbury_update",
            format!("rows of width {}", r_prev.rows()),
            format!("{}x{}", x.rows(), x.cols()),
        ));
    }
    if x.rows() == 0 {
        return Ok(r_prev.clone());
    }

    // r_prev xᵀ, d×n. Its transpose is x r_prev because r_prev is symmetric.
    let rxt = r_prev.matmul_t(x)?;
    let mut inner = x.matmul(&rxt)?;
    inner.add_diagonal(1.0);
    inner.symmetrize();

    let gain = Cholesky::factor(&inner)?.solve(&rxt.transpose())?;
    let mut r = r_prev.sub(&rxt.matmul(&gain)?)?;
    r.symmetrize();
    if !r.all_finite() {
        return Err(Error::NonFinite("woodbury_update"));
    }
    Ok(r)
}
