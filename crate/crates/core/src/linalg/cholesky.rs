//! Cholesky factorization and symmetric positive definite solves.

use super::dense::{dot, DenseMatrix};
use crate::error::{Error, Result};

/// Relative tolerance for the symmetry precondition of [`spd_solve`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    /// Factors `a` using only its lower triangle.
    ///
    /// Fails with [`Error::Singular`] at the first pivot that is not strictly
    /// positive and finite.
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::shape(
                "cholesky",
                "square matrix",
                format!("{}x{}", a.rows(), a.cols()),
            ));
        }
        let n = a.rows();
        let mut l = DenseMatrix::zeros(n, n);
        // Row-by-row (Cholesky-Banachiewicz); reads only the lower triangle of `a`.
        for i in 0..n {
            for j in 0..=i {
                let s = {
                    let data = l.as_slice();
                    dot(&data[i * n..i * n + j], &data[j * n..j * n + j])
                };
                if i == j {
                    let pivot = a[(i, i)] - s;
                    if !(pivot > 0.0 && pivot.is_finite()) {
                        return Err(Error::Singular { pivot: i, value: pivot });
                    }
                    l[(i, i)] = pivot.sqrt();
                } else {
                    l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
                }
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.l
    }

    /// Solves `A X = B` for every column of `b`.
    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let n = self.dim();
        if b.rows() != n {
            return Err(Error::shape("cholesky solve", format!("{n} rows"), b.rows()));
        }
        let m = b.cols();
        let mut x = b.clone();
        // Forward: L Y = B, row by row so each step is a contiguous axpy.
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik == 0.0 {
                    continue;
                }
                let (head, tail) = x.as_mut_slice().split_at_mut(i * m);
                let src = &head[k * m..(k + 1) * m];
                for (t, s) in tail[..m].iter_mut().zip(src) {
                    *t -= lik * s;
                }
            }
            let inv = 1.0 / self.l[(i, i)];
            for v in x.row_mut(i) {
                *v *= inv;
            }
        }
        // Backward: Lᵀ X = Y.
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = self.l[(k, i)];
                if lki == 0.0 {
                    continue;
                }
                let (head, tail) = x.as_mut_slice().split_at_mut(k * m);
                let dst = &mut head[i * m..(i + 1) * m];
                for (d, s) in dst.iter_mut().zip(&tail[..m]) {
                    *d -= lki * s;
                }
            }
            let inv = 1.0 / self.l[(i, i)];
            for v in x.row_mut(i) {
                *v *= inv;
            }
        }
        if !x.all_finite() {
            return Err(Error::NonFinite("cholesky solve"));
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<DenseMatrix> {
        let mut inv = self.solve(&DenseMatrix::identity(self.dim()))?;
        inv.symmetrize();
        Ok(inv)
    }
}

fn check_symmetric(a: &DenseMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::shape(
            "spd_solve",
            "square matrix",
            format!("{}x{}", a.rows(), a.cols()),
        ));
    }
    let asym = a.max_asymmetry();
    if asym > SYMMETRY_TOLERANCE * a.max_abs() {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Solves `a X = b` for symmetric positive definite `a` by Cholesky factorization.
pub fn spd_solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    check_symmetric(a)?;
    Cholesky::factor(a)?.solve(b)
}

/// Explicit inverse of a symmetric positive definite matrix.
pub fn spd_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    check_symmetric(a)?;
    Cholesky::factor(a)?.inverse()
}
