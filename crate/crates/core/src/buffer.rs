//! Random-feature buffer: `relu(x · W_B)` with a frozen Gaussian `W_B`.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::{stream, substream, BoxMuller};

/// Default buffer width used for full-scale runs.
pub const DEFAULT_BUFFER_WIDTH: usize = 5000;

#[derive(Clone, Debug)]
pub struct BufferLayer {
    weight: DenseMatrix,
    seed: u64,
}

impl BufferLayer {
    /// Samples a `input_dim × width` projection with i.i.d. N(0, 1) entries,
    /// filled row-major from stream 0 of `seed`.
    pub fn new(seed: u64, input_dim: usize, width: usize) -> Result<Self> {
        if input_dim == 0 || width == 0 {
            return Err(Error::Parameter(format!(
                "buffer dimensions must be positive (input {input_dim}, width {width})"
            )));
        }
        let mut normal = BoxMuller::new(substream(seed, stream::BUFFER_WEIGHTS));
        let mut weight = DenseMatrix::zeros(input_dim, width);
        normal.fill(weight.as_mut_slice());
        Ok(BufferLayer { weight, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn width(&self) -> usize {
        self.weight.cols()
    }

    pub fn weight(&self) -> &DenseMatrix {
        &self.weight
    }

    pub fn embed(&self, features: &DenseMatrix) -> Result<DenseMatrix> {
        if features.cols() != self.input_dim() {
            return Err(Error::shape(
                "buffer embed",
                format!("{} input features", self.input_dim()),
                features.cols(),
            ));
        }
        let mut out = features.matmul(&self.weight)?;
        for v in out.as_mut_slice() {
            *v = v.max(0.0);
        }
        Ok(out)
    }
}
