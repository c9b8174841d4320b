//! Block semidefinite programs with a shared constraint map.
//!
//! Every program has `N` Hermitian PSD blocks of the same size `n` and
//! affine constraints on their sum:
//!
//! ```text
//! minimize   Σ_b ⟨C_b, X_b⟩
//! subject to ⟨A_r, Σ_b X_b⟩ = b_r,   X_b ⪰ 0.
//! ```
//!
//! Constraint operators are stored as columns of real coordinates in an
//! orthonormal basis of the Hermitian (or real symmetric) matrices, so the
//! constraint map is a plain real matrix.

mod basis;
pub mod dump;
pub mod embed;
mod solver;

pub use basis::{HermBasis, SdpScalar};
pub use solver::{solve, SdpOptions, SdpSolution, SdpStatus};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A block SDP over the scalar field `T` (`f64` or complex).
#[derive(Clone, Debug)]
pub struct BlockSdp<T: SdpScalar> {
    pub n: usize,
    /// Constraint coordinates, `basis dimension × m`.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: Vec<DMatrix<T>>,
}

impl<T: SdpScalar> BlockSdp<T> {
    pub fn new(n: usize, a: DMatrix<f64>, b: DVector<f64>, c: Vec<DMatrix<T>>) -> Result<Self> {
        let dim = T::basis_dim(n);
        if a.nrows() != dim {
            return Err(Error::Dimension(format!("constraint rows {} != basis dimension {dim}", a.nrows())));
        }
        if a.ncols() != b.len() {
            return Err(Error::Dimension("constraint count differs from right-hand side".into()));
        }
        if c.is_empty() {
            return Err(Error::InvalidParameter("program needs at least one block".into()));
        }
        if c.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::Dimension("cost block has the wrong size".into()));
        }
        Ok(Self { n, a, b, c })
    }

    pub fn blocks(&self) -> usize {
        self.c.len()
    }

    pub fn constraints(&self) -> usize {
        self.b.len()
    }
}
