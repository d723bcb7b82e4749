//! Direct and iterative building blocks: symmetric sparse storage, sparse
//! Cholesky with a nested-dissection ordering, dense Cholesky and
//! Bunch–Kaufman `LDLᵀ`, and the vector kernels used by the Krylov solver.
//!
//! Every reduction runs in a fixed left-to-right order so iteration counts
//! are reproducible bit for bit.

mod cholesky;
mod dense;
mod io;
mod ordering;
mod sparse;
mod vector;

pub use cholesky::SparseCholesky;
pub use dense::{DenseCholesky, DenseLdlt, DenseMatrix, Inertia};
pub use io::{format_coordinate, parse_coordinate, read_coordinate, write_coordinate};
pub use ordering::{connected_components, nested_dissection, Graph};
pub use sparse::{CsrMatrix, SymSparse, Triplets};
pub use vector::{axpy, dot, norm2, scale};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-positive pivot {value:e} at row {index} in Cholesky factorization")]
    NotPositiveDefinite { index: usize, value: f64 },
    #[error("singular pivot at row {index} in LDLᵀ factorization")]
    Singular { index: usize },
    #[error("malformed coordinate file at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Which direct factorization to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    /// Sparse `LLᵀ`; requires a positive definite matrix.
    Cholesky,
    /// `LDLᵀ` with Bunch–Kaufman 1×1/2×2 pivoting, for indefinite matrices.
    Ldlt,
}

/// A factorization of a symmetric matrix, immutable once built.
#[derive(Debug, Clone)]
pub enum Factorization {
    Cholesky(SparseCholesky),
    Ldlt(DenseLdlt),
}

/// Relative pivot threshold used to flag (numerically) singular matrices.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-10;

/// Factor `a` with the requested kind.
///
/// The `LDLᵀ` path densifies the matrix: it serves small indefinite systems
/// (coarse problems, oracle checks). Large saddle-point systems in the
/// preconditioner are handled by block elimination on top of [`SparseCholesky`].
pub fn factor(a: &SymSparse, kind: FactorKind) -> Result<Factorization> {
    match kind {
        FactorKind::Cholesky => SparseCholesky::new(a, DEFAULT_PIVOT_TOL).map(Factorization::Cholesky),
        FactorKind::Ldlt => {
            DenseLdlt::new(&a.to_dense(), DEFAULT_PIVOT_TOL).map(Factorization::Ldlt)
        }
    }
}

impl Factorization {
    pub fn dim(&self) -> usize {
        match self {
            Factorization::Cholesky(f) => f.dim(),
            Factorization::Ldlt(f) => f.dim(),
        }
    }

    pub fn kind(&self) -> FactorKind {
        match self {
            Factorization::Cholesky(_) => FactorKind::Cholesky,
            Factorization::Ldlt(_) => FactorKind::Ldlt,
        }
    }

    /// Solve `A x = b` for one right-hand side.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(LinalgError::DimensionMismatch { expected: self.dim(), got: b.len() });
        }
        let mut x = b.to_vec();
        match self {
            Factorization::Cholesky(f) => f.solve_in_place(&mut x),
            Factorization::Ldlt(f) => f.solve_in_place(&mut x)?,
        }
        Ok(x)
    }

    /// Solve for several right-hand sides given as columns.
    pub fn solve_many(&self, columns: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        columns.iter().map(|b| self.solve(b)).collect()
    }

    /// Inertia `(positive, negative, zero)` of the factored matrix.
    pub fn inertia(&self) -> Inertia {
        match self {
            Factorization::Cholesky(f) => Inertia { positive: f.dim(), negative: 0, zero: 0 },
            Factorization::Ldlt(f) => f.inertia(),
        }
    }
}
