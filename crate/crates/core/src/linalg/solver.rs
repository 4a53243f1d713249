use std::sync::atomic::{AtomicUsize, Ordering};

use super::{pcg, CsrMatrix, SkylineCholesky};
use crate::error::{Error, Result};

/// Envelopes above this many stored entries switch `Auto` to CG.
const DIRECT_ENVELOPE_LIMIT: usize = 40_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMethod {
    /// Envelope Cholesky under reverse Cuthill–McKee ordering.
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    Cg,
    /// Direct unless the factor would be too large.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Relative residual target ‖Ax − b‖ ≤ tol·‖b‖ for the iterative method.
    pub tolerance: f64,
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: SolverMethod::Auto,
            tolerance: 1e-12,
            max_iterations: None,
        }
    }
}

#[derive(Debug)]
enum Backend {
    Direct(SkylineCholesky),
    Cg { max_iterations: usize },
}

/// A reusable solver for one SPD matrix.
///
/// Immutable after construction apart from a solve counter; `solve` may be
/// called concurrently with distinct right-hand sides.
#[derive(Debug)]
pub struct SpdSolver {
    matrix: CsrMatrix,
    backend: Backend,
    tolerance: f64,
    solves: AtomicUsize,
}

impl SpdSolver {
    pub fn factorize(a: CsrMatrix) -> Result<Self> {
        Self::with_options(a, SolverOptions::default())
    }

    pub fn with_options(a: CsrMatrix, options: SolverOptions) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidArgument(format!(
                "solver needs a square matrix, got {}x{}",
                a.n_rows(),
                a.n_cols()
            )));
        }
        if !a.is_symmetric(1e-12) {
            return Err(Error::NotSpd(format!(
                "matrix is not symmetric (max |A - Aᵀ| = {:.3e})",
                a.asymmetry()
            )));
        }
        let method = match options.method {
            SolverMethod::Auto => {
                let perm = super::reverse_cuthill_mckee(&a);
                if SkylineCholesky::envelope_size(&a, &perm) <= DIRECT_ENVELOPE_LIMIT {
                    SolverMethod::Direct
                } else {
                    SolverMethod::Cg
                }
            }
            m => m,
        };
        let backend = match method {
            SolverMethod::Cg => {
                if let Some(i) = a.diagonal().iter().position(|&d| !(d > 0.0)) {
                    return Err(Error::NotSpd(format!("nonpositive diagonal entry at row {i}")));
                }
                Backend::Cg {
                    max_iterations: options.max_iterations.unwrap_or(10 * a.n_rows().max(100)),
                }
            }
            _ => Backend::Direct(SkylineCholesky::factorize(&a)?),
        };
        Ok(Self {
            matrix: a,
            backend,
            tolerance: options.tolerance,
            solves: AtomicUsize::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn method(&self) -> SolverMethod {
        match self.backend {
            Backend::Direct(_) => SolverMethod::Direct,
            Backend::Cg { .. } => SolverMethod::Cg,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "right-hand side has length {}, matrix has {} rows",
                b.len(),
                self.dim()
            )));
        }
        self.solves.fetch_add(1, Ordering::Relaxed);
        match &self.backend {
            Backend::Direct(chol) => Ok(chol.solve(b)),
            Backend::Cg { max_iterations } => pcg(&self.matrix, b, self.tolerance, *max_iterations),
        }
    }

    /// Number of `solve` calls made on this handle.
    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }
}
