//! Sparse symmetric positive definite linear algebra: compressed row storage,
//! an envelope Cholesky factorization under reverse Cuthill–McKee ordering,
//! and Jacobi-preconditioned conjugate gradients.

mod pcg;
mod skyline;
mod solver;
mod sparse;

pub use pcg::pcg;
pub use skyline::{reverse_cuthill_mckee, SkylineCholesky};
pub use solver::{SolverMethod, SolverOptions, SpdSolver};
pub use sparse::CsrMatrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y ← y + a·x
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
