use super::{axpy, dot, norm2, CsrMatrix};
use crate::error::{Error, Result};

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
///
/// Stops once ‖Ax − b‖₂ ≤ tol·‖b‖₂. The recursively updated residual is
/// confirmed against the true residual before returning.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iterations: usize) -> Result<Vec<f64>> {
    let n = a.n_rows();
    assert_eq!(b.len(), n, "right-hand side dimension mismatch");
    let b_norm = norm2(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::NotSpd(format!("nonpositive diagonal entry at row {i}")));
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();

    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    for it in 0..max_iterations {
        a.mul_vec_into(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::NotSpd(format!(
                "nonpositive curvature {curvature:.3e} at CG iteration {it}"
            )));
        }
        let step = rz / curvature;
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        rel = norm2(&r) / b_norm;
        if rel <= tol {
            let true_residual: Vec<f64> = a.mul_vec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
            rel = norm2(&true_residual) / b_norm;
            if rel <= tol {
                return Ok(x);
            }
            r = true_residual;
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri * di;
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: max_iterations,
        residual: rel,
    })
}
