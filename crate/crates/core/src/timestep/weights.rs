use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Backward Euler convolution quadrature weights: the coefficients b_j of
/// (1 − ζ)^α = Σ_j b_j ζ^j, j = 0..=N, and their partial sums.
#[derive(Debug, Clone, PartialEq)]
pub struct CqWeights {
    alpha: f64,
    b: Vec<f64>,
    partial: Vec<f64>,
}

impl CqWeights {
    /// Weights b_0..b_N from the recurrence b_j = b_{j−1}(j − 1 − α)/j.
    pub fn new(alpha: f64, n: usize) -> Result<Self> {
        check_alpha(alpha)?;
        let mut b = Vec::with_capacity(n + 1);
        b.push(1.0);
        for j in 1..=n {
            let jf = j as f64;
            b.push(b[j - 1] * (jf - 1.0 - alpha) / jf);
        }
        let mut partial = Vec::with_capacity(n + 1);
        let mut s = 0.0;
        for &bj in &b {
            s += bj;
            partial.push(s);
        }
        Ok(Self { alpha, b, partial })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.b
    }

    pub fn get(&self, j: usize) -> f64 {
        self.b[j]
    }

    /// s_n = Σ_{j≤n} b_j
    pub fn partial_sum(&self, n: usize) -> f64 {
        self.partial[n]
    }
}

pub fn cq_weights(alpha: f64, n: usize) -> Result<CqWeights> {
    CqWeights::new(alpha, n)
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "fractional order must lie in (0, 1], got {alpha}"
        )))
    }
}

/// Uniform time grid t_n = n·τ, τ = T/N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
    tau: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!("final time must be positive, got {t_final}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("number of time steps must be at least 1".into()));
        }
        Ok(Self {
            t_final,
            n_steps,
            tau: t_final / n_steps as f64,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// t_n; t_N is exactly T.
    pub fn t(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.t_final
        } else {
            n as f64 * self.tau
        }
    }
}
