use std::collections::VecDeque;

use super::CsrMatrix;
use crate::error::{Error, Result};

/// Reverse Cuthill–McKee ordering of the symmetric sparsity graph of `a`.
///
/// Returns `perm` with `perm[new] = old`. Every connected component is
/// started from a pseudo-peripheral vertex; ties are broken by vertex index,
/// so the ordering is deterministic.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n_rows();
    let adjacency: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited vertex exists");
        let start = pseudo_peripheral(seed, &adjacency, &degree);

        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adjacency[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(start: usize, adjacency: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut level = vec![None; adjacency.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let lv = level[v].unwrap();
        for &w in &adjacency[v] {
            if level[w].is_none() {
                level[w] = Some(lv + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

fn pseudo_peripheral(seed: usize, adjacency: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut current = seed;
    let mut eccentricity = 0;
    for _ in 0..8 {
        let levels = bfs_levels(current, adjacency);
        let depth = levels.iter().flatten().copied().max().unwrap_or(0);
        if depth <= eccentricity && current != seed {
            break;
        }
        eccentricity = depth;
        let candidate = (0..adjacency.len())
            .filter(|&i| levels[i] == Some(depth))
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        if candidate == current {
            break;
        }
        current = candidate;
    }
    current
}

/// Envelope (profile) Cholesky factorization PᵀAP = LLᵀ of a symmetric
/// positive definite matrix, stored row by row from the first nonzero column.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    first_col: Vec<usize>,
    row_start: Vec<usize>,
    factor: Vec<f64>,
}

impl SkylineCholesky {
    /// Number of stored entries the factorization of `a` would need.
    pub fn envelope_size(a: &CsrMatrix, perm: &[usize]) -> usize {
        let (first_col, _) = envelope(a, perm);
        first_col.iter().enumerate().map(|(i, f)| i - f + 1).sum()
    }

    pub fn factorize(a: &CsrMatrix) -> Result<Self> {
        let perm = reverse_cuthill_mckee(a);
        Self::factorize_with_ordering(a, perm)
    }

    pub fn factorize_with_ordering(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.n_rows();
        let (first_col, inverse) = envelope(a, &perm);
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for i in 0..n {
            row_start.push(row_start[i] + i - first_col[i] + 1);
        }
        let mut factor = vec![0.0; row_start[n]];
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (old_j, v) in a.row(old_i) {
                let new_j = inverse[old_j];
                if new_j <= new_i {
                    factor[row_start[new_i] + new_j - first_col[new_i]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first_col[i];
            let base_i = row_start[i];
            for j in fi..i {
                let fj = first_col[j];
                let base_j = row_start[j];
                let k0 = fi.max(fj);
                let mut s = factor[base_i + j - fi];
                for k in k0..j {
                    s -= factor[base_i + k - fi] * factor[base_j + k - fj];
                }
                factor[base_i + j - fi] = s / factor[base_j + j - fj];
            }
            let mut d = factor[base_i + i - fi];
            for k in fi..i {
                let l = factor[base_i + k - fi];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotSpd(format!(
                    "nonpositive pivot {d:.3e} at row {}",
                    perm[i]
                )));
            }
            factor[base_i + i - fi] = d.sqrt();
        }
        Ok(Self {
            n,
            perm,
            first_col,
            row_start,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "right-hand side dimension mismatch");
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        // L y = P b
        for i in 0..self.n {
            let fi = self.first_col[i];
            let base = self.row_start[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.factor[base + k - fi] * y[k];
            }
            y[i] = s / self.factor[base + i - fi];
        }
        // Lᵀ x = y
        for i in (0..self.n).rev() {
            let fi = self.first_col[i];
            let base = self.row_start[i];
            y[i] /= self.factor[base + i - fi];
            let xi = y[i];
            for k in fi..i {
                y[k] -= self.factor[base + k - fi] * xi;
            }
        }
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

fn envelope(a: &CsrMatrix, perm: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let n = a.n_rows();
    let mut inverse = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        inverse[old] = new;
    }
    let first_col = perm
        .iter()
        .enumerate()
        .map(|(new_i, &old_i)| {
            a.row(old_i)
                .map(|(old_j, _)| inverse[old_j])
                .filter(|&j| j <= new_i)
                .min()
                .unwrap_or(new_i)
        })
        .collect();
    (first_col, inverse)
}
