use std::f64::consts::PI;

use super::{Domain, Mesh, Point, DEFAULT_RHO_MAX};
use crate::error::{Error, Result};

/// Uniform partition of (0, 1) into `n_cells` cells.
pub fn generate_interval_mesh(n_cells: usize) -> Result<Mesh> {
    if n_cells == 0 {
        return Err(Error::InvalidArgument("interval mesh needs at least one cell".into()));
    }
    let n = n_cells as f64;
    let vertices: Vec<Point> = (0..=n_cells).map(|i| [i as f64 / n, 0.0]).collect();
    let cells: Vec<usize> = (0..n_cells).flat_map(|i| [i, i + 1]).collect();
    Mesh::new(1, Domain::Interval { a: 0.0, b: 1.0 }, vertices, cells)
}

/// Quasi-uniform triangulation of a polygon inscribed in the unit disk with
/// mesh size at most 1.5·`target_h`.
///
/// Uses concentric rings of vertices at radii k/m with 6k vertices on ring k;
/// see [`ring_disk_mesh`].
pub fn generate_disk_mesh(target_h: f64) -> Result<Mesh> {
    if !(target_h > 0.0 && target_h < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "disk mesh size must lie in (0, 1), got {target_h}"
        )));
    }
    let mut rings = ((1.0 / target_h) - 1e-9).ceil().max(1.0) as usize;
    loop {
        let mesh = ring_disk_mesh(rings)?;
        if mesh.h() <= 1.5 * target_h {
            return Ok(mesh);
        }
        rings += 1;
    }
}

/// Ring triangulation of the unit disk with `rings` vertex rings around the
/// centre; it has 6·rings² triangles and 3·rings·(rings + 1) + 1 vertices.
///
/// Consecutive rings are stitched by merging their vertices in order of
/// angle, so every triangle has two vertices on one ring and one on the
/// neighbouring ring.
pub fn ring_disk_mesh(rings: usize) -> Result<Mesh> {
    if rings == 0 {
        return Err(Error::InvalidArgument("disk mesh needs at least one ring".into()));
    }
    let m = rings as f64;
    let mut vertices: Vec<Point> = vec![[0.0, 0.0]];
    let mut ring_start = vec![0usize];
    for k in 1..=rings {
        ring_start.push(vertices.len());
        let count = 6 * k;
        let r = if k == rings { 1.0 } else { k as f64 / m };
        for j in 0..count {
            let theta = 2.0 * PI * j as f64 / count as f64;
            vertices.push([r * theta.cos(), r * theta.sin()]);
        }
    }

    let mut cells = Vec::with_capacity(18 * rings * rings);
    let mut push = |a: usize, b: usize, c: usize, vertices: &[Point]| {
        let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
        let cross = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        if cross > 0.0 {
            cells.extend([a, b, c]);
        } else {
            cells.extend([a, c, b]);
        }
    };

    // centre fan
    for j in 0..6 {
        push(0, 1 + j, 1 + (j + 1) % 6, &vertices);
    }
    for k in 2..=rings {
        let n_in = 6 * (k - 1);
        let n_out = 6 * k;
        let inner = |i: usize| ring_start[k - 1] + i % n_in;
        let outer = |j: usize| ring_start[k] + j % n_out;
        let (mut i, mut j) = (0, 0);
        while i < n_in || j < n_out {
            // compare the angles of the next inner and outer vertices exactly
            let advance_outer = i == n_in || (j < n_out && (j + 1) * n_in <= (i + 1) * n_out);
            if advance_outer {
                push(inner(i), outer(j), outer(j + 1), &vertices);
                j += 1;
            } else {
                push(inner(i), outer(j), inner(i + 1), &vertices);
                i += 1;
            }
        }
    }
    let mesh = Mesh::new(2, Domain::Disk { radius: 1.0 }, vertices, cells)?;
    mesh.check_quasi_uniform(DEFAULT_RHO_MAX)?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_four_cells() {
        let m = generate_interval_mesh(4).unwrap();
        assert_eq!(m.n_vertices(), 5);
        let xs: Vec<f64> = m.vertices().iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(m.h(), 0.25);
        assert_eq!(m.boundary_flags(), &[true, false, false, false, true]);
    }

    #[test]
    fn interval_single_cell() {
        let m = generate_interval_mesh(1).unwrap();
        assert_eq!(m.n_vertices(), 2);
        assert_eq!(m.n_cells(), 1);
        assert!(m.boundary_flags().iter().all(|&b| b));
    }

    #[test]
    fn interval_fine_data_grid() {
        let m = generate_interval_mesh(1600).unwrap();
        assert!((m.h() - 1.0 / 1600.0).abs() < 1e-15);
    }

    #[test]
    fn interval_zero_cells_is_error() {
        assert!(matches!(generate_interval_mesh(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn disk_counts() {
        for rings in 1..6 {
            let m = ring_disk_mesh(rings).unwrap();
            assert_eq!(m.n_cells(), 6 * rings * rings);
            assert_eq!(m.n_vertices(), 3 * rings * (rings + 1) + 1);
        }
    }

    #[test]
    fn disk_boundary_on_circle() {
        let m = generate_disk_mesh(0.5).unwrap();
        for (p, &b) in m.vertices().iter().zip(m.boundary_flags()) {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert_eq!(b, (r - 1.0).abs() < 1e-12);
        }
        assert!(m.h() <= 0.75);
        assert!(m.boundary_gap() <= m.h() * m.h());
    }

    #[test]
    fn disk_target_h_range() {
        assert!(generate_disk_mesh(0.0).is_err());
        assert!(generate_disk_mesh(1.0).is_err());
        assert!(generate_disk_mesh(-0.1).is_err());
    }

    #[test]
    fn disk_size_and_quasi_uniformity() {
        for &t in &[0.4, 0.25, 0.2, 1.0 / 6.0, 0.1, 0.05] {
            let m = generate_disk_mesh(t).unwrap();
            assert!(m.h() <= 1.5 * t, "target {t}: h = {}", m.h());
            assert!(m.quasi_uniformity() <= DEFAULT_RHO_MAX);
            m.check_face_to_face().unwrap();
        }
    }
}
