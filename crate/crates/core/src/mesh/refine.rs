use std::collections::HashMap;

use super::{Domain, Mesh, Point};
use crate::error::Result;

/// Uniform refinement: each interval is bisected, each triangle split into
/// four by its edge midpoints. Midpoints of boundary edges of a disk mesh are
/// moved radially onto the circle.
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    match mesh.dim() {
        1 => refine_interval(mesh),
        _ => refine_triangles(mesh),
    }
}

fn refine_interval(mesh: &Mesh) -> Result<Mesh> {
    let mut vertices = mesh.vertices().to_vec();
    let mut cells = Vec::with_capacity(4 * mesh.n_cells());
    for cell in mesh.cells() {
        let (a, b) = (cell[0], cell[1]);
        let m = vertices.len();
        let (pa, pb) = (mesh.vertex(a), mesh.vertex(b));
        vertices.push([0.5 * (pa[0] + pb[0]), 0.0]);
        cells.extend([a, m, m, b]);
    }
    Mesh::new(1, mesh.domain(), vertices, cells)
}

fn refine_triangles(mesh: &Mesh) -> Result<Mesh> {
    let boundary_edges: std::collections::HashSet<(usize, usize)> = mesh
        .boundary_facets()
        .into_iter()
        .map(|f| (f[0], f[1]))
        .collect();
    let mut vertices = mesh.vertices().to_vec();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoint.entry(key).or_insert_with(|| {
            let (pa, pb) = (vertices[a], vertices[b]);
            let mut p = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            if let Domain::Disk { radius } = mesh.domain() {
                if boundary_edges.contains(&key) {
                    let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                    p = [p[0] * radius / r, p[1] * radius / r];
                }
            }
            vertices.push(p);
            vertices.len() - 1
        })
    };
    let mut cells = Vec::with_capacity(12 * mesh.n_cells());
    for cell in mesh.cells() {
        let (a, b, c) = (cell[0], cell[1], cell[2]);
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        cells.extend([a, ab, ca, ab, b, bc, ca, bc, c, ab, bc, ca]);
    }
    Mesh::new(2, mesh.domain(), vertices, cells)
}
