//! Simplicial meshes of the interval and of the unit disk.
//!
//! A [`Mesh`] is immutable once built. Construction validates connectivity,
//! normalizes cell orientation and derives the boundary vertex flags and the
//! mesh size `h` (largest cell diameter).

mod generate;
mod io;
mod refine;

use std::collections::HashMap;

pub use generate::{generate_disk_mesh, generate_interval_mesh, ring_disk_mesh};
pub use io::{load_mesh, parse_mesh, save_mesh, write_mesh};
pub use refine::refine_uniform;

use crate::error::{Error, Result};

/// Vertex coordinates; 1D meshes leave the second component at zero.
pub type Point = [f64; 2];

/// Default bound on max/min cell diameter.
pub const DEFAULT_RHO_MAX: f64 = 4.0;

/// The continuous domain a mesh approximates. Refinement uses it to place new
/// boundary vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Interval { a: f64, b: f64 },
    /// Disk of the given radius centred at the origin.
    Disk { radius: f64 },
    /// Anything else; treated as the polygon Ω_h itself.
    Polygon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    domain: Domain,
    vertices: Vec<Point>,
    /// Flat connectivity, `dim + 1` vertices per cell.
    cells: Vec<usize>,
    boundary: Vec<bool>,
    h: f64,
}

impl Mesh {
    /// Validates and builds a mesh; boundary flags are derived from the
    /// connectivity.
    ///
    /// Cells must all share one orientation. If all are clockwise (or
    /// right-to-left in 1D) they are flipped; a cell whose orientation
    /// disagrees with the others is reported as inverted.
    pub fn new(dim: usize, domain: Domain, vertices: Vec<Point>, cells: Vec<usize>) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Validation(format!("unsupported dimension {dim}")));
        }
        let npc = dim + 1;
        if cells.is_empty() || cells.len() % npc != 0 {
            return Err(Error::Validation(format!(
                "connectivity length {} is not a positive multiple of {npc}",
                cells.len()
            )));
        }
        let nv = vertices.len();
        for (c, cell) in cells.chunks(npc).enumerate() {
            if let Some(&v) = cell.iter().find(|&&v| v >= nv) {
                return Err(Error::Validation(format!(
                    "cell {c} references vertex {v}, but there are only {nv} vertices"
                )));
            }
            for a in 0..npc {
                for b in a + 1..npc {
                    if cell[a] == cell[b] {
                        return Err(Error::Validation(format!("cell {c} repeats vertex {}", cell[a])));
                    }
                }
            }
        }
        if let Some(i) = vertices.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Validation(format!("vertex {i} has a non-finite coordinate")));
        }

        let mut mesh = Self {
            dim,
            domain,
            vertices,
            cells,
            boundary: Vec::new(),
            h: 0.0,
        };
        mesh.normalize_orientation()?;
        mesh.boundary = mesh.derive_boundary_flags()?;
        mesh.h = (0..mesh.n_cells()).map(|c| mesh.cell_diameter(c)).fold(0.0, f64::max);
        Ok(mesh)
    }

    /// Like [`Mesh::new`], but also checks supplied boundary flags against
    /// the connectivity.
    pub fn with_boundary_flags(
        dim: usize,
        domain: Domain,
        vertices: Vec<Point>,
        cells: Vec<usize>,
        flags: &[bool],
    ) -> Result<Self> {
        let mesh = Self::new(dim, domain, vertices, cells)?;
        if flags.len() != mesh.n_vertices() {
            return Err(Error::Validation(format!(
                "{} boundary flags for {} vertices",
                flags.len(),
                mesh.n_vertices()
            )));
        }
        if let Some(i) = (0..flags.len()).find(|&i| flags[i] != mesh.boundary[i]) {
            return Err(Error::Validation(format!(
                "boundary flag of vertex {i} is {} but the vertex is {}on the boundary",
                u8::from(flags[i]),
                if mesh.boundary[i] { "" } else { "not " }
            )));
        }
        Ok(mesh)
    }

    fn normalize_orientation(&mut self) -> Result<()> {
        let signed: Vec<f64> = (0..self.n_cells()).map(|c| self.signed_measure(c)).collect();
        if let Some(c) = signed.iter().position(|&s| s == 0.0 || !s.is_finite()) {
            return Err(Error::Validation(format!("cell {c} has zero measure")));
        }
        let positive = signed[0] > 0.0;
        if let Some(c) = signed.iter().position(|&s| (s > 0.0) != positive) {
            return Err(Error::Validation(format!(
                "cell {c} is inverted (signed measure {:.3e} against the mesh orientation)",
                signed[c]
            )));
        }
        if !positive {
            let npc = self.dim + 1;
            for cell in self.cells.chunks_mut(npc) {
                cell.swap(0, 1);
            }
        }
        Ok(())
    }

    fn derive_boundary_flags(&self) -> Result<Vec<bool>> {
        let mut boundary = vec![false; self.n_vertices()];
        let mut used = vec![false; self.n_vertices()];
        for facet in self.facet_counts()?.into_iter().filter(|(_, n)| *n == 1).map(|(f, _)| f) {
            for v in facet {
                boundary[v] = true;
            }
        }
        for &v in &self.cells {
            used[v] = true;
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::Validation(format!("vertex {i} belongs to no cell")));
        }
        Ok(boundary)
    }

    /// Sorted facet vertex lists with the number of cells sharing each.
    /// Fails if a facet is shared by more than two cells.
    fn facet_counts(&self) -> Result<Vec<(Vec<usize>, usize)>> {
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut order = Vec::new();
        for cell in self.cells() {
            for skip in 0..cell.len() {
                let mut facet: Vec<usize> = cell
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != skip)
                    .map(|(_, &v)| v)
                    .collect();
                facet.sort_unstable();
                let entry = counts.entry(facet.clone()).or_insert_with(|| {
                    order.push(facet);
                    0
                });
                *entry += 1;
            }
        }
        let out: Vec<_> = order
            .into_iter()
            .map(|f| {
                let n = counts[&f];
                (f, n)
            })
            .collect();
        if let Some((f, n)) = out.iter().find(|(_, n)| *n > 2) {
            return Err(Error::Validation(format!("facet {f:?} is shared by {n} cells")));
        }
        Ok(out)
    }

    /// Verifies that every facet is shared by one (boundary) or two
    /// (interior) cells.
    pub fn check_face_to_face(&self) -> Result<()> {
        self.facet_counts().map(|_| ())
    }

    /// Facets shared by exactly one cell, as sorted vertex lists.
    pub fn boundary_facets(&self) -> Vec<Vec<usize>> {
        self.facet_counts()
            .expect("validated at construction")
            .into_iter()
            .filter(|(_, n)| *n == 1)
            .map(|(f, _)| f)
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Point {
        self.vertices[i]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let npc = self.dim + 1;
        &self.cells[c * npc..(c + 1) * npc]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.cells.chunks(self.dim + 1)
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    /// Maximum cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn min_diameter(&self) -> f64 {
        (0..self.n_cells())
            .map(|c| self.cell_diameter(c))
            .fold(f64::INFINITY, f64::min)
    }

    /// max / min cell diameter.
    pub fn quasi_uniformity(&self) -> f64 {
        self.h / self.min_diameter()
    }

    pub fn check_quasi_uniform(&self, rho_max: f64) -> Result<()> {
        let rho = self.quasi_uniformity();
        if rho > rho_max {
            return Err(Error::Validation(format!(
                "quasi-uniformity ratio {rho:.3} exceeds {rho_max}"
            )));
        }
        Ok(())
    }

    fn signed_measure(&self, c: usize) -> f64 {
        let cell = self.cell(c);
        let p0 = self.vertices[cell[0]];
        let p1 = self.vertices[cell[1]];
        if self.dim == 1 {
            p1[0] - p0[0]
        } else {
            let p2 = self.vertices[cell[2]];
            0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
        }
    }

    /// Length (1D) or area (2D) of a cell; positive after construction.
    pub fn cell_measure(&self, c: usize) -> f64 {
        self.signed_measure(c)
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        let cell = self.cell(c);
        let mut d: f64 = 0.0;
        for a in 0..cell.len() {
            for b in a + 1..cell.len() {
                d = d.max(distance(self.vertices[cell[a]], self.vertices[cell[b]]));
            }
        }
        d
    }

    /// |Ω_h|
    pub fn total_measure(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_measure(c)).sum()
    }

    pub fn barycenter(&self, c: usize) -> Point {
        let cell = self.cell(c);
        let k = cell.len() as f64;
        let mut p = [0.0, 0.0];
        for &v in cell {
            p[0] += self.vertices[v][0] / k;
            p[1] += self.vertices[v][1] / k;
        }
        p
    }

    /// Largest distance from a point of ∂Ω to Ω_h; zero for polygonal
    /// domains, the sagitta of the longest boundary chord for the disk.
    pub fn boundary_gap(&self) -> f64 {
        match self.domain {
            Domain::Disk { radius } if self.dim == 2 => self
                .boundary_facets()
                .iter()
                .map(|e| {
                    let half = 0.5 * distance(self.vertices[e[0]], self.vertices[e[1]]);
                    radius - (radius * radius - half * half).max(0.0).sqrt()
                })
                .fold(0.0, f64::max),
            _ => 0.0,
        }
    }
}

pub(crate) fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clockwise_cells_are_flipped() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let m = Mesh::new(2, Domain::Polygon, v, vec![0, 2, 1]).unwrap();
        assert!(m.cell_measure(0) > 0.0);
        assert_eq!(m.cell(0), &[2, 0, 1]);
    }

    #[test]
    fn mixed_orientation_is_inverted_cell() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let r = Mesh::new(2, Domain::Polygon, v, vec![0, 1, 2, 1, 2, 3]);
        assert!(matches!(r, Err(Error::Validation(m)) if m.contains("inverted")));
    }

    #[test]
    fn zero_area_cell_is_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(Mesh::new(2, Domain::Polygon, v, vec![0, 1, 2]).is_err());
    }

    #[test]
    fn non_manifold_facet_is_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [0.6, 2.0]];
        // edge (0,1) shared by three triangles
        let r = Mesh::new(2, Domain::Polygon, v, vec![0, 1, 2, 1, 0, 3, 0, 1, 4]);
        assert!(r.is_err());
    }

    #[test]
    fn two_triangle_square_boundary() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let m = Mesh::new(2, Domain::Polygon, v, vec![0, 1, 2, 0, 2, 3]).unwrap();
        assert!(m.boundary_flags().iter().all(|&b| b));
        assert_eq!(m.boundary_facets().len(), 4);
        assert!((m.total_measure() - 1.0).abs() < 1e-15);
        assert!((m.h() - 2f64.sqrt()).abs() < 1e-15);
    }
}
