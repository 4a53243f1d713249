//! Continuous piecewise linear finite elements.
//!
//! Two discrete spaces live on a mesh: `V_h` ([`Space::Full`], one value per
//! vertex) for coefficients, and `X_h` ([`Space::Interior`], interior
//! vertices only, zero on and outside ∂Ω_h) for states. [`FemSpace`] owns the
//! per-cell geometry and caches the matrices and factorizations that every
//! solve reuses.

mod dump;
mod locate;
mod quadrature;

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dump::{read_field_dump, write_field_dump, FieldDump};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SpdSolver};
use crate::mesh::{Mesh, Point};
use locate::Locator;
use quadrature::gauss_rule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Space {
    /// V_h: all vertices.
    Full,
    /// X_h: interior vertices; boundary values are zero.
    Interior,
}

impl Space {
    pub fn label(self) -> &'static str {
        match self {
            Space::Full => "V_h",
            Space::Interior => "X_h",
        }
    }
}

/// Nodal values of a finite element function in one of the two spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    space: Space,
    values: Vec<f64>,
}

impl Field {
    pub fn new(space: Space, values: Vec<f64>) -> Self {
        Self { space, values }
    }

    pub fn zeros(space: Space, n: usize) -> Self {
        Self::new(space, vec![0.0; n])
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.space, self.values.iter().map(|v| c * v).collect())
    }

    /// self + c·other
    pub fn add_scaled(&self, c: f64, other: &Field) -> Self {
        assert_eq!(self.space, other.space, "space mismatch");
        assert_eq!(self.len(), other.len(), "length mismatch");
        Self::new(
            self.space,
            self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect(),
        )
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Gradients of the local basis functions on one cell (unused slots zero in 1D).
type CellGradients = [[f64; 2]; 3];

#[derive(Debug)]
pub struct FemSpace {
    mesh: Arc<Mesh>,
    interior: Vec<usize>,
    dof_of_vertex: Vec<Option<usize>>,
    measures: Vec<f64>,
    gradients: Vec<CellGradients>,
    mass_full: CsrMatrix,
    mass_interior: CsrMatrix,
    stiffness_unit_full: CsrMatrix,
    mass_full_solver: OnceLock<SpdSolver>,
    mass_interior_solver: OnceLock<SpdSolver>,
    riesz_solver: OnceLock<SpdSolver>,
    locator: OnceLock<Locator>,
}

impl FemSpace {
    pub fn new(mesh: impl Into<Arc<Mesh>>) -> Result<Self> {
        let mesh = mesh.into();
        let mut dof_of_vertex = vec![None; mesh.n_vertices()];
        let mut interior = Vec::new();
        for v in 0..mesh.n_vertices() {
            if !mesh.is_boundary(v) {
                dof_of_vertex[v] = Some(interior.len());
                interior.push(v);
            }
        }
        let measures: Vec<f64> = (0..mesh.n_cells()).map(|c| mesh.cell_measure(c)).collect();
        let gradients = (0..mesh.n_cells()).map(|c| basis_gradients(&mesh, c)).collect();
        let mut space = Self {
            mesh,
            interior,
            dof_of_vertex,
            measures,
            gradients,
            mass_full: CsrMatrix::identity(0),
            mass_interior: CsrMatrix::identity(0),
            stiffness_unit_full: CsrMatrix::identity(0),
            mass_full_solver: OnceLock::new(),
            mass_interior_solver: OnceLock::new(),
            riesz_solver: OnceLock::new(),
            locator: OnceLock::new(),
        };
        space.mass_full = space.assemble_mass(Space::Full);
        space.mass_interior = space.assemble_mass(Space::Interior);
        let ones = Field::new(Space::Full, vec![1.0; space.mesh.n_vertices()]);
        space.stiffness_unit_full = space.assemble_stiffness(Space::Full, &ones)?;
        Ok(space)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> Arc<Mesh> {
        Arc::clone(&self.mesh)
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn n_dofs(&self, space: Space) -> usize {
        match space {
            Space::Full => self.mesh.n_vertices(),
            Space::Interior => self.interior.len(),
        }
    }

    /// Vertex index of each X_h degree of freedom.
    pub fn interior_vertices(&self) -> &[usize] {
        &self.interior
    }

    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        self.dof_of_vertex[v]
    }

    pub fn cell_measures(&self) -> &[f64] {
        &self.measures
    }

    pub fn zeros(&self, space: Space) -> Field {
        Field::zeros(space, self.n_dofs(space))
    }

    pub fn constant(&self, value: f64) -> Field {
        Field::new(Space::Full, vec![value; self.mesh.n_vertices()])
    }

    pub(crate) fn check(&self, field: &Field) -> Result<()> {
        let expected = self.n_dofs(field.space);
        if field.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "{} field has {} values, the mesh has {expected} dofs",
                field.space.label(),
                field.len()
            )));
        }
        Ok(())
    }

    fn dofs_of_cell(&self, c: usize, space: Space) -> [Option<usize>; 3] {
        let mut out = [None; 3];
        for (k, &v) in self.mesh.cell(c).iter().enumerate() {
            out[k] = match space {
                Space::Full => Some(v),
                Space::Interior => self.dof_of_vertex[v],
            };
        }
        out
    }

    fn assemble_cells<F>(&self, space: Space, parallel: bool, local: F) -> CsrMatrix
    where
        F: Fn(usize, usize, usize) -> f64 + Sync,
    {
        let npc = self.dim() + 1;
        let cell_triplets = |c: usize| {
            let dofs = self.dofs_of_cell(c, space);
            let mut t = Vec::with_capacity(npc * npc);
            for a in 0..npc {
                let Some(i) = dofs[a] else { continue };
                for b in 0..npc {
                    let Some(j) = dofs[b] else { continue };
                    t.push((i, j, local(c, a, b)));
                }
            }
            t
        };
        let per_cell: Vec<Vec<(usize, usize, f64)>> = if parallel {
            (0..self.mesh.n_cells()).into_par_iter().map(cell_triplets).collect()
        } else {
            (0..self.mesh.n_cells()).map(cell_triplets).collect()
        };
        let triplets: Vec<_> = per_cell.into_iter().flatten().collect();
        let n = self.n_dofs(space);
        CsrMatrix::from_triplets(n, n, &triplets).expect("dof indices in range")
    }

    /// M_ij = ∫_{Ω_h} φ_i φ_j
    pub fn assemble_mass(&self, space: Space) -> CsrMatrix {
        let d = self.dim() as f64;
        self.assemble_cells(space, true, |c, a, b| {
            // exact: |T|·(1 + δ_ab) / ((d + 1)(d + 2))
            let factor = if a == b { 2.0 } else { 1.0 };
            self.measures[c] * factor / ((d + 1.0) * (d + 2.0))
        })
    }

    /// K(q)_ij = ∫_{Ω_h} q_h ∇φ_i·∇φ_j for a positive V_h coefficient.
    pub fn assemble_stiffness(&self, space: Space, q: &Field) -> Result<CsrMatrix> {
        self.assemble_stiffness_with(space, q, true)
    }

    /// [`FemSpace::assemble_stiffness`] with explicit control over parallel
    /// cell evaluation; both paths produce bitwise identical matrices.
    pub fn assemble_stiffness_with(&self, space: Space, q: &Field, parallel: bool) -> Result<CsrMatrix> {
        self.check_coefficient(q)?;
        let q = q.values();
        Ok(self.assemble_cells(space, parallel, |c, a, b| {
            let g = &self.gradients[c];
            self.cell_mean(c, q) * self.measures[c] * (g[a][0] * g[b][0] + g[a][1] * g[b][1])
        }))
    }

    pub(crate) fn check_coefficient(&self, q: &Field) -> Result<()> {
        if q.space() != Space::Full {
            return Err(Error::InvalidArgument("coefficient must be a V_h field".into()));
        }
        self.check(q)?;
        match q.values().iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            Some(i) => Err(Error::InvalidCoefficient(format!(
                "coefficient value {} at vertex {i} is not positive",
                q.values()[i]
            ))),
            None => Ok(()),
        }
    }

    /// Vertex-average of a nodal vector over cell `c`; exact cell mean of the
    /// piecewise linear interpolant.
    fn cell_mean(&self, c: usize, vertex_values: &[f64]) -> f64 {
        let cell = self.mesh.cell(c);
        cell.iter().map(|&v| vertex_values[v]).sum::<f64>() / cell.len() as f64
    }

    /// Cellwise constant gradient of a nodal vector given on all vertices.
    pub fn cell_gradient(&self, c: usize, vertex_values: &[f64]) -> [f64; 2] {
        let g = &self.gradients[c];
        let mut out = [0.0; 2];
        for (k, &v) in self.mesh.cell(c).iter().enumerate() {
            out[0] += vertex_values[v] * g[k][0];
            out[1] += vertex_values[v] * g[k][1];
        }
        out
    }

    pub fn mass(&self, space: Space) -> &CsrMatrix {
        match space {
            Space::Full => &self.mass_full,
            Space::Interior => &self.mass_interior,
        }
    }

    /// K_full(1), the V_h Laplacian with natural boundary conditions.
    pub fn stiffness_unit(&self) -> &CsrMatrix {
        &self.stiffness_unit_full
    }

    pub fn mass_solver(&self, space: Space) -> Result<&SpdSolver> {
        let cell = match space {
            Space::Full => &self.mass_full_solver,
            Space::Interior => &self.mass_interior_solver,
        };
        get_or_try_init(cell, || SpdSolver::factorize(self.mass(space).clone()))
    }

    /// Solver for M_full + K_full(1), the H¹ Riesz map on V_h.
    pub fn riesz_solver(&self) -> Result<&SpdSolver> {
        get_or_try_init(&self.riesz_solver, || {
            SpdSolver::factorize(self.mass_full.linear_combination(1.0, &self.stiffness_unit_full, 1.0)?)
        })
    }

    /// Nodal values on all vertices; X_h fields are extended by zero.
    pub fn to_vertex_values(&self, field: &Field) -> Vec<f64> {
        match field.space {
            Space::Full => field.values.clone(),
            Space::Interior => {
                let mut out = vec![0.0; self.mesh.n_vertices()];
                for (dof, &v) in self.interior.iter().enumerate() {
                    out[v] = field.values[dof];
                }
                out
            }
        }
    }

    /// Restricts vertex values to a space (drops boundary values for X_h).
    pub fn from_vertex_values(&self, space: Space, vertex_values: &[f64]) -> Field {
        match space {
            Space::Full => Field::new(space, vertex_values.to_vec()),
            Space::Interior => Field::new(space, self.interior.iter().map(|&v| vertex_values[v]).collect()),
        }
    }

    /// Lagrange interpolation Π_h.
    pub fn interpolate(&self, space: Space, f: impl Fn(Point) -> f64) -> Field {
        match space {
            Space::Full => Field::new(space, self.mesh.vertices().iter().map(|&p| f(p)).collect()),
            Space::Interior => Field::new(
                space,
                self.interior.iter().map(|&v| f(self.mesh.vertex(v))).collect(),
            ),
        }
    }

    /// b_i = ∫_{Ω_h} f φ_i by Gauss quadrature (2 points per interval,
    /// 3 per triangle).
    pub fn load_vector(&self, space: Space, f: impl Fn(Point) -> f64) -> Vec<f64> {
        let rule = gauss_rule(self.dim());
        let mut b = vec![0.0; self.n_dofs(space)];
        for c in 0..self.mesh.n_cells() {
            let cell = self.mesh.cell(c);
            let dofs = self.dofs_of_cell(c, space);
            for (lam, w) in rule {
                let mut x = [0.0; 2];
                for (k, &v) in cell.iter().enumerate() {
                    let p = self.mesh.vertex(v);
                    x[0] += lam[k] * p[0];
                    x[1] += lam[k] * p[1];
                }
                let fx = f(x) * w * self.measures[c];
                for k in 0..cell.len() {
                    if let Some(i) = dofs[k] {
                        b[i] += fx * lam[k];
                    }
                }
            }
        }
        b
    }

    /// L² projection P_h onto X_h of a pointwise function.
    pub fn l2_project(&self, f: impl Fn(Point) -> f64) -> Result<Field> {
        let b = self.load_vector(Space::Interior, f);
        Ok(Field::new(Space::Interior, self.mass_solver(Space::Interior)?.solve(&b)?))
    }

    /// L² projection P_h onto X_h of a finite element function.
    pub fn l2_project_field(&self, field: &Field) -> Result<Field> {
        self.check(field)?;
        let full = self.to_vertex_values(field);
        let b = self.mass_full.mul_vec(&full);
        let b: Vec<f64> = self.interior.iter().map(|&v| b[v]).collect();
        Ok(Field::new(Space::Interior, self.mass_solver(Space::Interior)?.solve(&b)?))
    }

    pub fn norm_l2(&self, v: &Field) -> f64 {
        let full = self.to_vertex_values(v);
        self.mass_full.quadratic_form(&full).max(0.0).sqrt()
    }

    /// (a, b)_{L²}
    pub fn inner_l2(&self, a: &Field, b: &Field) -> f64 {
        self.mass_full
            .bilinear_form(&self.to_vertex_values(a), &self.to_vertex_values(b))
    }

    pub fn seminorm_h1(&self, v: &Field) -> f64 {
        let full = self.to_vertex_values(v);
        self.stiffness_unit_full.quadratic_form(&full).max(0.0).sqrt()
    }

    /// (∇a, ∇b)_{L²}
    pub fn inner_h1_semi(&self, a: &Field, b: &Field) -> f64 {
        self.stiffness_unit_full
            .bilinear_form(&self.to_vertex_values(a), &self.to_vertex_values(b))
    }

    pub fn norm_linf(&self, v: &Field) -> f64 {
        v.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn seminorm_w1inf(&self, v: &Field) -> f64 {
        let full = self.to_vertex_values(v);
        (0..self.mesh.n_cells())
            .map(|c| {
                let g = self.cell_gradient(c, &full);
                (g[0] * g[0] + g[1] * g[1]).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Per-vertex load of the cellwise constant ∇a·∇b:
    /// r_i = Σ_{T∋i} ∫_T ∇a·∇b φ_i = Σ_{T∋i} |T|/(d+1) ∇a·∇b|_T.
    pub fn gradient_pairing(&self, a_vertex: &[f64], b_vertex: &[f64]) -> Vec<f64> {
        let npc = (self.dim() + 1) as f64;
        let mut out = vec![0.0; self.mesh.n_vertices()];
        for c in 0..self.mesh.n_cells() {
            let ga = self.cell_gradient(c, a_vertex);
            let gb = self.cell_gradient(c, b_vertex);
            let w = self.measures[c] / npc * (ga[0] * gb[0] + ga[1] * gb[1]);
            for &v in self.mesh.cell(c) {
                out[v] += w;
            }
        }
        out
    }

    /// Adds K(q)·u to `out` on all vertices, for any sign of q.
    pub(crate) fn stiffness_apply(&self, q_vertex: &[f64], u_vertex: &[f64], out: &mut [f64]) {
        for c in 0..self.mesh.n_cells() {
            let gu = self.cell_gradient(c, u_vertex);
            let scale = self.cell_mean(c, q_vertex) * self.measures[c];
            let g = &self.gradients[c];
            for (k, &v) in self.mesh.cell(c).iter().enumerate() {
                out[v] += scale * (g[k][0] * gu[0] + g[k][1] * gu[1]);
            }
        }
    }

    /// ∇a·∇b projected onto V_h in L².
    pub fn grad_dot(&self, a: &Field, b: &Field) -> Result<Field> {
        self.check(a)?;
        self.check(b)?;
        let load = self.gradient_pairing(&self.to_vertex_values(a), &self.to_vertex_values(b));
        Ok(Field::new(Space::Full, self.mass_solver(Space::Full)?.solve(&load)?))
    }

    /// Value of a finite element function at an arbitrary point. V_h fields
    /// are extended linearly from the nearest cell outside Ω_h, X_h fields
    /// vanish there.
    pub fn evaluate(&self, field: &Field, p: Point) -> f64 {
        let locator = self.locator.get_or_init(|| Locator::new(&self.mesh));
        let (c, lam) = locator.locate(&self.mesh, p);
        let inside = lam[..=self.dim()].iter().all(|&l| l >= -1e-10);
        if field.space == Space::Interior && !inside {
            return 0.0;
        }
        self.mesh
            .cell(c)
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let value = match field.space {
                    Space::Full => field.values[v],
                    Space::Interior => self.dof_of_vertex[v].map_or(0.0, |d| field.values[d]),
                };
                lam[k] * value
            })
            .sum()
    }

    /// Nodal interpolation of a field living on another mesh.
    pub fn transfer_from(&self, source: &FemSpace, field: &Field, space: Space) -> Result<Field> {
        source.check(field)?;
        Ok(self.interpolate(space, |p| source.evaluate(field, p)))
    }
}

fn basis_gradients(mesh: &Mesh, c: usize) -> CellGradients {
    let cell = mesh.cell(c);
    let p0 = mesh.vertex(cell[0]);
    let p1 = mesh.vertex(cell[1]);
    if mesh.dim() == 1 {
        let l = p1[0] - p0[0];
        return [[-1.0 / l, 0.0], [1.0 / l, 0.0], [0.0, 0.0]];
    }
    let p2 = mesh.vertex(cell[2]);
    let two_area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    [
        [(p1[1] - p2[1]) / two_area, (p2[0] - p1[0]) / two_area],
        [(p2[1] - p0[1]) / two_area, (p0[0] - p2[0]) / two_area],
        [(p0[1] - p1[1]) / two_area, (p1[0] - p0[0]) / two_area],
    ]
}

fn get_or_try_init<T>(cell: &OnceLock<T>, init: impl FnOnce() -> Result<T>) -> Result<&T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let value = init()?;
    Ok(cell.get_or_init(|| value))
}
