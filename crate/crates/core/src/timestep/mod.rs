//! Backward Euler convolution quadrature in time.
//!
//! With τ = T/N and weights b_j of (1 − ζ)^α, the fully discrete problem is:
//! U⁰ = P_h u0 and, for n = 1..N,
//!
//! ```text
//!   (τ^{−α} M + K(q)) Uⁿ = F + τ^{−α} M (s_n U⁰ − Σ_{j=1}^{n} b_j U^{n−j}),
//! ```
//!
//! s_n = Σ_{j≤n} b_j. The system matrix is the same for every n, so one
//! factorization serves the forward, sensitivity and adjoint sweeps of a
//! given coefficient (see [`Stepper`]). The adjoint is the exact transpose of
//! the discrete linearized map, not a separate discretization.

mod weights;

use crate::error::{Error, Result};
use crate::fem::{Field, FemSpace, Space};
use crate::linalg::{axpy, SpdSolver};
use crate::mesh::Point;

pub use weights::{cq_weights, CqWeights, TimeGrid};

/// Initial state and source of a forward problem, both time independent.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceData {
    /// U⁰ = P_h u0, an X_h field.
    pub initial: Field,
    /// F_i = ∫ f φ_i over X_h.
    pub load: Vec<f64>,
}

impl SourceData {
    pub fn from_functions(
        fem: &FemSpace,
        u0: impl Fn(Point) -> f64,
        f: impl Fn(Point) -> f64,
    ) -> Result<Self> {
        Ok(Self {
            initial: fem.l2_project(u0)?,
            load: fem.load_vector(Space::Interior, f),
        })
    }

    pub fn zero(fem: &FemSpace) -> Self {
        Self {
            initial: fem.zeros(Space::Interior),
            load: vec![0.0; fem.n_dofs(Space::Interior)],
        }
    }

    /// Both parts multiplied by c.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            initial: self.initial.scaled(c),
            load: self.load.iter().map(|v| c * v).collect(),
        }
    }
}

/// States U⁰..U^N of one solve, all X_h fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    alpha: f64,
    grid: TimeGrid,
    states: Vec<Field>,
}

impl Trajectory {
    pub fn new(alpha: f64, grid: TimeGrid, states: Vec<Field>) -> Result<Self> {
        if states.len() != grid.n_steps() + 1 {
            return Err(Error::InvalidArgument(format!(
                "trajectory has {} states for {} steps",
                states.len(),
                grid.n_steps()
            )));
        }
        if states.iter().any(|s| s.space() != Space::Interior || s.len() != states[0].len()) {
            return Err(Error::InvalidArgument("trajectory states must share one X_h space".into()));
        }
        Ok(Self { alpha, grid, states })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn states(&self) -> &[Field] {
        &self.states
    }

    pub fn state(&self, n: usize) -> &Field {
        &self.states[n]
    }

    pub fn initial(&self) -> &Field {
        &self.states[0]
    }

    pub fn terminal(&self) -> &Field {
        self.states.last().expect("at least two states")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Result of the discrete adjoint sweep.
#[derive(Debug, Clone)]
pub struct Adjoint {
    /// P¹..P^N (index n − 1), X_h fields.
    pub states: Vec<Field>,
    /// Dual V_h vector g with g·d = (r, W^N(d))_{L²} for every direction d,
    /// r the terminal residual.
    pub misfit_gradient: Field,
}

/// Time stepper for one coefficient q: owns the factorized system matrix
/// τ^{−α} M + K(q).
#[derive(Debug)]
pub struct Stepper<'a> {
    fem: &'a FemSpace,
    q: Field,
    weights: CqWeights,
    grid: TimeGrid,
    /// τ^{−α}
    scale: f64,
    solver: SpdSolver,
}

impl<'a> Stepper<'a> {
    pub fn new(fem: &'a FemSpace, q: &Field, alpha: f64, grid: TimeGrid) -> Result<Self> {
        let weights = CqWeights::new(alpha, grid.n_steps())?;
        let scale = grid.tau().powf(-alpha);
        let stiffness = fem.assemble_stiffness(Space::Interior, q)?;
        let system = fem.mass(Space::Interior).linear_combination(scale, &stiffness, 1.0)?;
        Ok(Self {
            fem,
            q: q.clone(),
            weights,
            grid,
            scale,
            solver: SpdSolver::factorize(system)?,
        })
    }

    pub fn fem(&self) -> &FemSpace {
        self.fem
    }

    pub fn coefficient(&self) -> &Field {
        &self.q
    }

    pub fn alpha(&self) -> f64 {
        self.weights.alpha()
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn weights(&self) -> &CqWeights {
        &self.weights
    }

    /// Linear solves performed with this stepper's factorization so far.
    pub fn linear_solves(&self) -> usize {
        self.solver.solve_count()
    }

    fn n_dofs(&self) -> usize {
        self.fem.n_dofs(Space::Interior)
    }

    /// Σ_{j=1}^{n} b_j V^{n−j} over stored states (V⁰ first).
    fn convolve_history(&self, states: &[Vec<f64>], n: usize, out: &mut [f64]) {
        for j in 1..=n {
            let bj = self.weights.get(j);
            if bj != 0.0 {
                axpy(bj, &states[n - j], out);
            }
        }
    }

    pub fn forward(&self, data: &SourceData) -> Result<Trajectory> {
        self.fem.check(&data.initial)?;
        if data.initial.space() != Space::Interior || data.load.len() != self.n_dofs() {
            return Err(Error::InvalidArgument("source data must live on X_h of this mesh".into()));
        }
        let n_steps = self.grid.n_steps();
        let mass = self.fem.mass(Space::Interior);
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(n_steps + 1);
        states.push(data.initial.values().to_vec());
        let mut history = vec![0.0; self.n_dofs()];
        for n in 1..=n_steps {
            // s_n U⁰ − Σ b_j U^{n−j}
            history.fill(0.0);
            self.convolve_history(&states, n, &mut history);
            history.iter_mut().for_each(|h| *h = -*h);
            axpy(self.weights.partial_sum(n), &states[0], &mut history);
            let mut rhs = mass.mul_vec(&history);
            for (r, f) in rhs.iter_mut().zip(&data.load) {
                *r = f + self.scale * *r;
            }
            states.push(self.solver.solve(&rhs)?);
        }
        Trajectory::new(
            self.alpha(),
            self.grid,
            states.into_iter().map(|s| Field::new(Space::Interior, s)).collect(),
        )
    }

    fn check_forward(&self, forward: &Trajectory) -> Result<()> {
        if forward.grid() != self.grid || forward.alpha() != self.alpha() {
            return Err(Error::InvalidArgument(
                "trajectory was computed on a different time grid or order".into(),
            ));
        }
        if forward.initial().len() != self.n_dofs() {
            return Err(Error::InvalidArgument("trajectory lives on a different mesh".into()));
        }
        Ok(())
    }

    /// −K(d)·Uⁿ restricted to X_h.
    fn coefficient_load(&self, d_vertex: &[f64], u: &Field) -> Vec<f64> {
        let mut full = vec![0.0; self.fem.mesh().n_vertices()];
        self.fem.stiffness_apply(d_vertex, &self.fem.to_vertex_values(u), &mut full);
        self.fem
            .interior_vertices()
            .iter()
            .map(|&v| -full[v])
            .collect()
    }

    /// Directional derivative W = U'(q)[d] of the discrete forward map.
    pub fn sensitivity(&self, forward: &Trajectory, d: &Field) -> Result<Trajectory> {
        self.check_forward(forward)?;
        if d.space() != Space::Full {
            return Err(Error::InvalidArgument("direction must be a V_h field".into()));
        }
        self.fem.check(d)?;
        let n_steps = self.grid.n_steps();
        let mass = self.fem.mass(Space::Interior);
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(n_steps + 1);
        states.push(vec![0.0; self.n_dofs()]);
        let mut history = vec![0.0; self.n_dofs()];
        for n in 1..=n_steps {
            history.fill(0.0);
            self.convolve_history(&states, n, &mut history);
            let mut rhs = self.coefficient_load(d.values(), forward.state(n));
            axpy(-self.scale, &mass.mul_vec(&history), &mut rhs);
            states.push(self.solver.solve(&rhs)?);
        }
        Trajectory::new(
            self.alpha(),
            self.grid,
            states.into_iter().map(|s| Field::new(Space::Interior, s)).collect(),
        )
    }

    /// Transposed sweep for the functional d ↦ (r, W^N(d))_{L²}.
    ///
    /// Solves P^N = A⁻¹ M r and, backwards for m = N−1..1,
    /// P^m = −τ^{−α} A⁻¹ M Σ_{n>m} b_{n−m} Pⁿ; the gradient is
    /// g_i = −Σ_n ∫ ∇Pⁿ·∇Uⁿ φ_i.
    pub fn adjoint(&self, forward: &Trajectory, terminal_residual: &Field) -> Result<Adjoint> {
        self.check_forward(forward)?;
        if terminal_residual.space() != Space::Interior {
            return Err(Error::InvalidArgument("terminal residual must be an X_h field".into()));
        }
        self.fem.check(terminal_residual)?;
        let n_steps = self.grid.n_steps();
        let mass = self.fem.mass(Space::Interior);
        let n_vertices = self.fem.mesh().n_vertices();

        // adjoint[k] holds P^{N−k}
        let mut reversed: Vec<Vec<f64>> = Vec::with_capacity(n_steps);
        reversed.push(self.solver.solve(&mass.mul_vec(terminal_residual.values()))?);
        let mut history = vec![0.0; self.n_dofs()];
        for m in (1..n_steps).rev() {
            history.fill(0.0);
            for n in m + 1..=n_steps {
                let b = self.weights.get(n - m);
                if b != 0.0 {
                    axpy(b, &reversed[n_steps - n], &mut history);
                }
            }
            let mut rhs = mass.mul_vec(&history);
            rhs.iter_mut().for_each(|r| *r *= -self.scale);
            reversed.push(self.solver.solve(&rhs)?);
        }
        reversed.reverse();
        let states: Vec<Field> = reversed.into_iter().map(|p| Field::new(Space::Interior, p)).collect();

        let mut gradient = vec![0.0; n_vertices];
        for (k, p) in states.iter().enumerate() {
            let pairing = self.fem.gradient_pairing(
                &self.fem.to_vertex_values(p),
                &self.fem.to_vertex_values(forward.state(k + 1)),
            );
            axpy(-1.0, &pairing, &mut gradient);
        }
        Ok(Adjoint {
            states,
            misfit_gradient: Field::new(Space::Full, gradient),
        })
    }
}

/// Solves the fully discrete forward problem with coefficient q.
pub fn solve_forward(
    fem: &FemSpace,
    q: &Field,
    data: &SourceData,
    alpha: f64,
    grid: TimeGrid,
) -> Result<Trajectory> {
    Stepper::new(fem, q, alpha, grid)?.forward(data)
}

/// Linearized forward solve along direction d (W⁰ = 0).
pub fn solve_sensitivity(fem: &FemSpace, forward: &Trajectory, q: &Field, d: &Field) -> Result<Trajectory> {
    Stepper::new(fem, q, forward.alpha(), forward.grid())?.sensitivity(forward, d)
}

/// Discrete adjoint of the terminal misfit functional.
pub fn solve_adjoint(fem: &FemSpace, forward: &Trajectory, q: &Field, terminal_residual: &Field) -> Result<Adjoint> {
    Stepper::new(fem, q, forward.alpha(), forward.grid())?.adjoint(forward, terminal_residual)
}

/// ∂̄_τ^α Uⁿ = τ^{−α} Σ_{j=0}^{n} b_j (U^{n−j} − U⁰) for n = 1..N, by direct
/// convolution.
pub fn discrete_frac_derivative(traj: &Trajectory) -> Result<Vec<Field>> {
    let grid = traj.grid();
    let weights = CqWeights::new(traj.alpha(), grid.n_steps())?;
    let scale = grid.tau().powf(-traj.alpha());
    let u0 = traj.initial().values();
    Ok((1..=grid.n_steps())
        .map(|n| {
            let mut acc = vec![0.0; u0.len()];
            for j in 0..=n {
                let b = weights.get(j);
                for ((a, x), y) in acc.iter_mut().zip(traj.state(n - j).values()).zip(u0) {
                    *a += b * (x - y);
                }
            }
            acc.iter_mut().for_each(|a| *a *= scale);
            Field::new(Space::Interior, acc)
        })
        .collect())
}
