//! Forward-solve diagnostics for the stability theory: smoothing decay of
//! the fractional derivative, the positivity weight, and the quotient
//! ‖q − q†‖ / |u(q)(T) − u(q†)(T)|_{H¹}^{1/2} under perturbations of q†.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{FemSpace, Space};
use crate::inverse::{project_admissible, DEFAULT_BOUNDS};
use crate::mesh::Point;
use crate::problems::Problem;
use crate::timestep::{discrete_frac_derivative, solve_forward, TimeGrid, Trajectory};

/// Discretization of a single forward solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardSetup {
    pub alpha: f64,
    pub t_final: f64,
    /// Cells in 1D, rings in 2D.
    pub cells: usize,
    pub steps: usize,
}

impl ForwardSetup {
    fn space(&self, problem: &Problem) -> Result<FemSpace> {
        FemSpace::new(problem.mesh(self.cells)?)
    }

    pub(crate) fn solve(&self, problem: &Problem, fem: &FemSpace) -> Result<Trajectory> {
        let q = problem.coefficient_field(fem);
        let data = problem.source_data(fem)?;
        solve_forward(fem, &q, &data, self.alpha, TimeGrid::new(self.t_final, self.steps)?)
    }
}

/// t_n^{α/2} |∂̄_τ^α Uⁿ|_{W^{1,∞}} sampled on a window of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    /// (t_n, weighted value)
    pub rows: Vec<(f64, f64)>,
    /// max/min of the weighted value over the window.
    pub ratio: f64,
}

/// Weighted W^{1,∞} seminorm of the discrete fractional derivative for the
/// steps with t_n ≥ `window_start`.
pub fn verify_decay(problem: &Problem, setup: &ForwardSetup, window_start: f64) -> Result<DecayTable> {
    if !(window_start >= 0.0 && window_start < setup.t_final) {
        return Err(Error::InvalidArgument(format!(
            "decay window must start in [0, T), got {window_start}"
        )));
    }
    let fem = setup.space(problem)?;
    let traj = setup.solve(problem, &fem)?;
    let grid = traj.grid();
    let rows: Vec<(f64, f64)> = discrete_frac_derivative(&traj)?
        .iter()
        .enumerate()
        .map(|(k, d)| (grid.t(k + 1), d))
        .filter(|(t, _)| *t >= window_start)
        .map(|(t, d)| (t, t.powf(0.5 * setup.alpha) * fem.seminorm_w1inf(d)))
        .collect();
    let max = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Ok(DecayTable { rows, ratio: max / min })
}

/// Cellwise positivity weight q|∇U^N|² + (f − ∂̄_τ^α U^N) U^N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Positivity {
    pub min: f64,
    pub barycenters: Vec<Point>,
    pub values: Vec<f64>,
}

impl Positivity {
    /// `x,y,value` per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,value\n");
        for (p, v) in self.barycenters.iter().zip(&self.values) {
            out.push_str(&format!("{:e},{:e},{:e}\n", p[0], p[1], v));
        }
        out
    }
}

/// Evaluates the positivity weight at the final time on every cell: the
/// gradient term with q at the barycenter, the second term as the mean of its
/// vertex values.
pub fn check_positivity(problem: &Problem, setup: &ForwardSetup) -> Result<Positivity> {
    let fem = setup.space(problem)?;
    let traj = setup.solve(problem, &fem)?;
    let dt = discrete_frac_derivative(&traj)?.pop().expect("at least one step");
    let u = fem.to_vertex_values(traj.terminal());
    let du = fem.to_vertex_values(&dt);
    let mesh = fem.mesh();
    let vertex_term: Vec<f64> = (0..mesh.n_vertices())
        .map(|v| ((problem.source())(mesh.vertex(v)) - du[v]) * u[v])
        .collect();
    let mut barycenters = Vec::with_capacity(mesh.n_cells());
    let mut values = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let b = mesh.barycenter(c);
        let g = fem.cell_gradient(c, &u);
        let cell = mesh.cell(c);
        let mean = cell.iter().map(|&v| vertex_term[v]).sum::<f64>() / cell.len() as f64;
        barycenters.push(b);
        values.push((problem.coefficient())(b) * (g[0] * g[0] + g[1] * g[1]) + mean);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Positivity {
        min,
        barycenters,
        values,
    })
}

/// Stability quotients of one final time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub quotients: Vec<f64>,
    pub max: f64,
}

/// Gaussian bump a·exp(−|x − c|²/(2w²)) with random sign, center and width.
fn random_bump(rng: &mut ChaCha8Rng, dim: usize, amplitude: f64) -> impl Fn(Point) -> f64 {
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let width: f64 = rng.gen_range(0.15..0.3);
    let center = if dim == 1 {
        [rng.gen_range(0.1..0.9), 0.0]
    } else {
        loop {
            let c = [rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)];
            if c[0] * c[0] + c[1] * c[1] <= 0.64 {
                break c;
            }
        }
    };
    move |p: Point| {
        let r2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
        sign * amplitude * (-r2 / (2.0 * width * width)).exp()
    }
}

/// For each final time, the quotient ‖q − q†‖_{L²} / |U^N(q) − U^N(q†)|_{H¹}^{1/2}
/// over `count` seeded perturbations q = P_A(q† + bump). The same
/// perturbations are used for every final time; `setup.t_final` is ignored.
pub fn stability_quotient(
    problem: &Problem,
    setup: &ForwardSetup,
    t_finals: &[f64],
    count: usize,
    amplitude: f64,
    seed: u64,
) -> Result<Vec<StabilityRow>> {
    if count == 0 || amplitude == 0.0 || !amplitude.is_finite() {
        return Err(Error::InvalidArgument(
            "need at least one perturbation of nonzero amplitude".into(),
        ));
    }
    let fem = setup.space(problem)?;
    let q_true = problem.coefficient_field(&fem);
    let data = problem.source_data(&fem)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c0, c1) = DEFAULT_BOUNDS;
    let perturbed = (0..count)
        .map(|_| {
            let bump = random_bump(&mut rng, problem.dim(), amplitude);
            let q = project_admissible(&q_true.add_scaled(1.0, &fem.interpolate(Space::Full, bump)), c0, c1);
            let gap = fem.norm_l2(&q.add_scaled(-1.0, &q_true));
            if gap == 0.0 {
                return Err(Error::InvalidArgument("perturbation vanishes on the mesh".into()));
            }
            Ok((q, gap))
        })
        .collect::<Result<Vec<_>>>()?;

    t_finals
        .iter()
        .map(|&t| {
            let grid = TimeGrid::new(t, setup.steps)?;
            let reference = solve_forward(&fem, &q_true, &data, setup.alpha, grid)?;
            let quotients = perturbed
                .iter()
                .map(|(q, gap)| {
                    let traj = solve_forward(&fem, q, &data, setup.alpha, grid)?;
                    let diff = traj.terminal().add_scaled(-1.0, reference.terminal());
                    Ok(gap / fem.seminorm_h1(&diff).sqrt())
                })
                .collect::<Result<Vec<f64>>>()?;
            let max = quotients.iter().copied().fold(0.0, f64::max);
            Ok(StabilityRow {
                t_final: t,
                quotients,
                max,
            })
        })
        .collect()
}
