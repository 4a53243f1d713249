//! Reconstruction experiments: reference data on a fine grid, noisy
//! observations, error metrics, convergence rates and parameter sweeps.
//!
//! A sweep runs one reconstruction per (α, T, ε). For each (α, T) the
//! reference terminal state is computed once on the fine grid with the true
//! coefficient and interpolated to the coarse mesh; observations add nodal
//! Gaussian noise of relative size ε. Runs are independent and execute on the
//! rayon pool; results are reported in input order.

mod diagnostics;

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{Field, FemSpace, Space};
use crate::inverse::{run_inversion, ConjugacyRule, InverseSpec, StoppingRule, DEFAULT_BOUNDS};
use crate::problems::Problem;
use crate::timestep::{solve_forward, TimeGrid};

pub use diagnostics::{
    check_positivity, stability_quotient, verify_decay, DecayTable, ForwardSetup, Positivity, StabilityRow,
};

/// Which problem to solve: a builtin name or `custom` with expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    /// Dimension of a custom problem (1 or 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
}

impl ProblemConfig {
    pub fn builtin(name: &str) -> Self {
        Self {
            name: name.to_string(),
            dim: None,
            q: None,
            u0: None,
            f: None,
        }
    }

    pub fn build(&self) -> Result<Problem> {
        if self.name != "custom" {
            if self.dim.is_some() || self.q.is_some() || self.u0.is_some() || self.f.is_some() {
                return Err(Error::InvalidArgument(format!(
                    "expressions are only allowed with name = \"custom\", not '{}'",
                    self.name
                )));
            }
            return Problem::builtin(&self.name);
        }
        let need = |v: &Option<String>, key: &str| {
            v.clone()
                .ok_or_else(|| Error::InvalidArgument(format!("custom problem needs '{key}'")))
        };
        let dim = self
            .dim
            .ok_or_else(|| Error::InvalidArgument("custom problem needs 'dim'".into()))?;
        Problem::from_expressions(dim, &need(&self.q, "q")?, &need(&self.u0, "u0")?, &need(&self.f, "f")?)
    }
}

/// Regularization weight per noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaRule {
    /// γ = c·ε²
    Scaled(f64),
    /// One γ per entry of the noise list.
    Explicit(Vec<f64>),
}

impl GammaRule {
    pub fn gamma(&self, index: usize, eps: f64) -> f64 {
        match self {
            Self::Scaled(c) => c * eps * eps,
            Self::Explicit(list) => list[index],
        }
    }
}

/// How the inversion grid depends on the noise level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    /// `coarse_cells` and `coarse_steps` for every ε.
    Fixed,
    /// The largest ε uses `coarse_cells` and `coarse_steps`; smaller ε refine
    /// so that h² and τ shrink like ε (cells ∝ ε^{-1/2}, steps ∝ ε^{-1},
    /// rounded up).
    #[default]
    Noise,
}

/// Full description of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub alphas: Vec<f64>,
    pub t_finals: Vec<f64>,
    pub noise_levels: Vec<f64>,
    pub gamma: GammaRule,
    /// Inversion mesh: cells in 1D, rings in 2D.
    pub coarse_cells: usize,
    pub coarse_steps: usize,
    /// Reference mesh for the synthetic data, same convention.
    pub fine_cells: usize,
    pub fine_steps: usize,
    #[serde(default)]
    pub refinement: Refinement,
    pub seed: u64,
    #[serde(default = "default_bounds")]
    pub bounds: (f64, f64),
    /// `delta` is filled in per run from the measured noise.
    #[serde(default)]
    pub stop: StoppingRule,
    #[serde(default)]
    pub conjugacy: ConjugacyRule,
}

fn default_bounds() -> (f64, f64) {
    DEFAULT_BOUNDS
}

impl ExperimentConfig {
    /// 1d-sine, T = 1, three orders, four noise levels, γ = 4e-4·ε².
    pub fn one_d_orders() -> Self {
        Self {
            problem: ProblemConfig::builtin("1d-sine"),
            alphas: vec![0.25, 0.5, 0.75],
            t_finals: vec![1.0],
            noise_levels: vec![1e-2, 5e-3, 2.5e-3, 1e-3],
            gamma: GammaRule::Scaled(4e-4),
            coarse_cells: 113,
            coarse_steps: 30,
            fine_cells: 1600,
            fine_steps: 1280,
            refinement: Refinement::Noise,
            seed: 2024,
            bounds: DEFAULT_BOUNDS,
            stop: StoppingRule::default(),
            conjugacy: ConjugacyRule::default(),
        }
    }

    /// 1d-sine, α = 0.5, T ∈ {1e-5, 3, 5}, γ = 4e-2·ε².
    pub fn one_d_times() -> Self {
        Self {
            alphas: vec![0.5],
            t_finals: vec![1e-5, 3.0, 5.0],
            gamma: GammaRule::Scaled(4e-2),
            ..Self::one_d_orders()
        }
    }

    /// 2d-disk, T = 2, 216-cell coarse mesh, N = 10.
    pub fn two_d() -> Self {
        Self {
            problem: ProblemConfig::builtin("2d-disk"),
            alphas: vec![0.25, 0.5, 0.75],
            t_finals: vec![2.0],
            noise_levels: vec![1e-2, 5.19e-3, 2.14e-3, 8.75e-4],
            gamma: GammaRule::Explicit(vec![1e-6, 2.69e-7, 4.51e-8, 7.65e-9]),
            coarse_cells: 6,
            coarse_steps: 10,
            fine_cells: 24,
            fine_steps: 320,
            refinement: Refinement::Noise,
            seed: 2024,
            bounds: DEFAULT_BOUNDS,
            stop: StoppingRule::default(),
            conjugacy: ConjugacyRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        self.problem.build()?;
        if self.alphas.is_empty() || self.t_finals.is_empty() || self.noise_levels.is_empty() {
            return bad("alphas, t_finals and noise_levels must be nonempty".into());
        }
        for &a in &self.alphas {
            crate::timestep::CqWeights::new(a, 1)?;
        }
        if let Some(e) = self.noise_levels.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return bad(format!("noise levels must be nonnegative, got {e}"));
        }
        if self.refinement == Refinement::Noise && self.noise_levels.iter().any(|&e| e == 0.0) {
            return bad("noise-driven refinement needs positive noise levels".into());
        }
        for &t in &self.t_finals {
            TimeGrid::new(t, self.coarse_steps)?;
        }
        match &self.gamma {
            GammaRule::Scaled(c) if !(*c >= 0.0 && c.is_finite()) => {
                return bad(format!("gamma scale must be nonnegative, got {c}"))
            }
            GammaRule::Explicit(list) => {
                if list.len() != self.noise_levels.len() {
                    return bad(format!(
                        "{} gamma values for {} noise levels",
                        list.len(),
                        self.noise_levels.len()
                    ));
                }
                if let Some(g) = list.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
                    return bad(format!("gamma must be nonnegative, got {g}"));
                }
            }
            _ => {}
        }
        if self.coarse_cells == 0 || self.coarse_steps == 0 {
            return bad("coarse mesh and step counts must be positive".into());
        }
        let (cells, steps) = (0..self.noise_levels.len())
            .map(|i| self.grid_size(i))
            .fold((0, 0), |(c, s), (ci, si)| (c.max(ci), s.max(si)));
        if self.fine_cells <= cells || self.fine_steps <= steps {
            return bad(format!(
                "the reference grid ({} cells, {} steps) must be finer than every inversion grid (up to {cells} cells, {steps} steps)",
                self.fine_cells, self.fine_steps
            ));
        }
        let (c0, c1) = self.bounds;
        if !(c0 > 0.0 && c0 < 1.0 && 1.0 < c1 && c1.is_finite()) {
            return bad(format!("bounds must satisfy 0 < c0 < 1 < c1, got ({c0}, {c1})"));
        }
        Ok(())
    }

    /// (cells or rings, time steps) of the inversion grid for noise level `index`.
    pub fn grid_size(&self, index: usize) -> (usize, usize) {
        match self.refinement {
            Refinement::Fixed => (self.coarse_cells, self.coarse_steps),
            Refinement::Noise => {
                let largest = self.noise_levels.iter().copied().fold(0.0, f64::max);
                let ratio = largest / self.noise_levels[index];
                // round before ceil so exact ratios are not bumped by rounding noise
                let scale = |n: usize, r: f64| ((n as f64 * r * 1e9).round() / 1e9).ceil() as usize;
                (scale(self.coarse_cells, ratio.sqrt()), scale(self.coarse_steps, ratio))
            }
        }
    }

    /// Inversion space for noise level `index`.
    pub fn coarse_space(&self, index: usize) -> Result<FemSpace> {
        FemSpace::new(self.problem.build()?.mesh(self.grid_size(index).0)?)
    }
}

/// Reference solution for one (α, T) on the fine grid.
#[derive(Debug, Clone)]
pub struct Truth {
    pub fine: Arc<FemSpace>,
    /// u(q†)(T) on the fine mesh.
    pub terminal: Field,
}

impl Truth {
    pub fn compute(problem: &Problem, fine: Arc<FemSpace>, alpha: f64, t_final: f64, steps: usize) -> Result<Self> {
        let q = problem.coefficient_field(&fine);
        let data = problem.source_data(&fine)?;
        let traj = solve_forward(&fine, &q, &data, alpha, TimeGrid::new(t_final, steps)?)?;
        Ok(Self {
            terminal: traj.terminal().clone(),
            fine,
        })
    }

    /// Terminal state interpolated to the nodes of `coarse`.
    pub fn on(&self, coarse: &FemSpace) -> Result<Field> {
        coarse.transfer_from(&self.fine, &self.terminal, Space::Interior)
    }
}

/// Observation with its noise statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub observation: Field,
    /// ‖z − u(T)‖_{L²}, the measured noise level.
    pub delta: f64,
    /// u(T) interpolated to the coarse mesh.
    pub exact: Field,
}

/// Standard normal samples, one per coarse interior node.
pub fn noise_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// z = u(T) + ε‖u(T)‖_∞ ξ with ξ drawn from `seed`.
///
/// The draw depends only on the seed and the node count, so runs that differ
/// only in ε see the same noise direction.
pub fn synthesize_data(coarse: &FemSpace, exact: &Field, eps: f64, seed: u64) -> Result<SyntheticData> {
    coarse.check(exact)?;
    if exact.space() != Space::Interior {
        return Err(Error::InvalidArgument("reference state must be an X_h field".into()));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise level must be nonnegative, got {eps}")));
    }
    let amplitude = eps * coarse.norm_linf(exact);
    let xi = noise_vector(exact.len(), seed);
    let noise = Field::new(Space::Interior, xi.into_iter().map(|x| amplitude * x).collect());
    Ok(SyntheticData {
        observation: exact.add_scaled(1.0, &noise),
        delta: coarse.norm_l2(&noise),
        exact: exact.clone(),
    })
}

/// (e_q, e_u) = (‖q† − q*‖, ‖u(T) − U^N(q*)‖) in L² on the coarse mesh.
pub fn compute_errors(fem: &FemSpace, q_star: &Field, q_true: &Field, u_n: &Field, u_ref: &Field) -> Result<(f64, f64)> {
    for (a, b, what) in [(q_star, q_true, "coefficients"), (u_n, u_ref, "states")] {
        fem.check(a)?;
        fem.check(b)?;
        if a.space() != b.space() {
            return Err(Error::InvalidArgument(format!("{what} live in different spaces")));
        }
    }
    Ok((
        fem.norm_l2(&q_star.add_scaled(-1.0, q_true)),
        fem.norm_l2(&u_n.add_scaled(-1.0, u_ref)),
    ))
}

/// Least-squares slope of log e against log x.
pub fn compute_rate(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument("a rate needs at least two points".into()));
    }
    if let Some(p) = pairs.iter().find(|(x, e)| !(*x > 0.0 && *e > 0.0 && x.is_finite() && e.is_finite())) {
        return Err(Error::InvalidArgument(format!("rate inputs must be positive, got {p:?}")));
    }
    // Sort so the sums are accumulated in a fixed order.
    let mut logs: Vec<(f64, f64)> = pairs.iter().map(|(x, e)| (x.ln(), e.ln())).collect();
    logs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("rate inputs need at least two distinct abscissae".into()));
    }
    Ok(sxy / sxx)
}

/// Outcome of one reconstruction in a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub alpha: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub eps: f64,
    pub gamma: f64,
    /// Inversion grid: cells (rings in 2D) and time steps.
    pub cells: usize,
    pub steps: usize,
    pub delta: f64,
    pub e_q: f64,
    pub e_u: f64,
    pub iters: usize,
    pub converged: bool,
    pub seconds: f64,
    /// Failure message; the numeric fields are NaN when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub reconstruction: Option<Field>,
}

/// Fitted rates of one (α, T) row against nominal ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRates {
    pub alpha: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub rate_q: Option<f64>,
    pub rate_u: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub rates: Vec<RowRates>,
}

#[derive(Serialize)]
struct CsvRow {
    alpha: f64,
    #[serde(rename = "T")]
    t_final: f64,
    eps: f64,
    gamma: f64,
    delta: f64,
    e_q: f64,
    e_u: f64,
    iters: usize,
    converged: bool,
    seconds: f64,
}

impl RunReport {
    /// Runs of row (α, T) in ε order.
    pub fn row(&self, alpha: f64, t_final: f64) -> Vec<&RunRecord> {
        self.runs.iter().filter(|r| r.alpha == alpha && r.t_final == t_final).collect()
    }

    /// `alpha,T,eps,gamma,delta,e_q,e_u,iters,converged,seconds`; grid sizes
    /// are in the JSON report.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.runs {
            w.serialize(CsvRow {
                alpha: r.alpha,
                t_final: r.t_final,
                eps: r.eps,
                gamma: r.gamma,
                delta: r.delta,
                e_q: r.e_q,
                e_u: r.e_u,
                iters: r.iters,
                converged: r.converged,
                seconds: r.seconds,
            })?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `runs.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("runs.csv");
        std::fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join("report.json");
        std::fs::write(&json_path, self.to_json()?).map_err(|e| Error::io(&json_path, e))
    }
}

struct RunInput<'a> {
    alpha: f64,
    t_final: f64,
    eps: f64,
    gamma: f64,
    steps: usize,
    coarse: &'a Arc<FemSpace>,
    truth: &'a Result<Truth>,
}

fn failed_record(input: &RunInput<'_>, err: &Error, seconds: f64) -> RunRecord {
    RunRecord {
        alpha: input.alpha,
        t_final: input.t_final,
        eps: input.eps,
        gamma: input.gamma,
        cells: input.coarse.mesh().n_cells(),
        steps: input.steps,
        delta: f64::NAN,
        e_q: f64::NAN,
        e_u: f64::NAN,
        iters: 0,
        converged: false,
        seconds,
        error: Some(err.to_string()),
        reconstruction: None,
    }
}

fn run_one(config: &ExperimentConfig, problem: &Problem, input: &RunInput<'_>) -> RunRecord {
    let start = Instant::now();
    let coarse = input.coarse;
    let result = (|| -> Result<RunRecord> {
        let exact = input
            .truth
            .as_ref()
            .map_err(|e| Error::Validation(format!("reference solve failed: {e}")))?
            .on(coarse)?;
        let synth = synthesize_data(coarse, &exact, input.eps, config.seed)?;
        let grid = TimeGrid::new(input.t_final, input.steps)?;
        let mut spec = InverseSpec::new(
            coarse.clone(),
            input.alpha,
            grid,
            problem.source_data(coarse)?,
            synth.observation.clone(),
            input.gamma,
        );
        spec.bounds = config.bounds;
        spec.conjugacy = config.conjugacy;
        spec.stop = StoppingRule {
            delta: Some(synth.delta),
            ..config.stop
        };
        let inv = run_inversion(&spec)?;
        let q_true = problem.coefficient_field(coarse);
        let (e_q, e_u) = compute_errors(coarse, &inv.q, &q_true, &inv.terminal, &synth.exact)?;
        Ok(RunRecord {
            alpha: input.alpha,
            t_final: input.t_final,
            eps: input.eps,
            gamma: input.gamma,
            cells: coarse.mesh().n_cells(),
            steps: input.steps,
            delta: synth.delta,
            e_q,
            e_u,
            iters: inv.iterations(),
            converged: inv.converged(),
            seconds: 0.0,
            error: None,
            reconstruction: Some(inv.q),
        })
    })();
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(mut r) => {
            r.seconds = seconds;
            r
        }
        Err(e) => failed_record(input, &e, seconds),
    }
}

/// Runs every (α, T, ε) of the configuration. Failures of single runs are
/// recorded in their [`RunRecord`]; only configuration errors abort.
pub fn run_sweep(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let problem = config.problem.build()?;
    let coarse: Vec<Arc<FemSpace>> = (0..config.noise_levels.len())
        .map(|i| config.coarse_space(i).map(Arc::new))
        .collect::<Result<_>>()?;
    let fine = Arc::new(FemSpace::new(problem.mesh(config.fine_cells)?)?);

    let rows: Vec<(f64, f64)> = config
        .alphas
        .iter()
        .flat_map(|&a| config.t_finals.iter().map(move |&t| (a, t)))
        .collect();
    let truths: Vec<Result<Truth>> = rows
        .par_iter()
        .map(|&(alpha, t)| Truth::compute(&problem, fine.clone(), alpha, t, config.fine_steps))
        .collect();

    let coarse = &coarse;
    let inputs: Vec<RunInput<'_>> = rows
        .iter()
        .zip(&truths)
        .flat_map(|(&(alpha, t_final), truth)| {
            config.noise_levels.iter().enumerate().map(move |(i, &eps)| RunInput {
                alpha,
                t_final,
                eps,
                gamma: config.gamma.gamma(i, eps),
                steps: config.grid_size(i).1,
                coarse: &coarse[i],
                truth,
            })
        })
        .collect();
    let runs: Vec<RunRecord> = inputs.par_iter().map(|input| run_one(config, &problem, input)).collect();

    let rates = rows
        .iter()
        .map(|&(alpha, t_final)| {
            let row: Vec<&RunRecord> = runs.iter().filter(|r| r.alpha == alpha && r.t_final == t_final).collect();
            let fit = |metric: fn(&RunRecord) -> f64| {
                let pairs: Vec<(f64, f64)> = row.iter().map(|r| (r.eps, metric(r))).collect();
                compute_rate(&pairs).ok()
            };
            RowRates {
                alpha,
                t_final,
                rate_q: fit(|r| r.e_q),
                rate_u: fit(|r| r.e_u),
            }
        })
        .collect();

    Ok(RunReport {
        config: config.clone(),
        runs,
        rates,
    })
}
