//! Coefficient reconstruction from a terminal observation.
//!
//! Minimizes the discrete Tikhonov functional
//!
//! ```text
//!   J(q) = ½ ‖U^N(q) − z‖²_{L²} + (γ/2) |q|²_{H¹}
//! ```
//!
//! over nodal coefficients with c0 ≤ q ≤ c1 by a projected nonlinear
//! conjugate gradient method. Each iteration computes the exact gradient of
//! the discrete functional with one adjoint sweep, smooths it with the H¹
//! Riesz map (M + K(1))⁻¹, builds a conjugate direction, and takes the
//! step minimizing J along the direction under the linearized forward map.
//! Steps that fail to decrease J are halved; if that does not help, the
//! method restarts from the smoothed gradient.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{Field, FemSpace, Space};
use crate::linalg::dot;
use crate::timestep::{SourceData, Stepper, TimeGrid, Trajectory};

/// When to stop iterating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoppingRule {
    /// Noise level δ of the observation, if known.
    pub delta: Option<f64>,
    /// Stop once ‖U^N − z‖ ≤ factor·δ.
    pub discrepancy_factor: f64,
    /// Stop once ‖g‖_{L²} ≤ tolerance.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// Step halvings tried before restarting along the smoothed gradient.
    pub max_backtracks: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            delta: None,
            discrepancy_factor: 1.1,
            gradient_tolerance: 1e-8,
            max_iterations: 200,
            max_backtracks: 20,
        }
    }
}

/// Coefficient β_k of the conjugate direction d_k = β_k d_{k−1} + g_k.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjugacyRule {
    /// β = ‖g_k‖²/‖g_{k−1}‖².
    FletcherReeves,
    /// β = max(0, (g_k, g_k − g_{k−1}))/‖g_{k−1}‖², restarting along g_k
    /// whenever consecutive gradients stop being nearly orthogonal. The plain
    /// Fletcher–Reeves ratio keeps a stale direction alive after projected
    /// steps and can stall far above the noise level.
    #[default]
    PolakRibierePlus,
}

/// Everything that defines one reconstruction.
#[derive(Debug, Clone)]
pub struct InverseSpec {
    pub fem: Arc<FemSpace>,
    pub alpha: f64,
    pub grid: TimeGrid,
    pub data: SourceData,
    /// Observation z on X_h.
    pub observation: Field,
    pub gamma: f64,
    pub bounds: (f64, f64),
    /// Starting coefficient on V_h.
    pub q_init: Field,
    pub stop: StoppingRule,
    pub conjugacy: ConjugacyRule,
}

/// Admissible bounds used unless overridden.
pub const DEFAULT_BOUNDS: (f64, f64) = (0.5, 5.0);

impl InverseSpec {
    /// Spec with bounds [0.5, 5], q_init ≡ 1, the default stopping rule and
    /// Polak–Ribière+ directions.
    pub fn new(
        fem: Arc<FemSpace>,
        alpha: f64,
        grid: TimeGrid,
        data: SourceData,
        observation: Field,
        gamma: f64,
    ) -> Self {
        let q_init = fem.constant(1.0);
        Self {
            fem,
            alpha,
            grid,
            data,
            observation,
            gamma,
            bounds: DEFAULT_BOUNDS,
            q_init,
            stop: StoppingRule::default(),
            conjugacy: ConjugacyRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::timestep::CqWeights::new(self.alpha, 1)?;
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "regularization weight must be finite and nonnegative, got {}",
                self.gamma
            )));
        }
        let (c0, c1) = self.bounds;
        if !(c0 > 0.0 && c0 < c1 && c1.is_finite()) {
            return Err(Error::InvalidArgument(format!("bounds must satisfy 0 < c0 < c1, got ({c0}, {c1})")));
        }
        self.fem.check(&self.observation)?;
        if self.observation.space() != Space::Interior {
            return Err(Error::InvalidArgument("observation must be an X_h field".into()));
        }
        self.fem.check(&self.q_init)?;
        if self.q_init.space() != Space::Full {
            return Err(Error::InvalidArgument("initial coefficient must be a V_h field".into()));
        }
        if self.q_init.values().iter().any(|&v| !(c0..=c1).contains(&v)) {
            return Err(Error::InvalidCoefficient(format!(
                "initial coefficient leaves [{c0}, {c1}]"
            )));
        }
        let s = &self.stop;
        if let Some(delta) = s.delta {
            if !(delta >= 0.0 && delta.is_finite()) {
                return Err(Error::InvalidArgument(format!("noise level must be nonnegative, got {delta}")));
            }
        }
        if !(s.discrepancy_factor > 0.0 && s.gradient_tolerance >= 0.0) {
            return Err(Error::InvalidArgument("stopping tolerances must be positive".into()));
        }
        Ok(())
    }

    fn stepper(&self, q: &Field) -> Result<Stepper<'_>> {
        Stepper::new(&self.fem, q, self.alpha, self.grid)
    }

    /// γ/2 |q|²_{H¹}.
    fn penalty(&self, q: &Field) -> f64 {
        0.5 * self.gamma * self.fem.stiffness_unit().quadratic_form(q.values())
    }
}

/// Objective value at a coefficient together with the forward solve.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub j: f64,
    pub misfit: f64,
    pub penalty: f64,
    pub forward: Trajectory,
    /// U^N − z.
    pub residual: Field,
}

fn evaluate_with(spec: &InverseSpec, stepper: &Stepper<'_>, q: &Field) -> Result<Evaluation> {
    let forward = stepper.forward(&spec.data)?;
    let residual = forward.terminal().add_scaled(-1.0, &spec.observation);
    let misfit = 0.5 * spec.fem.mass(Space::Interior).quadratic_form(residual.values());
    let penalty = spec.penalty(q);
    let j = misfit + penalty;
    if !j.is_finite() {
        return Err(Error::ConvergenceFailure {
            iterations: 0,
            residual: j,
        });
    }
    Ok(Evaluation {
        j,
        misfit,
        penalty,
        forward,
        residual,
    })
}

/// J(q) with its misfit and penalty parts.
pub fn objective(spec: &InverseSpec, q: &Field) -> Result<Evaluation> {
    evaluate_with(spec, &spec.stepper(q)?, q)
}

fn gradient_with(spec: &InverseSpec, stepper: &Stepper<'_>, q: &Field, eval: &Evaluation) -> Result<Field> {
    let adjoint = stepper.adjoint(&eval.forward, &eval.residual)?;
    let mut g = adjoint.misfit_gradient.into_values();
    if spec.gamma != 0.0 {
        let kq = spec.fem.stiffness_unit().mul_vec(q.values());
        crate::linalg::axpy(spec.gamma, &kq, &mut g);
    }
    Ok(Field::new(Space::Full, g))
}

/// J'(q) as a dual V_h vector: entry i is the derivative of J along the
/// i-th nodal basis function.
pub fn gradient(spec: &InverseSpec, q: &Field) -> Result<Field> {
    let stepper = spec.stepper(q)?;
    let eval = evaluate_with(spec, &stepper, q)?;
    gradient_with(spec, &stepper, q, &eval)
}

/// g = −(M + K(1))⁻¹ J', the H¹ Riesz representative of the negative gradient.
pub fn smooth_direction(fem: &FemSpace, raw_gradient: &Field) -> Result<Field> {
    fem.check(raw_gradient)?;
    if raw_gradient.space() != Space::Full {
        return Err(Error::InvalidArgument("gradient must be a V_h vector".into()));
    }
    let g = fem.riesz_solver()?.solve(raw_gradient.values())?;
    Ok(Field::new(Space::Full, g.into_iter().map(|v| -v).collect()))
}

/// d_k = β_k d_{k−1} + g_k with β_k from `rule` in L² inner products and
/// β_0 = 0. A vanishing previous gradient restarts the method.
pub fn cg_direction(
    fem: &FemSpace,
    rule: ConjugacyRule,
    g: &Field,
    previous: Option<(&Field, &Field)>,
    k: usize,
) -> Field {
    let Some((g_prev, d_prev)) = previous.filter(|_| k > 0) else {
        return g.clone();
    };
    let denom = fem.inner_l2(g_prev, g_prev);
    if denom == 0.0 {
        return g.clone();
    }
    let beta = match rule {
        ConjugacyRule::FletcherReeves => fem.inner_l2(g, g) / denom,
        ConjugacyRule::PolakRibierePlus => (fem.inner_l2(g, g) - fem.inner_l2(g, g_prev)).max(0.0) / denom,
    };
    d_prev.scaled(beta).add_scaled(1.0, g)
}

fn step_size_with(spec: &InverseSpec, stepper: &Stepper<'_>, q: &Field, d: &Field, eval: &Evaluation) -> Result<f64> {
    let w = stepper.sensitivity(&eval.forward, d)?;
    let mass = spec.fem.mass(Space::Interior);
    let k1 = spec.fem.stiffness_unit();
    let wn = w.terminal().values();
    let num = mass.bilinear_form(eval.residual.values(), wn) + spec.gamma * k1.bilinear_form(q.values(), d.values());
    let den = mass.quadratic_form(wn) + spec.gamma * k1.quadratic_form(d.values());
    let s = -num / den;
    if den <= 0.0 || !s.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    Ok(s)
}

/// Minimizer along d of the quadratic model of J obtained by linearizing
/// the forward map at q.
pub fn step_size(spec: &InverseSpec, q: &Field, d: &Field, forward: &Trajectory) -> Result<f64> {
    let stepper = spec.stepper(q)?;
    let residual = forward.terminal().add_scaled(-1.0, &spec.observation);
    let eval = Evaluation {
        j: f64::NAN,
        misfit: f64::NAN,
        penalty: f64::NAN,
        forward: forward.clone(),
        residual,
    };
    step_size_with(spec, &stepper, q, d, &eval)
}

/// Nodal clamp to [c0, c1].
pub fn project_admissible(q: &Field, c0: f64, c1: f64) -> Field {
    Field::new(q.space(), q.values().iter().map(|v| v.clamp(c0, c1)).collect())
}

/// One row of the iteration history.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub k: usize,
    pub q: Field,
    pub j: f64,
    pub misfit: f64,
    pub penalty: f64,
    /// ‖U^N − z‖_{L²}
    pub residual_norm: f64,
    /// Smoothed gradient g at this iterate.
    pub g: Field,
    pub grad_norm: f64,
    /// Direction taken from this iterate; `None` for the last one.
    pub d: Option<Field>,
    /// Step that produced this iterate (0 for the start).
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Discrepancy,
    SmallGradient,
    MaxIterations,
    /// Neither the CG step nor the restarted gradient step reduced J.
    Stagnation,
}

impl StopReason {
    pub fn converged(self) -> bool {
        matches!(self, Self::Discrepancy | Self::SmallGradient)
    }
}

#[derive(Debug, Clone)]
pub struct Inversion {
    /// Final (projected) iterate; J never increases, so it is also the best.
    pub q: Field,
    /// Terminal state U^N(q).
    pub terminal: Field,
    pub history: Vec<IterateState>,
    pub reason: StopReason,
}

impl Inversion {
    pub fn converged(&self) -> bool {
        self.reason.converged()
    }

    /// Accepted steps taken.
    pub fn iterations(&self) -> usize {
        self.history.len() - 1
    }
}

struct Accepted<'a> {
    q: Field,
    stepper: Stepper<'a>,
    eval: Evaluation,
    step: f64,
}

/// Projected line search along d from q, halving the model step until J
/// decreases.
fn line_search<'a>(
    spec: &'a InverseSpec,
    stepper: &Stepper<'_>,
    q: &Field,
    d: &Field,
    eval: &Evaluation,
) -> Result<Option<Accepted<'a>>> {
    let mut s = match step_size_with(spec, stepper, q, d, eval) {
        Ok(s) => s,
        Err(Error::DegenerateDirection) => return Ok(None),
        Err(e) => return Err(e),
    };
    let (c0, c1) = spec.bounds;
    for _ in 0..=spec.stop.max_backtracks {
        let q_new = project_admissible(&q.add_scaled(s, d), c0, c1);
        let stepper_new = spec.stepper(&q_new)?;
        let eval_new = evaluate_with(spec, &stepper_new, &q_new)?;
        if eval_new.j <= eval.j {
            return Ok(Some(Accepted {
                q: q_new,
                stepper: stepper_new,
                eval: eval_new,
                step: s,
            }));
        }
        s *= 0.5;
    }
    Ok(None)
}

/// Runs the projected conjugate gradient method until the stopping rule
/// fires. Hitting the iteration limit or stagnating is not an error; the
/// returned [`Inversion`] records why it stopped.
pub fn run_inversion(spec: &InverseSpec) -> Result<Inversion> {
    spec.validate()?;
    let fem = &*spec.fem;
    let stop = spec.stop;
    let mut q = spec.q_init.clone();
    let mut stepper = spec.stepper(&q)?;
    let mut eval = evaluate_with(spec, &stepper, &q)?;
    let mut step = 0.0;
    let mut history: Vec<IterateState> = Vec::new();
    let mut previous: Option<(Field, Field)> = None;

    let reason = loop {
        let k = history.len();
        let raw = gradient_with(spec, &stepper, &q, &eval)?;
        let g = smooth_direction(fem, &raw)?;
        let grad_norm = fem.norm_l2(&g);
        let residual_norm = (2.0 * eval.misfit).sqrt();
        history.push(IterateState {
            k,
            q: q.clone(),
            j: eval.j,
            misfit: eval.misfit,
            penalty: eval.penalty,
            residual_norm,
            g: g.clone(),
            grad_norm,
            d: None,
            step,
        });

        if stop.delta.is_some_and(|delta| residual_norm <= stop.discrepancy_factor * delta) {
            break StopReason::Discrepancy;
        }
        if grad_norm <= stop.gradient_tolerance {
            break StopReason::SmallGradient;
        }
        if k >= stop.max_iterations {
            break StopReason::MaxIterations;
        }

        let d = cg_direction(fem, spec.conjugacy, &g, previous.as_ref().map(|(g, d)| (g, d)), k);
        let mut taken = d.clone();
        let mut accepted = line_search(spec, &stepper, &q, &d, &eval)?;
        if accepted.is_none() && previous.is_some() {
            taken = g.clone();
            accepted = line_search(spec, &stepper, &q, &g, &eval)?;
        }
        let Some(next) = accepted else {
            break StopReason::Stagnation;
        };
        history.last_mut().expect("pushed above").d = Some(taken.clone());
        previous = Some((g, taken));
        q = next.q;
        stepper = next.stepper;
        eval = next.eval;
        step = next.step;
    };

    Ok(Inversion {
        q,
        terminal: eval.forward.terminal().clone(),
        history,
        reason,
    })
}

#[derive(Serialize)]
struct HistoryRow {
    k: usize,
    #[serde(rename = "J")]
    j: f64,
    misfit: f64,
    penalty: f64,
    grad_norm: f64,
    step: f64,
}

/// History as CSV with header `k,J,misfit,penalty,grad_norm,step`.
pub fn history_csv(history: &[IterateState]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in history {
        w.serialize(HistoryRow {
            k: s.k,
            j: s.j,
            misfit: s.misfit,
            penalty: s.penalty,
            grad_norm: s.grad_norm,
            step: s.step,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_history_csv(path: impl AsRef<Path>, history: &[IterateState]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, history_csv(history)?).map_err(|e| Error::io(path, e))
}

/// `count` V_h directions with nodal values uniform in [−1, 1], drawn from
/// `seed`.
pub fn random_directions(fem: &FemSpace, count: usize, seed: u64) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = fem.n_dofs(Space::Full);
    (0..count)
        .map(|_| Field::new(Space::Full, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect()
}

/// Relative mismatch between the adjoint directional derivative and the
/// central difference (J(q + εd) − J(q − εd))/(2ε), one entry per direction.
pub fn gradient_check(spec: &InverseSpec, q: &Field, directions: &[Field], eps: f64) -> Result<Vec<f64>> {
    let g = gradient(spec, q)?;
    directions
        .iter()
        .map(|d| {
            let adjoint = dot(g.values(), d.values());
            let plus = objective(spec, &q.add_scaled(eps, d))?.j;
            let minus = objective(spec, &q.add_scaled(-eps, d))?.j;
            let fd = (plus - minus) / (2.0 * eps);
            Ok((adjoint - fd).abs() / adjoint.abs().max(fd.abs()).max(f64::MIN_POSITIVE))
        })
        .collect()
}

#[cfg(test)]
mod tests;
