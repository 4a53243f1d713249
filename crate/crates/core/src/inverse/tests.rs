use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::problems::Problem;

/// 1d-sine problem on a coarse mesh with observation U^N(q†) computed on the
/// same mesh.
fn setup(cells: usize, n_steps: usize, gamma: f64) -> (InverseSpec, Field) {
    let problem = Problem::builtin("1d-sine").unwrap();
    let fem = Arc::new(FemSpace::new(problem.mesh(cells).unwrap()).unwrap());
    let data = problem.source_data(&fem).unwrap();
    let grid = TimeGrid::new(1.0, n_steps).unwrap();
    let q_true = problem.coefficient_field(&fem);
    let z = crate::timestep::solve_forward(&fem, &q_true, &data, 0.5, grid)
        .unwrap()
        .terminal()
        .clone();
    (InverseSpec::new(fem, 0.5, grid, data, z, gamma), q_true)
}

fn total_variation(v: &[f64]) -> f64 {
    v.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

#[test]
fn consistent_data_has_zero_objective() {
    let (spec, q_true) = setup(20, 10, 0.0);
    let e = objective(&spec, &q_true).unwrap();
    assert_eq!(e.j, 0.0);
}

#[test]
fn constant_coefficient_has_zero_penalty() {
    let (spec, _) = setup(20, 10, 1.0);
    let e = objective(&spec, &spec.fem.constant(1.7)).unwrap();
    assert!(e.penalty.abs() < 1e-13);
}

#[test]
fn penalty_is_linear_in_gamma() {
    let (mut spec, q_true) = setup(20, 10, 1e-3);
    let a = objective(&spec, &q_true).unwrap();
    spec.gamma *= 2.0;
    let b = objective(&spec, &q_true).unwrap();
    assert_eq!(b.penalty, 2.0 * a.penalty);
    assert_eq!(b.misfit, a.misfit);
}

#[test]
fn consistent_data_has_zero_gradient() {
    let (spec, q_true) = setup(20, 10, 0.0);
    let g = gradient(&spec, &q_true).unwrap();
    assert!(g.values().iter().all(|&v| v.abs() < 1e-14));
}

#[test]
fn constant_coefficient_has_no_regularization_gradient() {
    let (mut spec, _) = setup(20, 10, 0.0);
    let q = spec.fem.constant(1.0);
    let g0 = gradient(&spec, &q).unwrap();
    spec.gamma = 10.0;
    let g1 = gradient(&spec, &q).unwrap();
    for (a, b) in g0.values().iter().zip(g1.values()) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn gradient_matches_central_differences() {
    let (spec, _) = setup(40, 30, 1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = spec.fem.mesh().n_vertices();
    let dirs: Vec<Field> = (0..5)
        .map(|_| Field::new(Space::Full, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    let errs = gradient_check(&spec, &spec.fem.constant(1.0), &dirs, 1e-4).unwrap();
    assert!(errs.iter().all(|&e| e <= 1e-5), "{errs:?}");
}

#[test]
fn smoothing_zero_and_energy_identity() {
    let (spec, _) = setup(30, 10, 0.0);
    let fem = &*spec.fem;
    assert!(smooth_direction(fem, &fem.zeros(Space::Full)).unwrap().values().iter().all(|&v| v == 0.0));
    let raw = gradient(&spec, &fem.constant(1.0)).unwrap();
    let g = smooth_direction(fem, &raw).unwrap();
    let pairing = -dot(raw.values(), g.values());
    let energy = fem.mass(Space::Full).quadratic_form(g.values()) + fem.stiffness_unit().quadratic_form(g.values());
    assert!(pairing >= 0.0);
    assert!((pairing - energy).abs() <= 1e-10 * energy);
}

#[test]
fn smoothing_reduces_oscillation() {
    let (spec, _) = setup(113, 30, 4e-8);
    let fem = &*spec.fem;
    let raw = gradient(&spec, &fem.constant(1.0)).unwrap();
    let g = smooth_direction(fem, &raw).unwrap();
    let preconditioned = fem.mass_solver(Space::Full).unwrap().solve(raw.values()).unwrap();
    assert!(total_variation(g.values()) < total_variation(&preconditioned));
}

#[test]
fn cg_direction_conventions() {
    let (spec, _) = setup(10, 4, 0.0);
    let fem = &*spec.fem;
    let g = fem.interpolate(Space::Full, |p| p[0]);
    let d_prev = fem.interpolate(Space::Full, |p| 1.0 - p[0]);
    for rule in [ConjugacyRule::FletcherReeves, ConjugacyRule::PolakRibierePlus] {
        assert_eq!(cg_direction(fem, rule, &g, Some((&g, &d_prev)), 0), g);
        assert_eq!(cg_direction(fem, rule, &g, None, 3), g);
        let restart = cg_direction(fem, rule, &g, Some((&fem.zeros(Space::Full), &d_prev)), 2);
        assert_eq!(restart, g);
    }
    // repeated gradient: FR keeps β = 1, PR+ restarts since (g, g − g) = 0
    let fr = cg_direction(fem, ConjugacyRule::FletcherReeves, &g, Some((&g, &d_prev)), 2);
    assert_eq!(fr, d_prev.add_scaled(1.0, &g));
    assert_eq!(cg_direction(fem, ConjugacyRule::PolakRibierePlus, &g, Some((&g, &d_prev)), 2), g);
    // reversed gradient: PR+ gives β = (‖g‖² + ‖g‖²)/‖g‖² = 2, FR gives 1
    let reversed = cg_direction(fem, ConjugacyRule::PolakRibierePlus, &g, Some((&g.scaled(-1.0), &d_prev)), 2);
    let expected = d_prev.scaled(2.0).add_scaled(1.0, &g);
    for (a, b) in reversed.values().iter().zip(expected.values()) {
        assert!((a - b).abs() <= 1e-14, "{a} vs {b}");
    }
}

#[test]
fn step_is_zero_at_consistent_minimum() {
    let (spec, q_true) = setup(20, 10, 0.0);
    let fwd = crate::timestep::solve_forward(&spec.fem, &q_true, &spec.data, spec.alpha, spec.grid).unwrap();
    let d = spec.fem.interpolate(Space::Full, |p| p[0] * p[0]);
    assert_eq!(step_size(&spec, &q_true, &d, &fwd).unwrap(), 0.0);
}

#[test]
fn step_vanishes_for_huge_gamma_at_constant_q() {
    let (mut spec, _) = setup(20, 10, 0.0);
    let q = spec.fem.constant(1.0);
    let fwd = crate::timestep::solve_forward(&spec.fem, &q, &spec.data, spec.alpha, spec.grid).unwrap();
    let d = spec.fem.interpolate(Space::Full, |p| (3.0 * p[0]).sin());
    let s0 = step_size(&spec, &q, &d, &fwd).unwrap().abs();
    spec.gamma = 1e12;
    let s1 = step_size(&spec, &q, &d, &fwd).unwrap().abs();
    assert!(s1 < 1e-6 * s0, "{s0} {s1}");
}

#[test]
fn zero_direction_is_degenerate() {
    let (spec, _) = setup(10, 5, 0.0);
    let q = spec.fem.constant(1.0);
    let fwd = crate::timestep::solve_forward(&spec.fem, &q, &spec.data, spec.alpha, spec.grid).unwrap();
    let r = step_size(&spec, &q, &spec.fem.zeros(Space::Full), &fwd);
    assert!(matches!(r, Err(Error::DegenerateDirection)));
}

#[test]
fn first_step_decreases_objective() {
    let (spec, _) = setup(113, 30, 4e-8);
    let fem = &*spec.fem;
    let q = fem.constant(1.0);
    let before = objective(&spec, &q).unwrap();
    let g = smooth_direction(fem, &gradient(&spec, &q).unwrap()).unwrap();
    let s = step_size(&spec, &q, &g, &before.forward).unwrap();
    let after = objective(&spec, &project_admissible(&q.add_scaled(s, &g), 0.5, 5.0)).unwrap();
    assert!(s > 0.0);
    assert!(after.j < before.j, "{} -> {}", before.j, after.j);
}

#[test]
fn projection_clamps_and_is_idempotent() {
    let q = Field::new(Space::Full, vec![0.1, 1.0, 6.0, 5.0]);
    let p = project_admissible(&q, 0.5, 5.0);
    assert_eq!(p.values(), &[0.5, 1.0, 5.0, 5.0]);
    assert_eq!(project_admissible(&p, 0.5, 5.0), p);
    let inside = Field::new(Space::Full, vec![0.7, 4.9]);
    assert_eq!(project_admissible(&inside, 0.5, 5.0), inside);
}

#[test]
fn consistent_start_terminates_immediately() {
    let (mut spec, q_true) = setup(20, 10, 0.0);
    spec.q_init = q_true.clone();
    let inv = run_inversion(&spec).unwrap();
    assert_eq!(inv.iterations(), 0);
    assert_eq!(inv.q, q_true);
    assert!(inv.converged());
}

#[test]
fn iterates_feasible_and_objective_monotone() {
    let (mut spec, q_true) = setup(40, 10, 1e-7);
    spec.stop.max_iterations = 15;
    spec.bounds = (0.9, 1.2);
    let inv = run_inversion(&spec).unwrap();
    for w in inv.history.windows(2) {
        assert!(w[1].j <= w[0].j);
    }
    for s in &inv.history {
        assert!(s.q.values().iter().all(|&v| (0.9..=1.2).contains(&v)));
    }
    let e0 = spec.fem.norm_l2(&spec.q_init.add_scaled(-1.0, &q_true));
    let e1 = spec.fem.norm_l2(&inv.q.add_scaled(-1.0, &q_true));
    assert!(e1 < e0, "{e0} -> {e1}");
}

#[test]
fn discrepancy_rule_stops_early() {
    let (mut spec, _) = setup(40, 10, 0.0);
    let r0 = (2.0 * objective(&spec, &spec.q_init).unwrap().misfit).sqrt();
    spec.stop.delta = Some(r0 / 2.0);
    let inv = run_inversion(&spec).unwrap();
    assert_eq!(inv.reason, StopReason::Discrepancy);
    assert!(inv.history.last().unwrap().residual_norm <= 1.1 * r0 / 2.0);
    assert!(inv.iterations() >= 1);
}

#[test]
fn iteration_limit_reports_not_converged() {
    let (mut spec, _) = setup(20, 5, 0.0);
    spec.stop.max_iterations = 2;
    spec.stop.gradient_tolerance = 0.0;
    let inv = run_inversion(&spec).unwrap();
    assert!(!inv.converged());
    assert!(inv.iterations() <= 2);
}

#[test]
fn invalid_specs_rejected() {
    let (spec, _) = setup(10, 5, 0.0);
    let mut s = spec.clone();
    s.gamma = -1.0;
    assert!(run_inversion(&s).is_err());
    let mut s = spec.clone();
    s.bounds = (2.0, 1.0);
    assert!(run_inversion(&s).is_err());
    let mut s = spec.clone();
    s.q_init = s.fem.constant(7.0);
    assert!(matches!(run_inversion(&s), Err(Error::InvalidCoefficient(_))));
}

#[test]
fn misfit_scales_quadratically_with_data() {
    let (spec, _) = setup(30, 10, 0.0);
    let q = spec.fem.constant(1.0);
    let mut scaled = spec.clone();
    scaled.data = spec.data.scaled(3.0);
    scaled.observation = spec.observation.scaled(3.0);
    let a = objective(&spec, &q).unwrap().misfit;
    let b = objective(&scaled, &q).unwrap().misfit;
    assert!((b - 9.0 * a).abs() <= 1e-12 * b);
    let argmax = |s: &InverseSpec| {
        let g = smooth_direction(&s.fem, &gradient(s, &q).unwrap()).unwrap();
        let v = g.values();
        (0..v.len()).max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs())).unwrap()
    };
    assert_eq!(argmax(&spec), argmax(&scaled));
}

#[test]
fn history_csv_header() {
    let (mut spec, _) = setup(10, 4, 0.0);
    spec.stop.max_iterations = 1;
    let inv = run_inversion(&spec).unwrap();
    let text = history_csv(&inv.history).unwrap();
    assert!(text.starts_with("k,J,misfit,penalty,grad_norm,step\n"));
    assert_eq!(text.lines().count(), inv.history.len() + 1);
}
