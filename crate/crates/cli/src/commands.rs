//! One function per subcommand. Each writes its artifacts into the run
//! directory and returns the summary line printed on success.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use serde_json::json;
use subdiff::experiments::{
    check_positivity, compute_errors, run_sweep, stability_quotient, synthesize_data, verify_decay, RunReport, Truth,
};
use subdiff::fem::write_field_dump;
use subdiff::inverse::{gradient_check, random_directions, run_inversion, write_history_csv, InverseSpec};
use subdiff::problems::Problem;
use subdiff::timestep::solve_forward;
use subdiff::{Field, FemSpace};

use crate::config::CliConfig;
use crate::CliError;

/// Output directory of one run.
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(path: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(Self { path })
    }

    fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.file(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        self.write(name, &serde_json::to_string_pretty(value).expect("json values serialize"))
    }

    fn write_field(&self, name: &str, fem: &FemSpace, field: &Field, mesh: &str) -> Result<(), CliError> {
        Ok(write_field_dump(self.file(&format!("{name}.field")), fem, field, name, mesh)?)
    }
}

pub fn forward(config: &CliConfig, out: &RunDir) -> Result<String, CliError> {
    let problem = config.problem()?;
    let section = config.forward()?;
    let fem = section.space(&problem)?;
    let q = problem.coefficient_field(&fem);
    let data = problem.source_data(&fem)?;
    let traj = solve_forward(&fem, &q, &data, section.alpha, section.grid()?)?;
    let norm = fem.norm_l2(traj.terminal());
    out.write_field("terminal", &fem, traj.terminal(), &section.mesh_label(&problem))?;
    out.write_json(
        "summary.json",
        &json!({
            "problem": problem.name(),
            "alpha": section.alpha,
            "T": section.t_final,
            "steps": section.steps,
            "vertices": fem.mesh().n_vertices(),
            "cells": fem.mesh().n_cells(),
            "terminal_l2": norm,
        }),
    )?;
    Ok(format!("forward: ||U^N||_L2 = {norm:.6e}"))
}

/// Inverse problem on the `[forward]` grid with synthetic data from the
/// `[inverse]` reference grid.
fn inverse_spec(config: &CliConfig, problem: &Problem) -> Result<(InverseSpec, Field, f64), CliError> {
    let section = config.forward()?;
    let inv = config.inverse()?;
    let coarse = Arc::new(section.space(problem)?);
    let fine = Arc::new(FemSpace::new(problem.mesh(inv.fine_cells)?)?);
    if inv.fine_steps <= section.steps {
        return Err(CliError::Config(format!(
            "inverse.fine_steps ({}) must exceed forward.steps ({})",
            inv.fine_steps, section.steps
        )));
    }
    let exact = Truth::compute(problem, fine, section.alpha, section.t_final, inv.fine_steps)?.on(&coarse)?;
    let synth = synthesize_data(&coarse, &exact, inv.eps, inv.seed)?;
    let mut spec = InverseSpec::new(
        coarse.clone(),
        section.alpha,
        section.grid()?,
        problem.source_data(&coarse)?,
        synth.observation,
        inv.gamma,
    );
    spec.bounds = inv.bounds;
    spec.q_init = coarse.constant(inv.q_init);
    spec.conjugacy = inv.conjugacy;
    spec.stop = inv.stop;
    if inv.eps > 0.0 && spec.stop.delta.is_none() {
        spec.stop.delta = Some(synth.delta);
    }
    spec.validate()?;
    Ok((spec, synth.exact, synth.delta))
}

pub fn invert(config: &CliConfig, out: &RunDir) -> Result<String, CliError> {
    let problem = config.problem()?;
    let (spec, exact, delta) = inverse_spec(config, &problem)?;
    let fem = spec.fem.clone();
    let result = run_inversion(&spec)?;
    let q_true = problem.coefficient_field(&fem);
    let (e_q, e_u) = compute_errors(&fem, &result.q, &q_true, &result.terminal, &exact)?;
    let mesh = config.forward()?.mesh_label(&problem);
    write_history_csv(out.file("history.csv"), &result.history)?;
    out.write_field("q_star", &fem, &result.q, &mesh)?;
    out.write_field("q_error", &fem, &q_true.add_scaled(-1.0, &result.q), &mesh)?;
    out.write_json(
        "summary.json",
        &json!({
            "problem": problem.name(),
            "alpha": spec.alpha,
            "T": spec.grid.t_final(),
            "gamma": spec.gamma,
            "delta": delta,
            "e_q": e_q,
            "e_u": e_u,
            "iters": result.iterations(),
            "reason": result.reason,
            "converged": result.converged(),
        }),
    )?;
    Ok(format!(
        "invert: {:?} after {} iterations, e_q = {e_q:.4e}, e_u = {e_u:.4e}",
        result.reason,
        result.iterations()
    ))
}

pub fn gradcheck(config: &CliConfig, out: &RunDir) -> Result<String, CliError> {
    let problem = config.problem()?;
    let (spec, _, _) = inverse_spec(config, &problem)?;
    let check = config.gradcheck.clone().unwrap_or_default();
    let directions = random_directions(&spec.fem, check.directions, check.seed);
    let errors = gradient_check(&spec, &spec.q_init, &directions, check.step)?;
    let worst = errors.iter().copied().fold(0.0, f64::max);
    let mut csv = String::from("direction,relative_error\n");
    for (i, e) in errors.iter().enumerate() {
        let _ = writeln!(csv, "{i},{e:e}");
    }
    out.write("gradcheck.csv", &csv)?;
    let passed = worst <= check.tolerance;
    out.write_json(
        "summary.json",
        &json!({ "max_relative_error": worst, "tolerance": check.tolerance, "passed": passed }),
    )?;
    let line = format!(
        "gradcheck: max relative mismatch {worst:.3e} over {} directions (tolerance {:.1e})",
        errors.len(),
        check.tolerance
    );
    if passed {
        Ok(line)
    } else {
        Err(CliError::CheckFailed(line))
    }
}

/// `alpha,T,<ε_1>,…,<ε_m>,rate` for one metric.
fn table_csv(report: &RunReport, metric: fn(&subdiff::experiments::RunRecord) -> f64, rate_q: bool) -> String {
    let mut out = String::from("alpha,T");
    for eps in &report.config.noise_levels {
        let _ = write!(out, ",{eps:e}");
    }
    out.push_str(",rate\n");
    for rates in &report.rates {
        let _ = write!(out, "{},{}", rates.alpha, rates.t_final);
        for r in report.row(rates.alpha, rates.t_final) {
            let _ = write!(out, ",{:e}", metric(r));
        }
        let rate = if rate_q { rates.rate_q } else { rates.rate_u };
        match rate {
            Some(v) => {
                let _ = writeln!(out, ",{v:.4}");
            }
            None => out.push_str(",\n"),
        }
    }
    out
}

fn field_name(prefix: &str, alpha: f64, t: f64, eps: f64) -> String {
    format!("{prefix}_alpha{alpha}_T{t}_eps{eps:e}")
}

pub fn bench(config: &CliConfig, out: &RunDir) -> Result<String, CliError> {
    let experiment = config.experiment()?;
    let problem = experiment.problem.build()?;
    let report = run_sweep(&experiment)?;
    report.write(&out.path)?;
    out.write("table_e_q.csv", &table_csv(&report, |r| r.e_q, true))?;
    out.write("table_e_u.csv", &table_csv(&report, |r| r.e_u, false))?;
    for (i, &eps) in experiment.noise_levels.iter().enumerate() {
        let fem = experiment.coarse_space(i)?;
        let q_true = problem.coefficient_field(&fem);
        let mesh = format!("{}:{}", problem.name(), experiment.grid_size(i).0);
        for r in report.runs.iter().filter(|r| r.eps == eps) {
            if let Some(q) = &r.reconstruction {
                out.write_field(&field_name("q_star", r.alpha, r.t_final, eps), &fem, q, &mesh)?;
                let error = q_true.add_scaled(-1.0, q);
                out.write_field(&field_name("q_error", r.alpha, r.t_final, eps), &fem, &error, &mesh)?;
            }
        }
    }
    let failed = report.runs.iter().filter(|r| r.error.is_some()).count();
    let mut line = format!("bench: {} runs", report.runs.len());
    for rates in &report.rates {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}"));
        let _ = write!(
            line,
            "; alpha {} T {}: rate_q {} rate_u {}",
            rates.alpha,
            rates.t_final,
            fmt(rates.rate_q),
            fmt(rates.rate_u)
        );
    }
    if failed > 0 {
        let _ = write!(line, "; {failed} runs failed (see runs.csv)");
    }
    Ok(line)
}

pub fn verify(config: &CliConfig, out: &RunDir) -> Result<String, CliError> {
    let problem = config.problem()?;
    let setup = config.forward()?.setup()?;
    let section = config.verify.clone().unwrap_or_default();

    let decay = if section.window_start < setup.t_final {
        let table = verify_decay(&problem, &setup, section.window_start)?;
        let mut csv = String::from("t,weighted_seminorm\n");
        for (t, v) in &table.rows {
            let _ = writeln!(csv, "{t:e},{v:e}");
        }
        out.write("decay.csv", &csv)?;
        Some(table.ratio)
    } else {
        None
    };

    let positivity = check_positivity(&problem, &setup)?;
    out.write("positivity.csv", &positivity.to_csv())?;

    let rows = stability_quotient(
        &problem,
        &setup,
        &section.t_finals,
        section.perturbations,
        section.amplitude,
        section.seed,
    )?;
    let mut csv = String::from("T,perturbation,quotient\n");
    for row in &rows {
        for (i, q) in row.quotients.iter().enumerate() {
            let _ = writeln!(csv, "{:e},{i},{q:e}", row.t_final);
        }
    }
    out.write("stability.csv", &csv)?;

    let maxima: Vec<serde_json::Value> = rows.iter().map(|r| json!({ "T": r.t_final, "max": r.max })).collect();
    out.write_json(
        "summary.json",
        &json!({
            "decay_ratio": decay,
            "positivity_min": positivity.min,
            "stability_max": maxima,
        }),
    )?;
    let decay_text = decay.map_or("decay skipped (window after T)".to_string(), |r| format!("decay max/min {r:.3}"));
    let line = format!("verify: {decay_text}, positivity min {:.4e}", positivity.min);
    if positivity.min > 0.0 {
        Ok(line)
    } else {
        Err(CliError::CheckFailed(format!("{line}: positivity condition violated")))
    }
}
