//! Config file loading, `--set` overrides and validation.
//!
//! The file is TOML (or the JSON written back as `config.json`). Both are
//! read into one JSON tree so overrides and the echoed effective config use
//! the same representation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use subdiff::experiments::{ExperimentConfig, ForwardSetup, ProblemConfig};
use subdiff::inverse::{ConjugacyRule, StoppingRule, DEFAULT_BOUNDS};
use subdiff::mesh::load_mesh;
use subdiff::problems::Problem;
use subdiff::timestep::TimeGrid;
use subdiff::{FemSpace, Mesh};

use crate::CliError;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "SUBDIFF_OUT";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Directory name of this run below the output root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

/// One forward discretization: either `cells` of the builtin mesh family
/// (rings in 2D) or a mesh file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardSection {
    pub alpha: f64,
    pub t_final: f64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseSection {
    /// Relative noise level of the synthetic observation.
    pub eps: f64,
    pub gamma: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Reference grid for the synthetic data.
    pub fine_cells: usize,
    pub fine_steps: usize,
    #[serde(default = "default_bounds")]
    pub bounds: (f64, f64),
    /// Constant starting coefficient.
    #[serde(default = "default_q_init")]
    pub q_init: f64,
    #[serde(default)]
    pub conjugacy: ConjugacyRule,
    #[serde(default)]
    pub stop: StoppingRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSection {
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_fd_step")]
    pub step: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_fd_tolerance")]
    pub tolerance: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            directions: default_directions(),
            step: default_fd_step(),
            seed: default_seed(),
            tolerance: default_fd_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Start of the decay window.
    #[serde(default = "default_window")]
    pub window_start: f64,
    /// Final times of the stability probe.
    #[serde(default = "default_probe_times")]
    pub t_finals: Vec<f64>,
    #[serde(default = "default_perturbations")]
    pub perturbations: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            window_start: default_window(),
            t_finals: default_probe_times(),
            perturbations: default_perturbations(),
            amplitude: default_amplitude(),
            seed: default_seed(),
        }
    }
}

fn default_seed() -> u64 {
    2024
}
fn default_bounds() -> (f64, f64) {
    DEFAULT_BOUNDS
}
fn default_q_init() -> f64 {
    1.0
}
fn default_directions() -> usize {
    5
}
fn default_fd_step() -> f64 {
    1e-4
}
fn default_fd_tolerance() -> f64 {
    1e-5
}
fn default_window() -> f64 {
    1.0
}
fn default_probe_times() -> Vec<f64> {
    vec![1e-5, 5.0]
}
fn default_perturbations() -> usize {
    10
}
fn default_amplitude() -> f64 {
    0.1
}

/// The whole config file. Sections a subcommand does not use may be absent;
/// every section that is present is validated before anything runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<ForwardSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<InverseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradcheck: Option<GradcheckSection>,
    /// Sweep description; `preset` names a starting point that the other
    /// keys override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<Map<String, Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
}

/// Names accepted by `bench.preset`.
pub const BENCH_PRESETS: [&str; 3] = ["orders", "times", "two-d"];

fn preset(name: &str) -> Result<ExperimentConfig, CliError> {
    match name {
        "orders" => Ok(ExperimentConfig::one_d_orders()),
        "times" => Ok(ExperimentConfig::one_d_times()),
        "two-d" => Ok(ExperimentConfig::two_d()),
        other => Err(CliError::Config(format!(
            "unknown bench preset '{other}' (expected one of {})",
            BENCH_PRESETS.join(", ")
        ))),
    }
}

fn parse_text(text: &str, json: bool) -> Result<Value, CliError> {
    if json {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON config: {e}")))
    } else {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }
}

/// Reads a config file; `.json` files are parsed as JSON, everything else as
/// TOML.
pub fn read_tree(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_text(&text, path.extension().is_some_and(|e| e == "json"))
}

/// Applies `section.key=value` (any depth). The value is read as a TOML
/// value, falling back to a bare string.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{assignment}' is not of the form section.key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override '{assignment}' has an empty key")));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("key was just parsed"))
            .map_err(|e| CliError::Config(e.to_string()))?,
        Err(_) => Value::String(raw.trim().to_string()),
    };
    let mut node = tree;
    for key in &keys[..keys.len() - 1] {
        if !node.is_object() {
            return Err(CliError::Config(format!("override '{assignment}': '{key}' is not a section")));
        }
        node = node
            .as_object_mut()
            .expect("checked above")
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    match node.as_object_mut() {
        Some(map) => {
            map.insert(keys[keys.len() - 1].to_string(), value);
            Ok(())
        }
        None => Err(CliError::Config(format!("override '{assignment}' does not address a section"))),
    }
}

impl CliConfig {
    pub fn from_tree(tree: Value) -> Result<Self, CliError> {
        let config: Self = serde_json::from_value(tree).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads `path` (if any), applies overrides, parses and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut tree = match path {
            Some(p) => read_tree(p)?,
            None => Value::Object(Map::new()),
        };
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        Self::from_tree(tree)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.run.jobs == Some(0) {
            return Err(CliError::Config("run.jobs must be positive".into()));
        }
        if let Some(id) = &self.run.id {
            if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
                return Err(CliError::Config(format!("run.id '{id}' is not a plain directory name")));
            }
        }
        let problem = self.problem.as_ref().map(ProblemConfig::build).transpose()?;
        if let Some(f) = &self.forward {
            f.validate()?;
            if let Some(p) = &problem {
                f.space(p)?;
            }
        }
        if let Some(inv) = &self.inverse {
            inv.validate()?;
        }
        if let Some(g) = &self.gradcheck {
            if g.directions == 0 || !(g.step > 0.0 && g.step.is_finite()) || !(g.tolerance > 0.0) {
                return Err(CliError::Config(
                    "gradcheck needs directions > 0, a positive step and a positive tolerance".into(),
                ));
            }
        }
        if let Some(v) = &self.verify {
            if v.perturbations == 0 || v.t_finals.is_empty() {
                return Err(CliError::Config("verify needs perturbations > 0 and at least one probe time".into()));
            }
            for &t in &v.t_finals {
                TimeGrid::new(t, 1)?;
            }
        }
        if self.bench.is_some() {
            self.experiment()?;
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let section = self.problem.as_ref().ok_or_else(|| CliError::missing("problem"))?;
        Ok(section.build()?)
    }

    pub fn forward(&self) -> Result<&ForwardSection, CliError> {
        self.forward.as_ref().ok_or_else(|| CliError::missing("forward"))
    }

    pub fn inverse(&self) -> Result<&InverseSection, CliError> {
        self.inverse.as_ref().ok_or_else(|| CliError::missing("inverse"))
    }

    /// Resolved sweep: preset, then `[problem]` if given, then the other
    /// `[bench]` keys.
    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let mut section = self.bench.clone().ok_or_else(|| CliError::missing("bench"))?;
        let base = match section.remove("preset") {
            Some(Value::String(name)) => preset(&name)?,
            Some(other) => return Err(CliError::Config(format!("bench.preset must be a string, got {other}"))),
            None => ExperimentConfig::one_d_orders(),
        };
        let mut tree = serde_json::to_value(&base).map_err(|e| CliError::Config(e.to_string()))?;
        let map = tree.as_object_mut().expect("config serializes to an object");
        if let Some(p) = &self.problem {
            map.insert("problem".into(), serde_json::to_value(p).map_err(|e| CliError::Config(e.to_string()))?);
        }
        for (k, v) in section {
            match (map.get_mut(&k), v) {
                // nested tables such as `stop` merge key by key
                (Some(Value::Object(old)), Value::Object(new)) => old.extend(new),
                (_, v) => {
                    map.insert(k, v);
                }
            }
        }
        let config: ExperimentConfig =
            serde_json::from_value(tree).map_err(|e| CliError::Config(format!("bench: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Pretty JSON of the effective config, loadable with `--config`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable")
    }

    /// Output root: `run.out`, else `$SUBDIFF_OUT`, else `./out`.
    pub fn out_root(&self) -> PathBuf {
        self.run
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

impl ForwardSection {
    fn validate(&self) -> Result<(), CliError> {
        subdiff::CqWeights::new(self.alpha, 1)?;
        TimeGrid::new(self.t_final, self.steps)?;
        match (self.cells, &self.mesh) {
            (Some(0), _) => Err(CliError::Config("forward.cells must be positive".into())),
            (Some(_), Some(_)) => Err(CliError::Config("give either forward.cells or forward.mesh, not both".into())),
            (None, None) => Err(CliError::Config("forward needs 'cells' or 'mesh'".into())),
            _ => Ok(()),
        }
    }

    pub fn mesh(&self, problem: &Problem) -> Result<Mesh, CliError> {
        match (&self.mesh, self.cells) {
            (Some(path), _) => {
                let mesh = load_mesh(path).map_err(|e| CliError::Config(e.to_string()))?;
                if mesh.dim() != problem.dim() {
                    return Err(CliError::Config(format!(
                        "mesh {} is {}-dimensional but problem '{}' is {}-dimensional",
                        path.display(),
                        mesh.dim(),
                        problem.name(),
                        problem.dim()
                    )));
                }
                Ok(mesh)
            }
            (None, Some(cells)) => Ok(problem.mesh(cells)?),
            (None, None) => Err(CliError::Config("forward needs 'cells' or 'mesh'".into())),
        }
    }

    pub fn space(&self, problem: &Problem) -> Result<FemSpace, CliError> {
        Ok(FemSpace::new(self.mesh(problem)?)?)
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::new(self.t_final, self.steps)?)
    }

    /// Diagnostics run on builtin mesh families only.
    pub fn setup(&self) -> Result<ForwardSetup, CliError> {
        let cells = self
            .cells
            .ok_or_else(|| CliError::Config("verify needs forward.cells (mesh files are not supported there)".into()))?;
        Ok(ForwardSetup {
            alpha: self.alpha,
            t_final: self.t_final,
            cells,
            steps: self.steps,
        })
    }

    /// Human-readable mesh description for field dump headers.
    pub fn mesh_label(&self, problem: &Problem) -> String {
        match (&self.mesh, self.cells) {
            (Some(p), _) => p.display().to_string(),
            (None, Some(c)) => format!("{}:{c}", problem.name()),
            (None, None) => problem.name().to_string(),
        }
    }
}

impl InverseSection {
    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad(format!("inverse.eps must be nonnegative, got {}", self.eps));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("inverse.gamma must be nonnegative, got {}", self.gamma));
        }
        let (c0, c1) = self.bounds;
        if !(c0 > 0.0 && c0 < c1 && c1.is_finite()) {
            return bad(format!("inverse.bounds must satisfy 0 < c0 < c1, got ({c0}, {c1})"));
        }
        if !(c0..=c1).contains(&self.q_init) {
            return bad(format!("inverse.q_init {} lies outside the bounds", self.q_init));
        }
        if self.fine_cells == 0 || self.fine_steps == 0 {
            return bad("inverse.fine_cells and inverse.fine_steps must be positive".into());
        }
        if self.stop.max_iterations == 0 || !(self.stop.discrepancy_factor > 0.0) {
            return bad("inverse.stop needs max_iterations > 0 and a positive discrepancy_factor".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_parse_typed_values_and_create_sections() {
        let mut tree = json!({ "forward": { "alpha": 0.5 } });
        apply_override(&mut tree, "forward.alpha=0.25").unwrap();
        apply_override(&mut tree, "inverse.stop.max_iterations = 7").unwrap();
        apply_override(&mut tree, "bench.noise_levels=[1e-2, 1e-3]").unwrap();
        apply_override(&mut tree, "problem.name=1d-sine").unwrap();
        assert_eq!(tree["forward"]["alpha"], 0.25);
        assert_eq!(tree["inverse"]["stop"]["max_iterations"], 7);
        assert_eq!(tree["bench"]["noise_levels"], json!([1e-2, 1e-3]));
        assert_eq!(tree["problem"]["name"], "1d-sine");
    }

    #[test]
    fn malformed_overrides_are_rejected() {
        let mut tree = json!({ "forward": { "alpha": 0.5 } });
        assert!(apply_override(&mut tree, "forward.alpha").is_err());
        assert!(apply_override(&mut tree, "forward..alpha=1").is_err());
        assert!(apply_override(&mut tree, "forward.alpha.x=1").is_err());
    }

    #[test]
    fn output_root_prefers_config_then_environment() {
        let mut config = CliConfig::load(None, &["run.out=\"here\"".to_string()]).unwrap();
        assert_eq!(config.out_root(), PathBuf::from("here"));
        config.run.out = None;
        let expected = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from);
        assert_eq!(config.out_root(), expected);
    }
}
