//! Problem data: coefficient, initial value and source as functions of x.
//!
//! Two problems are built in:
//!
//! * `1d-sine` on (0, 1): q† = clamp(1 + ¼ sin(πx), 67/64, 319/256),
//!   u0 = x(1 − x), f = 1.
//! * `2d-disk` on the unit disk: q† = clamp(1 + ¼ cos(π/2 (x² + y²)),
//!   71/64, 319/256), u0 = 1 − x² − y², f = 1.
//!
//! Custom problems are given as expressions in `x`, `y` and `pi`, evaluated
//! with [`evalexpr`]. Integer literals are read as reals, so `1/4` is 0.25.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use evalexpr::{Context, EvalexprError, EvalexprResult, Node, Value};

use crate::error::{Error, Result};
use crate::fem::{Field, FemSpace, Space};
use crate::mesh::{generate_interval_mesh, ring_disk_mesh, Domain, Mesh, Point};
use crate::timestep::SourceData;

/// A thread-safe scalar function of a point.
pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Names accepted by [`Problem::builtin`].
pub const BUILTIN_PROBLEMS: [&str; 2] = ["1d-sine", "2d-disk"];

#[derive(Clone)]
pub struct Problem {
    name: String,
    dim: usize,
    coefficient: ScalarFn,
    initial: ScalarFn,
    source: ScalarFn,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.min(hi).max(lo)
}

impl Problem {
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "1d-sine" => Ok(Self::from_fns(
                name,
                1,
                Arc::new(|p: Point| clamp(1.0 + 0.25 * (PI * p[0]).sin(), 67.0 / 64.0, 319.0 / 256.0)),
                Arc::new(|p: Point| p[0] * (1.0 - p[0])),
                Arc::new(|_| 1.0),
            )),
            "2d-disk" => Ok(Self::from_fns(
                name,
                2,
                Arc::new(|p: Point| {
                    let r2 = p[0] * p[0] + p[1] * p[1];
                    clamp(1.0 + 0.25 * (0.5 * PI * r2).cos(), 71.0 / 64.0, 319.0 / 256.0)
                }),
                Arc::new(|p: Point| 1.0 - p[0] * p[0] - p[1] * p[1]),
                Arc::new(|_| 1.0),
            )),
            _ => Err(Error::InvalidArgument(format!(
                "unknown problem '{name}' (builtin problems: {})",
                BUILTIN_PROBLEMS.join(", ")
            ))),
        }
    }

    pub fn from_fns(name: &str, dim: usize, coefficient: ScalarFn, initial: ScalarFn, source: ScalarFn) -> Self {
        Self {
            name: name.to_string(),
            dim,
            coefficient,
            initial,
            source,
        }
    }

    /// Problem on the unit interval (dim 1) or unit disk (dim 2) given by
    /// expressions for q†, u0 and f.
    pub fn from_expressions(dim: usize, coefficient: &str, initial: &str, source: &str) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidArgument(format!("dimension must be 1 or 2, got {dim}")));
        }
        Ok(Self::from_fns(
            "custom",
            dim,
            expression_fn(coefficient)?,
            expression_fn(initial)?,
            expression_fn(source)?,
        ))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> Domain {
        if self.dim == 1 {
            Domain::Interval { a: 0.0, b: 1.0 }
        } else {
            Domain::Disk { radius: 1.0 }
        }
    }

    /// Mesh at resolution `n`: `n` equal cells in 1D, `n` rings (6n² triangles)
    /// in 2D.
    pub fn mesh(&self, n: usize) -> Result<Mesh> {
        if self.dim == 1 {
            generate_interval_mesh(n)
        } else {
            ring_disk_mesh(n)
        }
    }

    pub fn coefficient(&self) -> &ScalarFn {
        &self.coefficient
    }

    pub fn initial(&self) -> &ScalarFn {
        &self.initial
    }

    pub fn source(&self) -> &ScalarFn {
        &self.source
    }

    /// Nodal interpolant of q† in V_h.
    pub fn coefficient_field(&self, fem: &FemSpace) -> Field {
        fem.interpolate(Space::Full, |p| (self.coefficient)(p))
    }

    pub fn source_data(&self, fem: &FemSpace) -> Result<SourceData> {
        self.check_dim(fem)?;
        SourceData::from_functions(fem, |p| (self.initial)(p), |p| (self.source)(p))
    }

    pub(crate) fn check_dim(&self, fem: &FemSpace) -> Result<()> {
        if fem.dim() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "problem '{}' is {}-dimensional but the mesh is {}-dimensional",
                self.name,
                self.dim,
                fem.dim()
            )));
        }
        Ok(())
    }
}

/// Appends ".0" to integer literals so that evalexpr does real arithmetic.
fn realify(expr: &str) -> String {
    let chars: Vec<char> = expr.chars().collect();
    let mut out = String::with_capacity(expr.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let after_word = i > 0 && (chars[i - 1].is_alphanumeric() || chars[i - 1] == '_' || chars[i - 1] == '.');
        if !c.is_ascii_digit() || after_word {
            out.push(c);
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        let mut real = false;
        if i < chars.len() && chars[i] == '.' {
            real = true;
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
            let mut j = i + 1;
            if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                j += 1;
            }
            if j < chars.len() && chars[j].is_ascii_digit() {
                real = true;
                i = j;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
        }
        out.extend(&chars[start..i]);
        if !real {
            out.push_str(".0");
        }
    }
    out
}

struct PointContext {
    x: Value,
    y: Value,
    pi: Value,
}

impl Context for PointContext {
    fn get_value(&self, identifier: &str) -> Option<&Value> {
        match identifier {
            "x" => Some(&self.x),
            "y" => Some(&self.y),
            "pi" => Some(&self.pi),
            _ => None,
        }
    }

    fn call_function(&self, identifier: &str, argument: &Value) -> EvalexprResult<Value> {
        let f: fn(f64) -> f64 = match identifier {
            "sin" => f64::sin,
            "cos" => f64::cos,
            "tan" => f64::tan,
            "exp" => f64::exp,
            "ln" => f64::ln,
            "sqrt" => f64::sqrt,
            "abs" => f64::abs,
            "tanh" => f64::tanh,
            _ => return Err(EvalexprError::FunctionIdentifierNotFound(identifier.to_string())),
        };
        Ok(Value::Float(f(argument.as_number()?)))
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(&mut self, _disabled: bool) -> EvalexprResult<()> {
        Err(EvalexprError::ContextNotMutable)
    }
}

fn evaluate(node: &Node, p: Point) -> EvalexprResult<f64> {
    let ctx = PointContext {
        x: Value::Float(p[0]),
        y: Value::Float(p[1]),
        pi: Value::Float(PI),
    };
    node.eval_number_with_context(&ctx)
}

/// Compiles an expression in `x`, `y`, `pi` into a [`ScalarFn`].
///
/// The expression is test-evaluated once; errors found then are reported
/// here. A later evaluation failure (for instance a domain error of a custom
/// function) yields NaN, which downstream validation rejects.
pub fn expression_fn(expr: &str) -> Result<ScalarFn> {
    let err = |msg: String| Error::Expression {
        expr: expr.to_string(),
        msg,
    };
    let node = evalexpr::build_operator_tree(&realify(expr)).map_err(|e| err(e.to_string()))?;
    let value = evaluate(&node, [0.25, 0.125]).map_err(|e| err(e.to_string()))?;
    if !value.is_finite() {
        return Err(err(format!("not finite at (0.25, 0.125): {value}")));
    }
    Ok(Arc::new(move |p| evaluate(&node, p).unwrap_or(f64::NAN)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_d_coefficient_hits_upper_cap_at_midpoint() {
        let p = Problem::builtin("1d-sine").unwrap();
        assert_eq!((p.coefficient())([0.5, 0.0]), 319.0 / 256.0);
        assert_eq!((p.coefficient())([0.0, 0.0]), 67.0 / 64.0);
        assert_eq!((p.initial())([0.5, 0.0]), 0.25);
    }

    #[test]
    fn two_d_coefficient_caps() {
        let p = Problem::builtin("2d-disk").unwrap();
        assert_eq!((p.coefficient())([0.0, 0.0]), 319.0 / 256.0);
        assert_eq!((p.coefficient())([1.0, 0.0]), 71.0 / 64.0);
        assert!((p.initial())([0.6, 0.8]).abs() < 1e-15);
    }

    #[test]
    fn unknown_builtin_lists_names() {
        let e = Problem::builtin("nope").unwrap_err().to_string();
        assert!(e.contains("1d-sine") && e.contains("2d-disk"));
    }

    #[test]
    fn expressions_use_real_arithmetic() {
        let f = expression_fn("1/4 + x^2").unwrap();
        assert_eq!(f([2.0, 0.0]), 4.25);
        let g = expression_fn("max(min(1 + 1/4*sin(pi*x), 319/256), 67/64)").unwrap();
        let q = Problem::builtin("1d-sine").unwrap();
        for x in [0.0, 0.1, 0.37, 0.5, 0.9] {
            assert!((g([x, 0.0]) - (q.coefficient())([x, 0.0])).abs() < 1e-15);
        }
        assert_eq!(expression_fn("2.5e-1*y").unwrap()([0.0, 4.0]), 1.0);
        assert_eq!(expression_fn("math::pow(x, 3)").unwrap()([2.0, 0.0]), 8.0);
    }

    #[test]
    fn realify_leaves_identifiers_and_reals_alone() {
        assert_eq!(realify("x2 + 3*y - 1.5e3 + 2e-1 + 7"), "x2 + 3.0*y - 1.5e3 + 2e-1 + 7.0");
        assert_eq!(realify("math::log10(10)"), "math::log10(10.0)");
    }

    #[test]
    fn bad_expressions_are_rejected() {
        assert!(matches!(expression_fn("1 +"), Err(Error::Expression { .. })));
        assert!(matches!(expression_fn("z + 1"), Err(Error::Expression { .. })));
        assert!(matches!(expression_fn("foo(x)"), Err(Error::Expression { .. })));
        assert!(matches!(expression_fn("1/0"), Err(Error::Expression { .. })));
    }

    #[test]
    fn custom_problem_dimension_checked() {
        assert!(Problem::from_expressions(3, "1", "0", "0").is_err());
        let p = Problem::from_expressions(1, "1", "x*(1-x)", "1").unwrap();
        let fem = FemSpace::new(p.mesh(10).unwrap()).unwrap();
        assert!(p.source_data(&fem).is_ok());
        let disk = FemSpace::new(ring_disk_mesh(2).unwrap()).unwrap();
        assert!(p.source_data(&disk).is_err());
    }
}
