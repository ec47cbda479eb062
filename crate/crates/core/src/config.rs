//! Problem files.
//!
//! A problem file is TOML. Expression fields use the grammar of [`crate::expr`].
//!
//! ```toml
//! [problem]
//! dim = 1                  # 1 or 2
//! box_half_width = 6.0
//! x0 = [0.0]               # normalization anchor and simulation start
//! delta = 1.0              # optional; sampled delta_hat when omitted
//! driver = "generic"       # generic | control | risk_sensitive | forward
//!
//! [drift]
//! b = ["-x"]               # one expression per component, over x
//!
//! [g]                      # generic driver only, over x and z
//! expr = "-tanh(x)*z^3"
//!
//! [h]
//! expr = "cos(x)"
//!
//! [cost]                   # control and risk_sensitive drivers, over x and a
//! r = "0.5*a^2 + sin(x)^2"
//! convexity_modulus = 1.0
//! kappa = "1 + 0.5*a^2"    # optional growth bound in |a|, written in `a`
//! delta_rs = 0.5           # risk_sensitive only
//!
//! [forward]
//! theta = ["tanh(x)"]
//! pi = { kind = "box", lo = [-1.0], hi = [1.0] }
//! delta_cap = 1.0
//!
//! [solver]                 # SolverOptions, all optional
//! [check]                  # CheckOptions, all optional
//! [simulation]             # SimulationOptions, all optional
//! ```
//!
//! Unknown keys are rejected. Errors carry the offending key and its line.

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::conditions::{check_dissipativity, CheckOptions};
use crate::drivers::driver_families;
use crate::error::{Error, Result};
use crate::expr::{Expr, VarSet};
use crate::model::{ConvexSet, DomainBox, ProblemSpec, RunningCost, VectorField};
use crate::pde::SolverOptions;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: RawProblem,
    drift: RawDrift,
    g: Option<RawExpr>,
    h: Option<RawExpr>,
    cost: Option<RawCost>,
    forward: Option<RawForward>,
    #[serde(default)]
    solver: SolverOptions,
    #[serde(default)]
    check: CheckOptions,
    #[serde(default)]
    simulation: SimulationOptions,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    dim: usize,
    box_half_width: f64,
    x0: Option<Vec<f64>>,
    delta: Option<f64>,
    #[serde(default = "default_driver")]
    driver: String,
}

fn default_driver() -> String {
    "generic".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrift {
    b: Vec<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExpr {
    expr: Spanned<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    r: Spanned<String>,
    convexity_modulus: f64,
    kappa: Option<Spanned<String>>,
    delta_rs: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForward {
    theta: Vec<Spanned<String>>,
    pi: ConvexSet,
    delta_cap: f64,
}

/// Monte-Carlo settings for the `control` and `simulate` pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationOptions {
    pub seed: u64,
    /// Ensemble cost estimates.
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    /// Single-path time average of f(X, v(X)).
    pub lambda_horizon: f64,
    pub lambda_dt: f64,
    /// Weak/strong comparison.
    pub weak_horizon: f64,
    pub weak_paths: usize,
    /// Risk-sensitive cost.
    pub rs_horizon: f64,
    pub rs_paths: usize,
    /// BSDE residual ladder.
    pub bsde_horizon: f64,
    pub bsde_dts: Vec<f64>,
    pub bsde_paths: usize,
    /// Coupled pairs for the contraction check.
    pub ergodicity_pairs: usize,
    pub ergodicity_horizon: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            seed: 0,
            horizon: 100.0,
            dt: 1e-2,
            n_paths: 200,
            lambda_horizon: 2000.0,
            lambda_dt: 1e-3,
            weak_horizon: 5.0,
            weak_paths: 10_000,
            rs_horizon: 40.0,
            rs_paths: 2000,
            bsde_horizon: 1.0,
            bsde_dts: vec![1e-2, 1e-3, 1e-4],
            bsde_paths: 16,
            ergodicity_pairs: 16,
            ergodicity_horizon: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CostConfig {
    pub cost: RunningCost,
    pub delta_rs: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardConfig {
    pub theta: VectorField,
    pub pi: ConvexSet,
    pub delta_cap: f64,
}

/// A parsed, compiled problem file.
#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub domain: DomainBox,
    pub x0: Vec<f64>,
    /// Declared dissipativity constant, if any.
    pub delta: Option<f64>,
    pub driver_family: String,
    pub b: VectorField,
    pub g: Option<Expr>,
    pub h: Option<Expr>,
    pub cost: Option<CostConfig>,
    pub forward: Option<ForwardConfig>,
    pub solver: SolverOptions,
    pub check: CheckOptions,
    pub simulation: SimulationOptions,
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

fn compile(source: &str, key: &str, field: &Spanned<String>, dim: usize, vars: VarSet) -> Result<Expr> {
    Expr::parse(field.get_ref(), dim, vars).map_err(|e| Error::Parse {
        key: key.to_string(),
        line: Some(line_of(source, field.span().start)),
        message: e.to_string(),
    })
}

fn compile_vector(source: &str, key: &str, fields: &[Spanned<String>], dim: usize) -> Result<VectorField> {
    if fields.len() != dim {
        return Err(Error::Parse {
            key: key.to_string(),
            line: fields.first().map(|f| line_of(source, f.span().start)),
            message: format!("expected {dim} components, got {}", fields.len()),
        });
    }
    let exprs = fields
        .iter()
        .enumerate()
        .map(|(i, f)| compile(source, &format!("{key}[{i}]"), f, dim, VarSet::X))
        .collect::<Result<Vec<_>>>()?;
    Ok(VectorField::from_exprs(exprs))
}

impl ProblemConfig {
    pub fn from_toml(source: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(source).map_err(|e| Error::Parse {
            key: "config".into(),
            line: e.span().map(|s| line_of(source, s.start)),
            message: e.message().to_string(),
        })?;
        let p = &raw.problem;
        let domain = DomainBox::new(p.dim, p.box_half_width)?;
        let d = p.dim;
        let x0 = p.x0.clone().unwrap_or_else(|| vec![0.0; d]);
        if x0.len() != d {
            return Err(Error::Config(format!("problem.x0 has {} entries, dim is {d}", x0.len())));
        }
        let b = compile_vector(source, "drift.b", &raw.drift.b, d)?;
        let g = raw
            .g
            .as_ref()
            .map(|r| compile(source, "g.expr", &r.expr, d, VarSet::XZ))
            .transpose()?;
        let h = raw
            .h
            .as_ref()
            .map(|r| compile(source, "h.expr", &r.expr, d, VarSet::XZ))
            .transpose()?;
        let cost = match &raw.cost {
            Some(c) => {
                let r = compile(source, "cost.r", &c.r, d, VarSet::XA)?;
                let mut cost = RunningCost::from_expr(r, c.convexity_modulus)?;
                if let Some(k) = &c.kappa {
                    let kappa = compile(source, "cost.kappa", k, 1, VarSet::A)?;
                    cost = cost.with_kappa(move |n| kappa.eval(&[], &[], &[n]));
                }
                Some(CostConfig {
                    cost,
                    delta_rs: c.delta_rs,
                })
            }
            None => None,
        };
        let forward = match &raw.forward {
            Some(f) => {
                f.pi.validate()?;
                if f.pi.dim().is_some_and(|k| k != d) {
                    return Err(Error::Config(format!("forward.pi has dimension {:?}, dim is {d}", f.pi.dim())));
                }
                Some(ForwardConfig {
                    theta: compile_vector(source, "forward.theta", &f.theta, d)?,
                    pi: f.pi.clone(),
                    delta_cap: f.delta_cap,
                })
            }
            None => None,
        };
        raw.solver.validate()?;
        Ok(ProblemConfig {
            domain,
            x0,
            delta: p.delta,
            driver_family: p.driver.clone(),
            b,
            g,
            h,
            cost,
            forward,
            solver: raw.solver,
            check: raw.check,
            simulation: raw.simulation,
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&source)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    /// δ used by the spec: the declared value, else the sampled δ̂ when
    /// positive, else 1 (the check then reports the failure).
    pub fn resolved_delta(&self) -> f64 {
        if let Some(d) = self.delta {
            return d;
        }
        let dis = check_dissipativity(&self.b, &self.domain, self.check.n_samples, self.check.seed);
        if dis.delta_hat > 0.0 {
            dis.delta_hat
        } else {
            1.0
        }
    }

    /// Builds the driver through the named family and assembles the spec.
    pub fn spec(&self) -> Result<ProblemSpec> {
        self.spec_with_family(&self.driver_family)
    }

    pub fn spec_with_family(&self, family: &str) -> Result<ProblemSpec> {
        let driver = driver_families().get(family)?.build(self)?;
        ProblemSpec::with_anchor(self.b.clone(), driver, self.resolved_delta(), self.domain, self.x0.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BENCH: &str = r#"
[problem]
dim = 1
box_half_width = 6.0
delta = 1.0

[drift]
b = ["-x"]

[g]
expr = "-tanh(x)*z^3"

[h]
expr = "cos(x)"
"#;

    #[test]
    fn parses_benchmark() {
        let cfg = ProblemConfig::from_toml(BENCH).unwrap();
        assert_eq!(cfg.dim(), 1);
        assert_eq!(cfg.x0, vec![0.0]);
        let spec = cfg.spec().unwrap();
        assert!((spec.driver.value(&[1.0], &[1.0]) - (1.0f64.cos() - 1.0f64.tanh())).abs() < 1e-15);
        assert_eq!(cfg.solver, SolverOptions::default());
    }

    #[test]
    fn bad_expression_names_key_and_line() {
        let src = BENCH.replace("cos(x)", "cos(x");
        match ProblemConfig::from_toml(&src) {
            Err(Error::Parse { key, line, .. }) => {
                assert_eq!(key, "h.expr");
                assert_eq!(line, Some(14));
            }
            other => panic!("{other:?}"),
        }
        let src = BENCH.replace("\"-x\"", "\"-y\"");
        assert!(matches!(ProblemConfig::from_toml(&src), Err(Error::Parse { key, .. }) if key == "drift.b[0]"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let src = BENCH.replace("delta = 1.0", "delta = 1.0\nspeed = 3");
        match ProblemConfig::from_toml(&src) {
            Err(Error::Parse { line, message, .. }) => {
                assert!(message.contains("speed"), "{message}");
                assert_eq!(line, Some(6));
            }
            other => panic!("{other:?}"),
        }
        let src = format!("{BENCH}\n[solver]\nspacing = 0.1\nwarp = 2\n");
        assert!(ProblemConfig::from_toml(&src).is_err());
    }

    #[test]
    fn unknown_driver_family() {
        let src = BENCH.replace("delta = 1.0", "delta = 1.0\ndriver = \"magic\"");
        let cfg = ProblemConfig::from_toml(&src).unwrap();
        let err = cfg.spec().unwrap_err().to_string();
        assert!(err.contains("magic") && err.contains("generic"), "{err}");
    }

    #[test]
    fn cost_and_forward_sections() {
        let src = r#"
[problem]
dim = 1
box_half_width = 6.0
driver = "risk_sensitive"

[drift]
b = ["-x"]

[cost]
r = "0.5*a^2 + sin(x)^2"
convexity_modulus = 1.0
kappa = "1 + a^2"
delta_rs = 0.5

[forward]
theta = ["tanh(x)"]
pi = { kind = "box", lo = [-1.0], hi = [1.0] }
delta_cap = 1.0

[solver]
cap = "off"
spacing = 0.02

[simulation]
n_paths = 10
"#;
        let cfg = ProblemConfig::from_toml(src).unwrap();
        assert_eq!(cfg.cost.as_ref().unwrap().delta_rs, Some(0.5));
        assert_eq!(cfg.solver.spacing, 0.02);
        assert_eq!(cfg.simulation.n_paths, 10);
        // delta omitted: sampled delta_hat of b = −x is 1
        assert!((cfg.resolved_delta() - 1.0).abs() < 1e-9);
        let spec = cfg.spec().unwrap();
        // H(0, 1) = −½ for r = ½a², plus ½δ|z|² = ¼
        assert!((spec.driver.value(&[0.0], &[1.0]) + 0.25).abs() < 1e-9);
        let fwd = cfg.spec_with_family("forward").unwrap();
        assert!((fwd.driver.value(&[0.0], &[3.0]) - 2.0).abs() < 1e-12);
    }
}
