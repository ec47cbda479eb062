//! Grid solver for the ergodic PDE: truncation, discounted fixed point,
//! vanishing discount and a-posteriori checks.

pub mod discount;
pub mod linear;
pub mod residual;
pub mod scheme;
pub mod truncation;

pub use discount::{solve_discounted, vanishing_discount, DiscountedSolver, DiscountedState, LevelStats};
pub use linear::{linear_solvers, BandOperator, BandedLu, Factored, GaussSeidel, LinearSolver};
pub use residual::{ergodic_residual, gradient_bound_check, gradient_system_residual, Region};
pub use scheme::Scheme;
pub use truncation::{cap_profile, truncate, truncate_driver, CapMode, TruncatedDriver};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConditionReport, ProblemSpec, SolveReport};

/// Smallest cap used in auto mode, for drivers with M = 0.
pub const MIN_AUTO_CAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Reflecting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub spacing: f64,
    pub rho0: f64,
    pub rho_factor: f64,
    pub min_rho: f64,
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
    /// Consecutive ρ-levels whose λ estimates differ by less than this stop
    /// the schedule.
    pub lambda_tol: f64,
    pub damping: f64,
    pub boundary: Boundary,
    pub cap: CapMode,
    pub linear_solver: String,
    /// Boundary layer (in spacings) excluded from residuals and bounds.
    pub layer: usize,
    pub bound_slack: f64,
    /// Pass threshold for the ergodic and gradient-system residuals.
    pub residual_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            spacing: 0.05,
            rho0: 1.0,
            rho_factor: 0.5,
            min_rho: 1e-5,
            fixed_point_tol: 1e-10,
            fixed_point_max_iter: 500,
            lambda_tol: 1e-5,
            damping: 0.5,
            boundary: Boundary::Reflecting,
            cap: CapMode::Auto,
            linear_solver: "banded_lu".into(),
            layer: residual::DEFAULT_LAYER,
            bound_slack: residual::DEFAULT_BOUND_SLACK,
            residual_tol: 1e-2,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return bad(format!("spacing must be positive, got {}", self.spacing));
        }
        if !(self.min_rho > 0.0 && self.rho0 > self.min_rho && self.rho0.is_finite()) {
            return bad(format!(
                "need rho0 > min_rho > 0, got rho0 = {}, min_rho = {}",
                self.rho0, self.min_rho
            ));
        }
        if !(self.rho_factor > 0.0 && self.rho_factor < 1.0) {
            return bad(format!("rho_factor must lie in (0, 1), got {}", self.rho_factor));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if !(self.fixed_point_tol > 0.0 && self.lambda_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.fixed_point_max_iter == 0 {
            return bad("fixed_point_max_iter must be at least 1".into());
        }
        Ok(())
    }

    pub fn region(&self) -> Region {
        Region::Interior { layer: self.layer }
    }
}

/// Cap for the truncation; auto mode uses M/δ̂.
pub fn resolve_cap(mode: CapMode, m: f64, delta_hat: f64) -> Result<Option<f64>> {
    match mode {
        CapMode::Off => Ok(None),
        CapMode::Manual(c) => Ok(Some(c)),
        CapMode::Auto => {
            if !(delta_hat > 0.0) || !m.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "auto cap needs a finite M and a positive delta (M = {m}, delta = {delta_hat})"
                )));
            }
            Ok(Some((m / delta_hat).max(MIN_AUTO_CAP)))
        }
    }
}

/// Check → cap → truncate → vanishing discount → residuals and bound.
pub fn solve_pipeline(spec: &ProblemSpec, opts: &SolverOptions, conditions: &ConditionReport) -> Result<SolveReport> {
    let delta = if conditions.delta_hat > 0.0 {
        conditions.delta_hat
    } else {
        spec.delta
    };
    let cap = resolve_cap(opts.cap, conditions.m, delta)?;
    let driver = match cap {
        Some(c) => truncate_driver(spec.driver.clone(), c)?,
        None => TruncatedDriver::untruncated(spec.driver.clone()),
    };
    let mut report = vanishing_discount(spec, &driver, opts)?;
    let region = opts.region();
    report.pde_residual = Some(ergodic_residual(spec, &spec.driver, &report, &region));
    report.gradient_system_residual = Some(gradient_system_residual(spec, &spec.driver, &report, &region));
    report.gradient_bound = Some(gradient_bound_check(&report, conditions.m, delta, opts.bound_slack, &region));
    Ok(report)
}

/// Whether the a-posteriori checks of a pipeline report pass.
pub fn report_passes(report: &SolveReport, opts: &SolverOptions) -> bool {
    let ok = |r: Option<f64>| r.is_some_and(|v| v <= opts.residual_tol);
    ok(report.pde_residual)
        && ok(report.gradient_system_residual)
        && report.gradient_bound.is_some_and(|b| b.verdict)
}
