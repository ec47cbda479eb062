//! A-posteriori checks on a computed (u, v, λ).

use serde::{Deserialize, Serialize};

use crate::model::{DriverSplit, GradientBound, ProblemSpec, SolveReport};
use crate::pde::scheme::Scheme;

pub const DEFAULT_LAYER: usize = 3;
pub const DEFAULT_BOUND_SLACK: f64 = 5e-2;
/// Absolute slack so that M = 0 does not fail on roundoff in v.
const BOUND_ABS_SLACK: f64 = 1e-9;

/// Nodes over which a residual or bound is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// Nodes at least `layer` spacings away from every face.
    Interior { layer: usize },
    /// Interior nodes with |x| ≤ radius.
    Ball { radius: f64, layer: usize },
}

impl Default for Region {
    fn default() -> Self {
        Region::Interior { layer: DEFAULT_LAYER }
    }
}

impl Region {
    fn layer(&self) -> usize {
        match *self {
            Region::Interior { layer } | Region::Ball { layer, .. } => layer,
        }
    }

    fn contains(&self, scheme: &Scheme, i: usize) -> bool {
        if scheme.grid.layer_depth(i) < self.layer().max(1) {
            return false;
        }
        match *self {
            Region::Interior { .. } => true,
            Region::Ball { radius, .. } => {
                scheme.node(i).iter().map(|t| t * t).sum::<f64>() <= radius * radius * (1.0 + 1e-12)
            }
        }
    }
}

fn scheme_for(spec: &ProblemSpec, report: &SolveReport) -> Scheme {
    Scheme::new(report.u.grid.clone(), &spec.b)
}

/// max |½Δ_h u + b·∇_h u + f(x, v) − λ| over the region, centred stencils.
pub fn ergodic_residual(spec: &ProblemSpec, driver: &DriverSplit, report: &SolveReport, region: &Region) -> f64 {
    let scheme = scheme_for(spec, report);
    let d = scheme.dim();
    let u = &report.u.values;
    let mut grad = vec![0.0; d];
    let mut worst: f64 = 0.0;
    for i in 0..scheme.len() {
        if !region.contains(&scheme, i) {
            continue;
        }
        scheme.gradient_at(u, i, &mut grad);
        let b = scheme.drift_at(i);
        let drift: f64 = (0..d).map(|k| b[k] * grad[k]).sum();
        let r = 0.5 * scheme.laplacian(u, 1, 0, i) + drift + driver.value(scheme.node(i), report.v.at(i)) - report.lambda;
        if r.is_nan() {
            return f64::NAN;
        }
        worst = worst.max(r.abs());
    }
    worst
}

/// sup |v| over the region against (M/δ)(1 + slack).
pub fn gradient_bound_check(report: &SolveReport, m: f64, delta: f64, slack: f64, region: &Region) -> GradientBound {
    let grid = &report.v.grid;
    let bound = m / delta * (1.0 + slack);
    let layer = match *region {
        Region::Interior { layer } | Region::Ball { layer, .. } => layer,
    };
    let mut sup_v: f64 = 0.0;
    let mut x = vec![0.0; grid.dim];
    for i in 0..grid.len() {
        if grid.layer_depth(i) < layer {
            continue;
        }
        if let Region::Ball { radius, .. } = *region {
            grid.node_into(i, &mut x);
            if x.iter().map(|t| t * t).sum::<f64>() > radius * radius {
                continue;
            }
        }
        let v = report.v.at(i);
        sup_v = sup_v.max(v.iter().map(|t| t * t).sum::<f64>().sqrt());
    }
    GradientBound {
        bound,
        sup_v,
        verdict: sup_v <= bound + BOUND_ABS_SLACK,
    }
}

/// max over the region and components i of
/// |½Δv^i + Σ_j ∂_i b_j v_j + b·∇v^i + ∂_{x_i} f(x, v) + ∂_z f(x, v)·∇v^i|.
pub fn gradient_system_residual(spec: &ProblemSpec, driver: &DriverSplit, report: &SolveReport, region: &Region) -> f64 {
    let scheme = scheme_for(spec, report);
    let d = scheme.dim();
    let v = &report.v.values;
    let mut worst: f64 = 0.0;
    let mut jac = vec![0.0; d * d];
    let mut dxf = vec![0.0; d];
    let mut dzf = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    for i in 0..scheme.len() {
        if !region.contains(&scheme, i) || scheme.grid.layer_depth(i) < 2 {
            continue;
        }
        let x = scheme.node(i);
        let vi = report.v.at(i);
        let b = scheme.drift_at(i);
        spec.b.jacobian_into(x, &mut jac);
        driver.dx_g_into(x, vi, &mut dxf);
        driver.dx_h_into(x, vi, &mut tmp);
        for k in 0..d {
            dxf[k] += tmp[k];
        }
        driver.dz_f_into(x, vi, &mut dzf);
        for c in 0..d {
            let mut r = 0.5 * scheme.laplacian(v, d, c, i) + dxf[c];
            for j in 0..d {
                r += jac[j * d + c] * vi[j];
                let dv = scheme.partial(v, d, c, i, j);
                r += (b[j] + dzf[j]) * dv;
            }
            if r.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(r.abs());
        }
    }
    worst
}
