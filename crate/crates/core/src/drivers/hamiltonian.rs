//! Control Hamiltonian H(x, z) = inf_a { a·z + r(x, a) } and the drivers
//! built from it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::field::{fd_gradient, VecFn2};
use crate::model::{DriverSplit, RunningCost};

pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const DEFAULT_NEWTON_MAX_ITER: usize = 100;

const ARMIJO_C: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimizer {
    pub a_hat: Vec<f64>,
    #[serde(rename = "H")]
    pub h_value: f64,
    pub iters: usize,
    pub grad_norm: f64,
}

/// Hamiltonian of a running cost, evaluated by damped Newton from a = 0.
#[derive(Debug, Clone)]
pub struct HamiltonianDriver {
    pub cost: RunningCost,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl HamiltonianDriver {
    pub fn new(cost: RunningCost) -> Self {
        HamiltonianDriver {
            cost,
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
        }
    }

    pub fn dim(&self) -> usize {
        self.cost.dim()
    }

    pub fn minimize(&self, x: &[f64], z: &[f64]) -> Result<Minimizer> {
        let d = self.dim();
        let cost = &self.cost;
        let objective = |a: &[f64]| linalg::dot(a, z) + cost.value(x, a);
        let gradient = |a: &[f64], out: &mut [f64]| {
            cost.grad_a_into(x, a, out);
            for i in 0..d {
                out[i] += z[i];
            }
        };

        let mut a = vec![0.0; d];
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let mut trial = vec![0.0; d];
        let mut trial_grad = vec![0.0; d];
        gradient(&a, &mut grad);
        let mut gnorm = linalg::norm(&grad);
        let mut phi = objective(&a);

        for iter in 0..self.newton_max_iter {
            if gnorm <= self.newton_tol {
                return Ok(Minimizer {
                    h_value: phi,
                    a_hat: a,
                    iters: iter,
                    grad_norm: gnorm,
                });
            }
            cost.hess_a_into(x, &a, &mut hess);
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            let mut step = linalg::solve(&hess, d, &neg).ok_or_else(|| Error::SingularHessian {
                x: x.to_vec(),
                a: a.clone(),
            })?;
            let mut slope = linalg::dot(&grad, &step);
            if !(slope < 0.0) {
                step = neg;
                slope = -gnorm * gnorm;
            }

            let mut t = 1.0;
            loop {
                for i in 0..d {
                    trial[i] = a[i] + t * step[i];
                }
                let phi_trial = objective(&trial);
                let sufficient = phi_trial <= phi + ARMIJO_C * t * slope;
                // near the optimum φ changes below its own rounding; fall back
                // to progress in the gradient norm
                let flat = (phi_trial - phi).abs() <= 1e-14 * (1.0 + phi.abs());
                if sufficient || flat {
                    gradient(&trial, &mut trial_grad);
                    let tnorm = linalg::norm(&trial_grad);
                    if sufficient || tnorm < gnorm {
                        a.copy_from_slice(&trial);
                        grad.copy_from_slice(&trial_grad);
                        gnorm = tnorm;
                        phi = phi_trial;
                        break;
                    }
                }
                t *= 0.5;
                if t < 1e-16 {
                    return Err(Error::NewtonNotConverged {
                        iterations: iter + 1,
                        last: a,
                        grad_norm: gnorm,
                    });
                }
            }
        }
        if gnorm <= self.newton_tol {
            return Ok(Minimizer {
                h_value: phi,
                a_hat: a,
                iters: self.newton_max_iter,
                grad_norm: gnorm,
            });
        }
        Err(Error::NewtonNotConverged {
            iterations: self.newton_max_iter,
            last: a,
            grad_norm: gnorm,
        })
    }

    /// H(x, z), or NaN when the inner minimization fails.
    pub fn value(&self, x: &[f64], z: &[f64]) -> f64 {
        self.minimize(x, z).map(|m| m.h_value).unwrap_or(f64::NAN)
    }

    pub fn a_hat(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.minimize(x, z).map(|m| m.a_hat)
    }
}

/// Newton minimization of a ↦ a·z + r(x, a).
pub fn minimize_h(cost: &RunningCost, x: &[f64], z: &[f64]) -> Result<Minimizer> {
    HamiltonianDriver::new(cost.clone()).minimize(x, z)
}

fn hamiltonian_dx(ham: Arc<HamiltonianDriver>) -> VecFn2 {
    Arc::new(move |x: &[f64], z: &[f64], out: &mut [f64]| fd_gradient(|xp| ham.value(xp, z), x, out))
}

/// Driver with g = H and h = 0; partials are finite differences of H.
pub fn build_control_driver(cost: &RunningCost) -> DriverSplit {
    build_control_driver_from(Arc::new(HamiltonianDriver::new(cost.clone())))
}

pub fn build_control_driver_from(ham: Arc<HamiltonianDriver>) -> DriverSplit {
    let dim = ham.dim();
    let label = format!("H[{}]", ham.cost.label());
    let g = ham.clone();
    DriverSplit::new(dim, label, move |x, z| g.value(x, z), |_, _| 0.0)
        .with_dx_g_arc(Some(hamiltonian_dx(ham)))
        .with_dx_h(|_, _, out| out.fill(0.0))
}

/// Driver H + (δ/2)|z|². The added term is x-free, so ∂_x g is shared with
/// the plain control driver (same closure, bitwise identical values).
pub fn build_risk_sensitive_driver(cost: &RunningCost, delta_rs: f64) -> Result<DriverSplit> {
    if !(delta_rs >= 0.0 && delta_rs.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "risk-sensitivity parameter must be >= 0, got {delta_rs}"
        )));
    }
    let base = build_control_driver(cost);
    let dx_g = base.dx_g_fn();
    let inner = base.clone();
    let half = 0.5 * delta_rs;
    let label = format!("{} + {half}|z|^2", base.label());
    Ok(DriverSplit::new(
        base.dim(),
        label,
        move |x, z| inner.g(x, z) + half * linalg::dot(z, z),
        |_, _| 0.0,
    )
    .with_dx_g_arc(dx_g)
    .with_dx_h(|_, _, out| out.fill(0.0)))
}

/// ∂_z∂_x H expressed through the cost: −∂_a∂_x r · (∂_a² r)⁻¹ at (x, a).
/// Row-major with rows indexing x and columns indexing z.
pub fn hamiltonian_mixed_partial(cost: &RunningCost, x: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    let d = cost.dim();
    let hess = cost.hess_a(x, a);
    let inv = linalg::inverse(&hess, d).ok_or_else(|| Error::SingularHessian {
        x: x.to_vec(),
        a: a.to_vec(),
    })?;
    let mixed = cost.mixed_xa(x, a);
    Ok(linalg::matmul(&mixed, &inv, d).into_iter().map(|v| -v).collect())
}
