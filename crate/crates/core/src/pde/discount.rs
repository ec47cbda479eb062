//! Discounted solves by frozen-gradient fixed point, and the vanishing
//! discount limit.
//!
//! The iterate is stored as u = κ + w with w = 0 at the anchor node. The
//! discounted equation ρu − L_h u = f̃(x, ∇u) then becomes
//! ρκ + (ρ − L_h) w = f̃(x, ∇w), which keeps w of order one while κ grows
//! like λ/ρ.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{GridFunction, ProblemSpec, SolveReport, TraceEntry};
use crate::pde::linear::{linear_solvers, BandOperator, LinearSolver};
use crate::pde::scheme::Scheme;
use crate::pde::truncation::TruncatedDriver;
use crate::pde::SolverOptions;

/// Iterate of a discounted solve.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedState {
    /// u at the anchor node.
    pub kappa: f64,
    /// u − κ, exactly zero at the anchor node.
    pub w: Vec<f64>,
}

impl DiscountedState {
    pub fn zero(n: usize) -> Self {
        DiscountedState {
            kappa: 0.0,
            w: vec![0.0; n],
        }
    }

    pub fn u(&self) -> Vec<f64> {
        self.w.iter().map(|w| self.kappa + w).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LevelStats {
    pub iterations: usize,
    /// Sup-norm update per iteration.
    pub history: Vec<f64>,
    pub final_damping: f64,
}

pub struct DiscountedSolver<'a> {
    pub scheme: Scheme,
    pub driver: &'a TruncatedDriver,
    pub opts: &'a SolverOptions,
    pub anchor: usize,
    generator: BandOperator,
    linear: Arc<dyn LinearSolver>,
}

impl<'a> DiscountedSolver<'a> {
    pub fn new(spec: &ProblemSpec, driver: &'a TruncatedDriver, opts: &'a SolverOptions) -> Result<Self> {
        spec.validate()?;
        opts.validate()?;
        if driver.dim() != spec.dim() {
            return Err(Error::InvalidInput(format!(
                "driver dimension {} does not match problem dimension {}",
                driver.dim(),
                spec.dim()
            )));
        }
        let grid = crate::model::Grid::new(&spec.domain, opts.spacing)?;
        let anchor = grid.nearest_node(&spec.x0);
        let scheme = Scheme::new(grid, &spec.b);
        if let Some(i) = scheme.drift.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "drift at node {:?}",
                scheme.node(i / spec.dim())
            )));
        }
        let generator = scheme.generator_operator();
        let linear = linear_solvers().get(&opts.linear_solver)?;
        Ok(DiscountedSolver {
            scheme,
            driver,
            opts,
            anchor,
            generator,
            linear,
        })
    }

    pub fn len(&self) -> usize {
        self.scheme.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn source(&self, grad: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.scheme.dim();
        out.par_iter_mut().enumerate().for_each(|(i, s)| {
            *s = self.driver.value(self.scheme.node(i), &grad[i * d..(i + 1) * d]);
        });
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::DriverOverflow {
                x: self.scheme.node(i).to_vec(),
                z: grad[i * d..(i + 1) * d].to_vec(),
            });
        }
        Ok(())
    }

    /// Runs the fixed point at discount `rho`, starting from `state`.
    pub fn solve_level(&self, rho: f64, state: &mut DiscountedState) -> Result<LevelStats> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidInput(format!("rho must be positive, got {rho}")));
        }
        let n = self.len();
        let d = self.scheme.dim();
        let factored = self.linear.factor(&self.generator.shifted(rho))?;
        let tol = self.opts.fixed_point_tol;
        let mut omega = self.opts.damping;
        let mut grad = vec![0.0; n * d];
        let mut src = vec![0.0; n];
        let mut w_raw = state.w.clone();
        let mut history = Vec::new();
        let mut increases = 0;
        let mut prev = f64::INFINITY;

        for iter in 1..=self.opts.fixed_point_max_iter {
            self.scheme.central_gradient(&state.w, &mut grad);
            self.source(&grad, &mut src)?;
            let shift = rho * state.kappa;
            for s in src.iter_mut() {
                *s -= shift;
            }
            factored.solve(&src, &mut w_raw)?;

            // κ enters only through a constant, so it takes the undamped
            // value; w is damped and renormalized at the anchor.
            let c = w_raw[self.anchor];
            let mut update: f64 = 0.0;
            let mut sup_w: f64 = 0.0;
            for (w, raw) in state.w.iter_mut().zip(&w_raw) {
                let next = (1.0 - omega) * *w + omega * (raw - c);
                update = update.max((next - *w).abs());
                sup_w = sup_w.max(next.abs());
                *w = next;
            }
            state.w[self.anchor] = 0.0;
            let kappa_step = rho * c.abs();
            state.kappa += c;
            history.push(update);
            if !update.is_finite() || !state.kappa.is_finite() {
                return Err(Error::FixedPointNotConverged {
                    rho,
                    iterations: iter,
                    last_update: update,
                    history,
                });
            }
            if update <= tol * (1.0 + sup_w) && kappa_step <= tol * (1.0 + (rho * state.kappa).abs()) {
                return Ok(LevelStats {
                    iterations: iter,
                    history,
                    final_damping: omega,
                });
            }
            if update > prev {
                increases += 1;
                if increases >= 2 {
                    omega *= 0.5;
                    increases = 0;
                }
            } else {
                increases = 0;
            }
            prev = update;
        }
        Err(Error::FixedPointNotConverged {
            rho,
            iterations: self.opts.fixed_point_max_iter,
            last_update: history.last().copied().unwrap_or(f64::NAN),
            history,
        })
    }

    /// Normalized solution and its central gradient as grid functions.
    pub fn grid_functions(&self, state: &DiscountedState) -> Result<(GridFunction, GridFunction)> {
        let d = self.scheme.dim();
        let mut v = vec![0.0; self.len() * d];
        self.scheme.central_gradient(&state.w, &mut v);
        Ok((
            GridFunction::scalar(self.scheme.grid.clone(), state.w.clone())?,
            GridFunction::vector(self.scheme.grid.clone(), v)?,
        ))
    }
}

/// u^ρ on the grid (not normalized).
pub fn solve_discounted(spec: &ProblemSpec, driver: &TruncatedDriver, rho: f64, opts: &SolverOptions) -> Result<GridFunction> {
    let solver = DiscountedSolver::new(spec, driver, opts)?;
    let mut state = DiscountedState::zero(solver.len());
    solver.solve_level(rho, &mut state)?;
    GridFunction::scalar(solver.scheme.grid.clone(), state.u())
}

/// Solves along the geometric ρ schedule, warm-starting each level, until
/// consecutive λ estimates agree to `lambda_tol`.
pub fn vanishing_discount(spec: &ProblemSpec, driver: &TruncatedDriver, opts: &SolverOptions) -> Result<SolveReport> {
    let solver = DiscountedSolver::new(spec, driver, opts)?;
    let mut state = DiscountedState::zero(solver.len());
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut rho = opts.rho0;
    let floor = opts.min_rho * (1.0 - 1e-12);
    let mut converged = false;
    while rho >= floor {
        let stats = solver.solve_level(rho, &mut state)?;
        let lambda = rho * state.kappa;
        trace.push(TraceEntry {
            rho,
            lambda,
            iterations: stats.iterations,
        });
        if let [.., a, b] = trace.as_slice() {
            if (b.lambda - a.lambda).abs() < opts.lambda_tol {
                converged = true;
                break;
            }
        }
        let next = rho * opts.rho_factor;
        state.kappa = lambda / next;
        rho = next;
    }
    if !converged {
        let last_diff = match trace.as_slice() {
            [.., a, b] => (b.lambda - a.lambda).abs(),
            _ => f64::NAN,
        };
        return Err(Error::DiscountNotConverged {
            last_diff,
            trace: trace.iter().map(|t| (t.rho, t.lambda)).collect(),
        });
    }
    let last = *trace.last().expect("at least one level");
    let n = solver.len() as f64;
    let lambda_grid_average = last.rho * state.kappa + last.rho * state.w.iter().sum::<f64>() / n;
    let (u, v) = solver.grid_functions(&state)?;
    Ok(SolveReport {
        u,
        v,
        lambda: last.lambda,
        lambda_grid_average,
        discount_trace: trace,
        cap: driver.cap,
        pde_residual: None,
        gradient_system_residual: None,
        gradient_bound: None,
    })
}
