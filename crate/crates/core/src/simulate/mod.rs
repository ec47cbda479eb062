//! Monte-Carlo verification layer.
//!
//! Every path draws its Brownian increments from its own ChaCha8 stream,
//! keyed by (seed, path index), so results do not depend on how paths are
//! spread over threads. Reductions run sequentially in path order.

pub mod bsde;
pub mod costs;
pub mod paths;

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::drivers::hamiltonian::HamiltonianDriver;
use crate::error::{Error, Result};
use crate::model::{GridFunction, RunningCost, SolveReport, VectorField};

pub use bsde::{bsde_residual, bsde_residual_ladder, ergodic_lambda_check, BsdeResidual, LambdaCheck};
pub use costs::{
    ergodic_cost_mc, girsanov_weights, risk_sensitive_cost_mc, weak_strong_compare, GirsanovWeights, WeakStrong,
};
pub use paths::{check_exponential_ergodicity, simulate_paths, ErgodicityCheck};

/// Fraction of the horizon discarded before ergodic averages.
pub const BURN_IN_FRACTION: f64 = 0.1;

type FeedbackFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Bounded Markov feedback α(x).
#[derive(Clone)]
pub struct FeedbackControl {
    dim: usize,
    bound: f64,
    label: String,
    map: FeedbackFn,
}

impl fmt::Debug for FeedbackControl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeedbackControl")
            .field("label", &self.label)
            .field("bound", &self.bound)
            .finish()
    }
}

/// Where the sup of |â(x, v(x))| over the grid is attained.
#[derive(Debug, Clone, Serialize)]
pub struct FeedbackDiagnostics {
    pub sup_a_hat: f64,
    pub argmax: Vec<f64>,
    pub on_boundary_layer: bool,
    pub layer: usize,
}

impl FeedbackControl {
    pub fn new<F>(dim: usize, bound: f64, label: impl Into<String>, map: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        FeedbackControl {
            dim,
            bound,
            label: label.into(),
            map: Arc::new(map),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, 0.0, "zero", |_, out| out.fill(0.0))
    }

    /// Multilinear interpolation of a vector grid function; the bound is the
    /// largest nodal norm, which interpolation cannot exceed.
    pub fn from_grid(field: GridFunction, label: impl Into<String>) -> Self {
        let bound = field.sup_norm();
        let dim = field.grid.dim;
        Self::new(dim, bound, label, move |x, out| {
            field.interpolate_into(x, out);
        })
    }

    /// α*(x) = â(x, v(x)) evaluated at the nodes and interpolated.
    pub fn optimal(cost: &RunningCost, report: &SolveReport, layer: usize) -> Result<(Self, FeedbackDiagnostics)> {
        let ham = HamiltonianDriver::new(cost.clone());
        let grid = report.v.grid.clone();
        let d = grid.dim;
        let nodes: Vec<Result<Vec<f64>>> = (0..grid.len())
            .into_par_iter()
            .map(|i| ham.a_hat(&grid.node(i), report.v.at(i)))
            .collect();
        let mut values = Vec::with_capacity(grid.len() * d);
        let mut sup: f64 = 0.0;
        let mut arg = 0;
        for (i, a) in nodes.into_iter().enumerate() {
            let a = a?;
            let n = a.iter().map(|t| t * t).sum::<f64>().sqrt();
            if n > sup {
                sup = n;
                arg = i;
            }
            values.extend(a);
        }
        let field = GridFunction::vector(grid.clone(), values)?;
        let diag = FeedbackDiagnostics {
            sup_a_hat: sup,
            argmax: grid.node(arg),
            on_boundary_layer: grid.layer_depth(arg) < layer,
            layer,
        };
        Ok((Self::from_grid(field, "a_hat(x, v(x))"), diag))
    }

    /// α(x) + δα(x) with |δα| ≤ `extra_bound`.
    pub fn perturbed<F>(&self, label: impl Into<String>, extra_bound: f64, delta: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        let base = self.map.clone();
        let d = self.dim;
        Self::new(d, self.bound + extra_bound, label, move |x, out| {
            base(x, out);
            let mut extra = [0.0; 2];
            delta(x, &mut extra[..d]);
            for (o, e) in out.iter_mut().zip(&extra[..d]) {
                *o += e;
            }
        })
    }

    /// c·α(x).
    pub fn scaled(&self, label: impl Into<String>, c: f64) -> Self {
        let base = self.map.clone();
        Self::new(self.dim, self.bound * c.abs(), label, move |x, out| {
            base(x, out);
            out.iter_mut().for_each(|v| *v *= c);
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Evaluates α(x), failing if the declared bound is exceeded.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.map)(x, out);
        let n = out.iter().map(|t| t * t).sum::<f64>().sqrt();
        if !(n <= self.bound * (1.0 + 1e-12) + 1e-300) {
            return Err(Error::FeedbackBound {
                value: n,
                bound: self.bound,
            });
        }
        Ok(())
    }
}

pub(crate) fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

pub(crate) fn fill_increments(rng: &mut ChaCha8Rng, sd: f64, out: &mut [f64]) {
    for o in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *o = sd * z;
    }
}

pub(crate) fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite() && horizon >= dt * (1.0 - 1e-9) && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need dt > 0 and T >= dt, got dt = {dt}, T = {horizon}"
        )));
    }
    Ok((horizon / dt).round().max(1.0) as usize)
}

/// One Euler–Maruyama step with optional feedback; `alpha` receives α(x).
pub(crate) struct Stepper<'a> {
    pub b: &'a VectorField,
    pub feedback: Option<&'a FeedbackControl>,
    pub dt: f64,
    drift: [f64; 2],
    pub alpha: [f64; 2],
}

impl<'a> Stepper<'a> {
    pub fn new(b: &'a VectorField, feedback: Option<&'a FeedbackControl>, dt: f64) -> Self {
        Stepper {
            b,
            feedback,
            dt,
            drift: [0.0; 2],
            alpha: [0.0; 2],
        }
    }

    /// Evaluates α at `x` without moving.
    pub fn control(&mut self, x: &[f64]) -> Result<()> {
        let d = x.len();
        match self.feedback {
            Some(f) => f.eval_into(x, &mut self.alpha[..d]),
            None => {
                self.alpha[..d].fill(0.0);
                Ok(())
            }
        }
    }

    /// x ← x + (b(x) + α(x)) dt + dw, using the α last computed by `control`.
    pub fn advance(&mut self, x: &mut [f64], dw: &[f64]) -> bool {
        let d = x.len();
        self.b.eval_into(x, &mut self.drift[..d]);
        let mut finite = true;
        for i in 0..d {
            x[i] += (self.drift[i] + self.alpha[i]) * self.dt + dw[i];
            finite &= x[i].is_finite();
        }
        finite
    }
}

/// Mean and standard error of the mean.
pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
