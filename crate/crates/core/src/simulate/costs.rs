//! Ergodic, risk-sensitive and weak-formulation cost estimators.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CostEstimate, RunningCost, VectorField};
use crate::simulate::{fill_increments, mean_se, path_rng, steps_for, FeedbackControl, Stepper, BURN_IN_FRACTION};

/// Effective sample size below this fraction of the paths flags the weak estimate.
pub const ESS_WARNING_FRACTION: f64 = 0.05;
const LADDER_RUNGS: usize = 4;

fn burn_in(n: usize) -> usize {
    (BURN_IN_FRACTION * n as f64).round() as usize
}

/// Rung lengths (in steps) of the doubling ladder ending at `n_steps`.
fn ladder_steps(n_steps: usize) -> Vec<usize> {
    let mut rungs: Vec<usize> = (0..LADDER_RUNGS)
        .rev()
        .map(|j| n_steps >> j)
        .filter(|&n| n >= 10)
        .collect();
    rungs.dedup();
    if rungs.last() != Some(&n_steps) {
        rungs.push(n_steps);
    }
    rungs
}

fn check_inputs(b: &VectorField, cost: &RunningCost, feedback: Option<&FeedbackControl>, x0: &[f64]) -> Result<()> {
    let d = b.dim();
    if x0.len() != d || cost.dim() != d || feedback.is_some_and(|f| f.dim() != d) {
        return Err(Error::InvalidInput("dimension mismatch between drift, cost, feedback and start".into()));
    }
    Ok(())
}

/// Cumulative ∫ r dt at the checkpoints, or None on blow-up.
fn running_cost_path(
    cost: &RunningCost,
    b: &VectorField,
    feedback: Option<&FeedbackControl>,
    x0: &[f64],
    dt: f64,
    checkpoints: &[usize],
    seed: u64,
    p: usize,
) -> Result<Option<Vec<f64>>> {
    let d = b.dim();
    let n_steps = *checkpoints.iter().max().unwrap_or(&0);
    let mut rng = path_rng(seed, p);
    let mut stepper = Stepper::new(b, feedback, dt);
    let mut x = x0.to_vec();
    let mut dw = vec![0.0; d];
    let sd = dt.sqrt();
    let mut acc = 0.0;
    let mut out = vec![0.0; checkpoints.len()];
    for k in 0..=n_steps {
        for (o, &c) in out.iter_mut().zip(checkpoints) {
            if c == k {
                *o = acc;
            }
        }
        if k == n_steps {
            break;
        }
        stepper.control(&x)?;
        acc += cost.value(&x, &stepper.alpha[..d]) * dt;
        fill_increments(&mut rng, sd, &mut dw);
        if !stepper.advance(&mut x, &dw) || !acc.is_finite() {
            return Ok(None);
        }
    }
    Ok(Some(out))
}

/// Strong-formulation ergodic cost: mean over paths of the time average
/// of r(X, α(X)) on [T/10, T]. The ladder repeats this on T/8, T/4, T/2.
#[allow(clippy::too_many_arguments)]
pub fn ergodic_cost_mc(
    cost: &RunningCost,
    b: &VectorField,
    feedback: Option<&FeedbackControl>,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<CostEstimate> {
    check_inputs(b, cost, feedback, x0)?;
    let n_steps = steps_for(horizon, dt)?;
    let rungs = ladder_steps(n_steps);
    let checkpoints: Vec<usize> = rungs.iter().flat_map(|&n| [burn_in(n), n]).collect();
    let per: Vec<Result<Option<Vec<f64>>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| running_cost_path(cost, b, feedback, x0, dt, &checkpoints, seed, p))
        .collect();
    let mut averages: Vec<Vec<f64>> = vec![Vec::with_capacity(n_paths); rungs.len()];
    let mut blown_up = 0;
    for r in per {
        match r? {
            Some(c) => {
                for (j, &n) in rungs.iter().enumerate() {
                    let span = (n - burn_in(n)) as f64 * dt;
                    averages[j].push((c[2 * j + 1] - c[2 * j]) / span);
                }
            }
            None => blown_up += 1,
        }
    }
    if averages[0].is_empty() {
        return Err(Error::NonFinite("every path blew up".into()));
    }
    let ladder = rungs
        .iter()
        .zip(&averages)
        .map(|(&n, a)| (n as f64 * dt, mean_se(a).0))
        .collect();
    let (value, std_error) = mean_se(averages.last().unwrap());
    Ok(CostEstimate {
        value,
        std_error,
        horizon,
        n_paths,
        dt,
        ladder,
        blown_up,
    })
}

/// (1/δτ) ln mean exp(δ ∫_{T/10}^T r dt), τ = 0.9T, in shifted log space,
/// with a jackknife standard error.
#[allow(clippy::too_many_arguments)]
pub fn risk_sensitive_cost_mc(
    cost: &RunningCost,
    delta_rs: f64,
    b: &VectorField,
    feedback: Option<&FeedbackControl>,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<CostEstimate> {
    if !(delta_rs > 0.0 && delta_rs.is_finite()) {
        return Err(Error::InvalidInput(format!("delta_rs must be positive, got {delta_rs}")));
    }
    check_inputs(b, cost, feedback, x0)?;
    let n_steps = steps_for(horizon, dt)?;
    let burn = burn_in(n_steps);
    let span = (n_steps - burn) as f64 * dt;
    let per: Vec<Result<Option<Vec<f64>>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| running_cost_path(cost, b, feedback, x0, dt, &[burn, n_steps], seed, p))
        .collect();
    let mut exponents = Vec::with_capacity(n_paths);
    let mut blown_up = 0;
    for r in per {
        match r? {
            Some(c) => exponents.push(delta_rs * (c[1] - c[0])),
            None => blown_up += 1,
        }
    }
    let n = exponents.len();
    if n == 0 {
        return Err(Error::NonFinite("every path blew up".into()));
    }
    let shift = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = exponents.iter().map(|e| (e - shift).exp()).collect();
    let total: f64 = w.iter().sum();
    let scale = 1.0 / (delta_rs * span);
    let value = (shift + (total / n as f64).ln()) * scale;
    let std_error = if n < 2 {
        0.0
    } else {
        let loo: Vec<f64> = w
            .iter()
            .map(|wi| (shift + ((total - wi).max(f64::MIN_POSITIVE) / (n - 1) as f64).ln()) * scale)
            .collect();
        let m = loo.iter().sum::<f64>() / n as f64;
        ((n - 1) as f64 / n as f64 * loo.iter().map(|t| (t - m) * (t - m)).sum::<f64>()).sqrt()
    };
    Ok(CostEstimate {
        value,
        std_error,
        horizon,
        n_paths,
        dt,
        ladder: vec![(horizon, value)],
        blown_up,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GirsanovWeights {
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub ess: f64,
}

/// exp(Σ α_k·ΔW_k − ½ Σ |α_k|² dt) per path; `alpha` and `increments` are
/// laid out `[path][step][dim]`.
pub fn girsanov_weights(alpha: &[f64], increments: &[f64], dim: usize, n_paths: usize, dt: f64) -> Result<GirsanovWeights> {
    if alpha.len() != increments.len() || dim == 0 || n_paths == 0 || alpha.len() % (dim * n_paths) != 0 {
        return Err(Error::InvalidInput("alpha and increment shapes disagree".into()));
    }
    let per_path = alpha.len() / n_paths;
    let log_weights: Vec<f64> = alpha
        .chunks(per_path)
        .zip(increments.chunks(per_path))
        .map(|(a, w)| {
            a.iter()
                .zip(w)
                .map(|(ai, wi)| ai * wi - 0.5 * ai * ai * dt)
                .sum::<f64>()
        })
        .collect();
    let weights: Vec<f64> = log_weights.iter().map(|l| l.exp()).collect();
    let ess = effective_sample_size(&weights);
    Ok(GirsanovWeights {
        weights,
        log_weights,
        ess,
    })
}

fn effective_sample_size(w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    s * s / s2
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakStrong {
    pub j_weak: f64,
    pub j_strong: f64,
    pub diff: f64,
    /// Standard error of the per-path paired difference.
    pub joint_std_error: f64,
    pub weight_mean: f64,
    pub weight_std_error: f64,
    pub ess: f64,
    pub warning: bool,
    pub n_paths: usize,
    pub horizon: f64,
}

struct PairedPath {
    weight: f64,
    weak: f64,
    strong: f64,
}

/// Strong: controlled paths. Weak: uncontrolled paths driven by the same
/// increments, cost r(X, α(X)) reweighted by the stochastic exponential of α(X).
#[allow(clippy::too_many_arguments)]
pub fn weak_strong_compare(
    cost: &RunningCost,
    b: &VectorField,
    feedback: &FeedbackControl,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<WeakStrong> {
    check_inputs(b, cost, Some(feedback), x0)?;
    let d = b.dim();
    let n_steps = steps_for(horizon, dt)?;
    let burn = burn_in(n_steps);
    let span = (n_steps - burn) as f64 * dt;
    let sd = dt.sqrt();
    let per: Vec<Result<Option<PairedPath>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p);
            let mut base = Stepper::new(b, None, dt);
            let mut ctrl = Stepper::new(b, Some(feedback), dt);
            let (mut x, mut y) = (x0.to_vec(), x0.to_vec());
            let mut alpha = vec![0.0; d];
            let mut dw = vec![0.0; d];
            let (mut log_w, mut weak, mut strong) = (0.0, 0.0, 0.0);
            for k in 0..n_steps {
                feedback.eval_into(&x, &mut alpha)?;
                ctrl.control(&y)?;
                if k >= burn {
                    weak += cost.value(&x, &alpha) * dt;
                    strong += cost.value(&y, &ctrl.alpha[..d]) * dt;
                }
                fill_increments(&mut rng, sd, &mut dw);
                for i in 0..d {
                    log_w += alpha[i] * dw[i] - 0.5 * alpha[i] * alpha[i] * dt;
                }
                if !(base.advance(&mut x, &dw) & ctrl.advance(&mut y, &dw)) {
                    return Ok(None);
                }
            }
            Ok(Some(PairedPath {
                weight: log_w.exp(),
                weak: weak / span,
                strong: strong / span,
            }))
        })
        .collect();
    let mut paths = Vec::with_capacity(n_paths);
    for r in per {
        if let Some(p) = r? {
            paths.push(p);
        }
    }
    if paths.is_empty() {
        return Err(Error::NonFinite("every path blew up".into()));
    }
    let weighted: Vec<f64> = paths.iter().map(|p| p.weight * p.weak).collect();
    let strong: Vec<f64> = paths.iter().map(|p| p.strong).collect();
    let paired: Vec<f64> = weighted.iter().zip(&strong).map(|(w, s)| w - s).collect();
    let weights: Vec<f64> = paths.iter().map(|p| p.weight).collect();
    let (j_weak, _) = mean_se(&weighted);
    let (j_strong, _) = mean_se(&strong);
    let (_, joint_std_error) = mean_se(&paired);
    let (weight_mean, weight_std_error) = mean_se(&weights);
    let ess = effective_sample_size(&weights);
    Ok(WeakStrong {
        j_weak,
        j_strong,
        diff: (j_weak - j_strong).abs(),
        joint_std_error,
        weight_mean,
        weight_std_error,
        ess,
        warning: ess < ESS_WARNING_FRACTION * paths.len() as f64,
        n_paths,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Expr, VarSet};

    fn field(src: &str) -> VectorField {
        VectorField::from_exprs(vec![Expr::parse(src, 1, VarSet::X).unwrap()])
    }

    fn cost(src: &str) -> RunningCost {
        RunningCost::from_expr(Expr::parse(src, 1, VarSet::XA).unwrap(), 1.0).unwrap()
    }

    fn tanh_feedback() -> FeedbackControl {
        FeedbackControl::new(1, 0.5, "-0.5 tanh x", |x, out| out[0] = -0.5 * x[0].tanh())
    }

    #[test]
    fn ladder_shape() {
        assert_eq!(ladder_steps(800), vec![100, 200, 400, 800]);
        assert_eq!(ladder_steps(30), vec![15, 30]);
        assert_eq!(ladder_steps(5), vec![5]);
    }

    #[test]
    fn constant_cost_is_exact() {
        let c = cost("2.5 + 0*x + 0*a");
        let est = ergodic_cost_mc(&c, &field("-x"), None, &[0.3], 2.0, 0.01, 16, 1).unwrap();
        assert!((est.value - 2.5).abs() < 1e-12 && est.std_error < 1e-12);
        let rs = risk_sensitive_cost_mc(&c, 0.7, &field("-x"), None, &[0.3], 2.0, 0.01, 16, 1).unwrap();
        assert!((rs.value - 2.5).abs() < 1e-12 && rs.std_error < 1e-12);
    }

    #[test]
    fn ou_quadratic_cost() {
        // stationary E x² = 1/2 for dX = −X dt + dW
        let est = ergodic_cost_mc(&cost("x^2 + 0*a"), &field("-x"), None, &[0.0], 50.0, 0.01, 200, 9).unwrap();
        assert!((est.value - 0.5).abs() < 4.0 * est.std_error + 0.01, "{est:?}");
        assert_eq!(est.ladder.len(), 4);
    }

    #[test]
    fn small_delta_matches_ergodic_cost() {
        let c = cost("0.5*a^2 + sin(x)^2");
        let f = tanh_feedback();
        let b = field("-x");
        let e = ergodic_cost_mc(&c, &b, Some(&f), &[0.0], 10.0, 0.01, 400, 4).unwrap();
        let r = risk_sensitive_cost_mc(&c, 1e-3, &b, Some(&f), &[0.0], 10.0, 0.01, 400, 4).unwrap();
        let joint = (e.std_error.powi(2) + r.std_error.powi(2)).sqrt();
        assert!((e.value - r.value).abs() <= 3.0 * joint, "{e:?} {r:?}");
    }

    #[test]
    fn girsanov_zero_alpha_unit_weights() {
        let g = girsanov_weights(&[0.0; 12], &[0.3; 12], 1, 3, 0.1).unwrap();
        assert!(g.weights.iter().all(|w| *w == 1.0));
        assert_eq!(g.ess, 3.0);
        assert!(girsanov_weights(&[0.0; 12], &[0.3; 10], 1, 3, 0.1).is_err());
    }

    #[test]
    fn girsanov_mean_one() {
        let ens = crate::simulate::simulate_paths(&field("-x"), None, &[0.0], 2.0, 0.01, 4000, 11).unwrap();
        let alpha: Vec<f64> = (0..ens.n_paths)
            .flat_map(|p| (0..ens.n_steps).map(move |k| (p, k)))
            .map(|(p, k)| -0.5 * ens.state(p, k)[0].tanh())
            .collect();
        let g = girsanov_weights(&alpha, &ens.brownian_increments, 1, ens.n_paths, ens.dt).unwrap();
        let (m, se) = mean_se(&g.weights);
        assert!((m - 1.0).abs() <= 4.0 * se, "{m} ± {se}");
    }

    #[test]
    fn weak_strong_zero_feedback_exact() {
        let c = cost("0.5*a^2 + sin(x)^2");
        let r = weak_strong_compare(&c, &field("-x"), &FeedbackControl::zero(1), &[0.5], 3.0, 0.01, 50, 2).unwrap();
        assert_eq!(r.j_weak, r.j_strong);
        assert_eq!(r.diff, 0.0);
        assert_eq!(r.joint_std_error, 0.0);
    }

    #[test]
    fn weak_strong_agree() {
        let c = cost("0.5*a^2 + sin(x)^2");
        let r = weak_strong_compare(&c, &field("-x"), &tanh_feedback(), &[0.0], 5.0, 0.01, 2000, 5).unwrap();
        assert!(r.diff <= 3.0 * r.joint_std_error, "{r:?}");
        assert!(!r.warning);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let c = cost("0.5*a^2 + sin(x)^2");
        let a = ergodic_cost_mc(&c, &field("-x"), Some(&tanh_feedback()), &[0.0], 2.0, 0.01, 30, 8).unwrap();
        let b = ergodic_cost_mc(&c, &field("-x"), Some(&tanh_feedback()), &[0.0], 2.0, 0.01, 30, 8).unwrap();
        assert_eq!(a, b);
    }
}
