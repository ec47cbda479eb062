//! Pathwise checks of the Markovian identity Y = u(X), Z = v(X).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DriverSplit, ProblemSpec, SolveReport};
use crate::simulate::{fill_increments, mean_se, path_rng, steps_for, Stepper, BURN_IN_FRACTION};

/// Clipping above this fraction of evaluations raises the warning flag.
pub const CLIP_WARNING_FRACTION: f64 = 0.01;
const N_BATCHES: usize = 20;
const READ_TIMES: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct BsdeResidual {
    pub value: f64,
    pub clipped_steps: usize,
    pub clipped_fraction: f64,
    pub warning: bool,
}

/// max over the given step indices k of
/// |u(X_k) − u(X_N) − Σ_{j≥k} f(X_j, v(X_j)) dt + λ(T − t_k) + Σ_{j≥k} v(X_j)·ΔW_j|.
/// An empty `t_grid` means every step.
pub fn bsde_residual(
    report: &SolveReport,
    driver: &DriverSplit,
    states: &[f64],
    increments: &[f64],
    dt: f64,
    t_grid: &[usize],
) -> Result<BsdeResidual> {
    let d = report.u.grid.dim;
    let n_steps = increments.len() / d;
    if states.len() != (n_steps + 1) * d || increments.len() != n_steps * d {
        return Err(Error::InvalidInput("path and increment lengths disagree".into()));
    }
    if let Some(&k) = t_grid.iter().find(|&&k| k > n_steps) {
        return Err(Error::InvalidInput(format!("time index {k} beyond the path ({n_steps} steps)")));
    }
    let mut want = vec![t_grid.is_empty(); n_steps + 1];
    for &k in t_grid {
        want[k] = true;
    }
    let mut u = [0.0; 1];
    let mut v = [0.0; 2];
    let mut clipped = 0usize;
    let x_n = &states[n_steps * d..];
    clipped += report.u.interpolate_into(x_n, &mut u) as usize;
    let u_n = u[0];
    let horizon = n_steps as f64 * dt;
    // backward sums of f dt − v·ΔW
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    for k in (0..=n_steps).rev() {
        let x = &states[k * d..(k + 1) * d];
        if k < n_steps {
            clipped += report.v.interpolate_into(x, &mut v[..d]) as usize;
            let dw = &increments[k * d..(k + 1) * d];
            let vdw: f64 = (0..d).map(|i| v[i] * dw[i]).sum();
            acc += driver.value(x, &v[..d]) * dt - vdw;
        }
        if want[k] {
            clipped += report.u.interpolate_into(x, &mut u) as usize;
            let t = k as f64 * dt;
            let r = u[0] - u_n - acc + report.lambda * (horizon - t);
            worst = worst.max(r.abs());
            if r.is_nan() {
                worst = f64::NAN;
            }
        }
    }
    let evals = n_steps + 1 + want.iter().filter(|w| **w).count();
    let fraction = clipped as f64 / evals as f64;
    Ok(BsdeResidual {
        value: worst,
        clipped_steps: clipped,
        clipped_fraction: fraction,
        warning: fraction > CLIP_WARNING_FRACTION,
    })
}

/// Mean over paths of the BSDE residual at each time step in `dts`, all
/// driven by one fine Brownian path per sample (coarse increments are sums
/// of fine ones). Residuals are read at the times jT/10, j < 10.
pub fn bsde_residual_ladder(
    report: &SolveReport,
    spec: &ProblemSpec,
    driver: &DriverSplit,
    horizon: f64,
    dts: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let d = spec.dim();
    let fine = dts.iter().cloned().fold(f64::INFINITY, f64::min);
    let n_fine = steps_for(horizon, fine)?;
    let mut ratios = Vec::new();
    for &dt in dts {
        let r = (dt / fine).round() as usize;
        if r == 0 || ((r as f64) * fine - dt).abs() > 1e-9 * dt || n_fine % (READ_TIMES * r) != 0 {
            return Err(Error::InvalidInput(format!(
                "time step {dt} is not compatible with the finest step {fine} and horizon {horizon}"
            )));
        }
        ratios.push(r);
    }
    let per_path: Vec<Result<Vec<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p);
            let mut fine_inc = vec![0.0; n_fine * d];
            fill_increments(&mut rng, fine.sqrt(), &mut fine_inc);
            let mut out = Vec::with_capacity(ratios.len());
            for (&dt, &r) in dts.iter().zip(&ratios) {
                let n = n_fine / r;
                let mut inc = vec![0.0; n * d];
                for k in 0..n {
                    for j in 0..r {
                        for i in 0..d {
                            inc[k * d + i] += fine_inc[(k * r + j) * d + i];
                        }
                    }
                }
                let mut states = vec![0.0; (n + 1) * d];
                states[..d].copy_from_slice(&spec.x0);
                let mut stepper = Stepper::new(&spec.b, None, dt);
                for k in 0..n {
                    let (head, tail) = states.split_at_mut((k + 1) * d);
                    tail[..d].copy_from_slice(&head[k * d..]);
                    stepper.advance(&mut tail[..d], &inc[k * d..(k + 1) * d]);
                }
                let grid: Vec<usize> = (0..READ_TIMES).map(|j| j * n / READ_TIMES).collect();
                out.push(bsde_residual(report, driver, &states, &inc, dt, &grid)?.value);
            }
            Ok(out)
        })
        .collect();
    let mut sums = vec![0.0; dts.len()];
    for r in per_path {
        for (s, v) in sums.iter_mut().zip(r?) {
            *s += v;
        }
    }
    Ok(dts.iter().zip(sums).map(|(&dt, s)| (dt, s / n_paths as f64)).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaCheck {
    pub lambda_mc: f64,
    /// Batch-means standard error.
    pub std_error: f64,
    pub lambda: f64,
    pub diff: f64,
    pub horizon: f64,
    pub dt: f64,
    pub clipped_fraction: f64,
}

/// Time average of f(X, v(X)) along one long path from x₀ after burn-in.
pub fn ergodic_lambda_check(
    report: &SolveReport,
    spec: &ProblemSpec,
    driver: &DriverSplit,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<LambdaCheck> {
    let d = spec.dim();
    let n_steps = steps_for(horizon, dt)?;
    let burn = (BURN_IN_FRACTION * n_steps as f64).round() as usize;
    let kept = n_steps - burn;
    if kept < N_BATCHES {
        return Err(Error::InvalidInput("horizon too short for batch means".into()));
    }
    let mut rng = path_rng(seed, 0);
    let mut stepper = Stepper::new(&spec.b, None, dt);
    let mut x = spec.x0.clone();
    let mut v = vec![0.0; d];
    let mut dw = vec![0.0; d];
    let mut batch_sums = vec![0.0; N_BATCHES];
    let mut batch_counts = vec![0usize; N_BATCHES];
    let mut clipped = 0usize;
    let sd = dt.sqrt();
    for k in 0..n_steps {
        if k >= burn {
            clipped += report.v.interpolate_into(&x, &mut v) as usize;
            let f = driver.value(&x, &v);
            let b = (k - burn) * N_BATCHES / kept;
            batch_sums[b] += f;
            batch_counts[b] += 1;
        }
        fill_increments(&mut rng, sd, &mut dw);
        if !stepper.advance(&mut x, &dw) {
            return Err(Error::NonFinite(format!("ergodic path blew up at step {k}")));
        }
    }
    let means: Vec<f64> = batch_sums.iter().zip(&batch_counts).map(|(s, &c)| s / c as f64).collect();
    let total = batch_sums.iter().sum::<f64>() / kept as f64;
    let (_, se) = mean_se(&means);
    Ok(LambdaCheck {
        lambda_mc: total,
        std_error: se,
        lambda: report.lambda,
        diff: (total - report.lambda).abs(),
        horizon,
        dt,
        clipped_fraction: clipped as f64 / kept as f64,
    })
}
