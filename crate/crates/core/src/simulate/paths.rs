use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{PathEnsemble, VectorField, Witness};
use crate::simulate::{fill_increments, path_rng, steps_for, FeedbackControl, Stepper};

/// Euler–Maruyama ensemble X_{k+1} = X_k + (b + α)(X_k) dt + ΔW_k with the
/// increments stored alongside the states.
pub fn simulate_paths(
    b: &VectorField,
    feedback: Option<&FeedbackControl>,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let d = b.dim();
    if x0.len() != d || feedback.is_some_and(|f| f.dim() != d) {
        return Err(Error::InvalidInput("dimension mismatch between drift, start and feedback".into()));
    }
    let n_steps = steps_for(horizon, dt)?;
    let sd = dt.sqrt();
    let per: Vec<Result<(Vec<f64>, Vec<f64>, bool)>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p);
            let mut states = vec![f64::NAN; (n_steps + 1) * d];
            let mut incs = vec![0.0; n_steps * d];
            fill_increments(&mut rng, sd, &mut incs);
            let mut stepper = Stepper::new(b, feedback, dt);
            let mut x = x0.to_vec();
            states[..d].copy_from_slice(&x);
            for k in 0..n_steps {
                stepper.control(&x)?;
                if !stepper.advance(&mut x, &incs[k * d..(k + 1) * d]) {
                    return Ok((states, incs, true));
                }
                states[(k + 1) * d..(k + 2) * d].copy_from_slice(&x);
            }
            Ok((states, incs, false))
        })
        .collect();
    let mut ens = PathEnsemble {
        n_paths,
        n_steps,
        dim: d,
        dt,
        seed,
        start: x0.to_vec(),
        states: Vec::with_capacity(n_paths * (n_steps + 1) * d),
        brownian_increments: Vec::with_capacity(n_paths * n_steps * d),
        blown_up: Vec::new(),
    };
    for (p, r) in per.into_iter().enumerate() {
        let (s, i, blown) = r?;
        ens.states.extend(s);
        ens.brownian_increments.extend(i);
        if blown {
            ens.blown_up.push(p);
        }
    }
    Ok(ens)
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicityCheck {
    pub holds: bool,
    /// max over pairs and times of |X_t − X̄_t|² / (e^{−2δ̂t} |x − x̄|²).
    pub worst_ratio: f64,
    pub witness: Option<Witness>,
    pub tolerance: f64,
}

/// Shared-noise coupling test of |X^x_t − X^x̄_t|² ≤ e^{−2δ̂t}|x − x̄|²,
/// with multiplicative slack 1 + 10·dt for the Euler scheme.
pub fn check_exponential_ergodicity(
    b: &VectorField,
    delta_hat: f64,
    pairs: &[(Vec<f64>, Vec<f64>)],
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<ErgodicityCheck> {
    let d = b.dim();
    let n_steps = steps_for(horizon, dt)?;
    let sd = dt.sqrt();
    let ratios: Vec<Result<f64>> = pairs
        .par_iter()
        .enumerate()
        .map(|(p, (x, xb))| {
            if x.len() != d || xb.len() != d {
                return Err(Error::InvalidInput("pair dimension mismatch".into()));
            }
            let d0: f64 = x.iter().zip(xb).map(|(a, c)| (a - c) * (a - c)).sum();
            if d0 == 0.0 {
                return Err(Error::InvalidInput(format!("degenerate pair at {x:?}")));
            }
            let mut rng = path_rng(seed, p);
            let mut dw = vec![0.0; d];
            let (mut s1, mut s2) = (Stepper::new(b, None, dt), Stepper::new(b, None, dt));
            let (mut a, mut c) = (x.clone(), xb.clone());
            let mut worst: f64 = 1.0;
            for k in 1..=n_steps {
                fill_increments(&mut rng, sd, &mut dw);
                let ok = s1.advance(&mut a, &dw) & s2.advance(&mut c, &dw);
                if !ok {
                    return Ok(f64::INFINITY);
                }
                let dist: f64 = a.iter().zip(&c).map(|(u, v)| (u - v) * (u - v)).sum();
                let t = k as f64 * dt;
                worst = worst.max(dist / ((-2.0 * delta_hat * t).exp() * d0));
            }
            Ok(worst)
        })
        .collect();
    let tolerance = 10.0 * dt;
    let mut worst: f64 = 0.0;
    let mut witness = None;
    for ((x, xb), r) in pairs.iter().zip(ratios) {
        let r = r?;
        if r > worst || r.is_nan() {
            worst = r;
            witness = Some(Witness::pair(x, xb));
        }
    }
    Ok(ErgodicityCheck {
        holds: worst <= 1.0 + tolerance,
        worst_ratio: worst,
        witness,
        tolerance,
    })
}
