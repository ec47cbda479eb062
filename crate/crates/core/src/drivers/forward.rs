//! Driver of the forward-performance problem with a closed convex constraint
//! set Π and market price of risk θ(x).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{finite_diff_gradient, ConvexSet, DomainBox, DriverSplit, VectorField, Witness};

#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub theta: VectorField,
    pub pi: ConvexSet,
    pub delta: f64,
}

impl ForwardModel {
    pub fn new(theta: VectorField, pi: ConvexSet, delta: f64) -> Result<Self> {
        pi.validate()?;
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidInput(format!("forward delta must be positive, got {delta}")));
        }
        if let Some(d) = pi.dim() {
            if d != theta.dim() {
                return Err(Error::InvalidInput(format!(
                    "constraint set has dimension {d}, theta has {}",
                    theta.dim()
                )));
            }
        }
        Ok(ForwardModel { theta, pi, delta })
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }

    fn shifted_costate(&self, theta: &[f64], z: &[f64]) -> Vec<f64> {
        theta.iter().zip(z).map(|(t, z)| (t + z) / self.delta).collect()
    }

    /// f(x, z) = ½δ² dist²(Π, (θ + z)/δ) − z·θ + ½|θ|².
    pub fn value(&self, x: &[f64], z: &[f64]) -> f64 {
        let theta = self.theta.eval(x);
        let y = self.shifted_costate(&theta, z);
        0.5 * self.delta * self.delta * self.pi.dist_sq(&y) - dot(z, &theta) + 0.5 * dot(&theta, &theta)
    }

    /// Σ_i (2θ_i − δ P_Π(y)_i) ∂_{x_j} θ_i with y = (θ + z)/δ.
    pub fn x_gradient_into(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let theta = self.theta.eval(x);
        let p = self.pi.project(&self.shifted_costate(&theta, z));
        let jac = self.theta.jacobian(x);
        for (j, o) in out.iter_mut().enumerate().take(d) {
            *o = (0..d)
                .map(|i| (2.0 * theta[i] - self.delta * p[i]) * jac[i * d + j])
                .sum();
        }
    }

    /// ∂_z f = δ(y − P_Π(y)) − θ.
    pub fn z_gradient_into(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        let theta = self.theta.eval(x);
        let y = self.shifted_costate(&theta, z);
        let p = self.pi.project(&y);
        for i in 0..out.len() {
            out[i] = self.delta * (y[i] - p[i]) - theta[i];
        }
    }

    pub fn into_driver(self) -> DriverSplit {
        let m = Arc::new(self);
        let (mg, mx, mz) = (m.clone(), m.clone(), m.clone());
        let label = format!("forward[{}, delta={}]", m.pi.name(), m.delta);
        DriverSplit::new(m.dim(), label, move |x, z| mg.value(x, z), |_, _| 0.0)
            .with_dx_g(move |x, z, out| mx.x_gradient_into(x, z, out))
            .with_dx_h(|_, _, out| out.fill(0.0))
            .with_dz_f(move |x, z, out| mz.z_gradient_into(x, z, out))
    }
}

pub fn build_forward_driver(theta: VectorField, pi: ConvexSet, delta: f64) -> Result<DriverSplit> {
    Ok(ForwardModel::new(theta, pi, delta)?.into_driver())
}

pub fn forward_driver_x_gradient(model: &ForwardModel, x: &[f64], z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.dim()];
    model.x_gradient_into(x, z, &mut out);
    out
}

/// Analytic ∂_x f against central differences of f.
#[derive(Debug, Clone, Serialize)]
pub struct GradientCheck {
    pub probes: usize,
    /// max of |analytic − fd|_∞ / max(|fd|_∞, 1)
    pub max_rel_error: f64,
    pub witness: Option<Witness>,
}

/// Uniform probes x in the box, z in the ball of radius `z_radius`.
pub fn check_x_gradient(model: &ForwardModel, domain: &DomainBox, z_radius: f64, n_probes: usize, seed: u64) -> GradientCheck {
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut witness = None;
    let mut analytic = vec![0.0; d];
    for _ in 0..n_probes {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-domain.half_width..domain.half_width)).collect();
        let z: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0) * z_radius / (d as f64).sqrt()).collect();
        model.x_gradient_into(&x, &z, &mut analytic);
        let h = 1e-6 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let fd = finite_diff_gradient(|xp| model.value(xp, &z), &x, h);
        let scale = fd.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let err = analytic.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        if err > worst || err.is_nan() {
            worst = err;
            witness = Some(Witness {
                z: Some(z.clone()),
                ..Witness::at(&x)
            });
        }
    }
    GradientCheck {
        probes: n_probes,
        max_rel_error: worst,
        witness,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Expr, VarSet};

    fn theta(src: &[&str]) -> VectorField {
        let d = src.len();
        VectorField::from_exprs(src.iter().map(|s| Expr::parse(s, d, VarSet::X).unwrap()).collect())
    }

    fn tanh_box() -> ForwardModel {
        let pi = ConvexSet::cube(vec![-1.0], vec![1.0]).unwrap();
        ForwardModel::new(theta(&["tanh(x)"]), pi, 1.0).unwrap()
    }

    #[test]
    fn reference_value() {
        assert!((tanh_box().value(&[0.0], &[3.0]) - 2.0).abs() < 1e-12);
        let zero = ForwardModel::new(theta(&["0"]), ConvexSet::ball(vec![0.0], 1.0).unwrap(), 0.5).unwrap();
        assert_eq!(zero.value(&[1.3], &[0.0]), 0.0);
    }

    #[test]
    fn reference_gradient() {
        let m = tanh_box();
        let g = forward_driver_x_gradient(&m, &[0.0], &[3.0]);
        assert!((g[0] + 1.0).abs() < 1e-8);
        let fd = finite_diff_gradient(|xp| m.value(xp, &[3.0]), &[0.0], 1e-6);
        assert!((fd[0] + 1.0).abs() < 1e-8);
        let constant = ForwardModel::new(theta(&["0.4", "-1"]), ConvexSet::WholeSpace, 1.0).unwrap();
        assert_eq!(forward_driver_x_gradient(&constant, &[0.2, 0.1], &[1.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn distance_term_is_nonnegative() {
        let m = ForwardModel::new(
            theta(&["sin(x1)", "x1*x2/4"]),
            ConvexSet::halfspace(vec![1.0, 2.0], -0.5).unwrap(),
            0.6,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let z = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let th = m.theta.eval(&x);
            let scale = 1.0 + dot(&z, &z) + dot(&th, &th);
            assert!(m.value(&x, &z) + dot(&z, &th) - 0.5 * dot(&th, &th) >= -1e-13 * scale);
        }
    }

    #[test]
    fn whole_space_is_linear_in_z() {
        let m = ForwardModel::new(theta(&["sin(x1)", "x2/2"]), ConvexSet::WholeSpace, 0.7).unwrap();
        let x = [0.3, -1.1];
        let th = m.theta.eval(&x);
        for z in [[0.0, 0.0], [1.0, -2.0], [5.0, 3.0]] {
            let want = -dot(&z, &th) + 0.5 * dot(&th, &th);
            assert!((m.value(&x, &z) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let sets = [
            ConvexSet::ball(vec![0.2, -0.1], 0.8).unwrap(),
            ConvexSet::cube(vec![-0.5, -1.0], vec![1.0, 0.5]).unwrap(),
            ConvexSet::halfspace(vec![1.0, 1.0], 0.3).unwrap(),
            ConvexSet::WholeSpace,
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for pi in sets {
            let m = ForwardModel::new(theta(&["sin(x1) + 0.2*x2", "0.5*cos(x2)"]), pi, 0.8).unwrap();
            for _ in 0..30 {
                let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let z = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let mut gx = [0.0; 2];
                m.x_gradient_into(&x, &z, &mut gx);
                let fx = finite_diff_gradient(|xp| m.value(xp, &z), &x, 1e-6);
                let mut gz = [0.0; 2];
                m.z_gradient_into(&x, &z, &mut gz);
                let fz = finite_diff_gradient(|zp| m.value(&x, zp), &z, 1e-6);
                for i in 0..2 {
                    assert!((gx[i] - fx[i]).abs() < 1e-5 * (1.0 + fx[i].abs()), "{gx:?} vs {fx:?}");
                    assert!((gz[i] - fz[i]).abs() < 1e-5 * (1.0 + fz[i].abs()), "{gz:?} vs {fz:?}");
                }
            }
        }
    }

    #[test]
    fn gradient_check_across_sets() {
        let dom = DomainBox::new(2, 3.0).unwrap();
        for pi in [
            ConvexSet::WholeSpace,
            ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(),
            ConvexSet::cube(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
            ConvexSet::halfspace(vec![1.0, -1.0], 0.2).unwrap(),
        ] {
            let m = ForwardModel::new(theta(&["tanh(x1) + 0.3*sin(x2)", "0.5*atan(x2)"]), pi, 1.0).unwrap();
            let c = check_x_gradient(&m, &dom, 3.0, 200, 1);
            assert!(c.max_rel_error < 1e-5, "{c:?}");
        }
    }
}
