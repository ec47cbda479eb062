use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg;
use crate::model::field::{fd_step, MatFn2, ScalarFn2, VecFn2};

/// Step for second differences: larger than [`fd_step`] to keep roundoff
/// (∝ ε/h²) below truncation error.
#[inline]
fn fd2_step(t: f64) -> f64 {
    1e-3 * (1.0 + t.abs())
}

/// Running cost r(x, a), uniformly convex in the action a.
#[derive(Clone)]
pub struct RunningCost {
    dim: usize,
    r: ScalarFn2,
    da_r: Option<VecFn2>,
    da2_r: Option<MatFn2>,
    dxda_r: Option<MatFn2>,
    convexity_modulus: f64,
    kappa: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    label: String,
}

impl fmt::Debug for RunningCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RunningCost")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("convexity_modulus", &self.convexity_modulus)
            .finish()
    }
}

impl RunningCost {
    /// `r` is called as `r(x, a)`. Rejects a non-positive convexity modulus:
    /// uniqueness of the minimizer relies on it.
    pub fn new<F>(dim: usize, label: impl Into<String>, convexity_modulus: f64, r: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(convexity_modulus > 0.0 && convexity_modulus.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "convexity modulus must be positive, got {convexity_modulus}"
            )));
        }
        Ok(RunningCost {
            dim,
            r: Arc::new(r),
            da_r: None,
            da2_r: None,
            dxda_r: None,
            convexity_modulus,
            kappa: None,
            label: label.into(),
        })
    }

    /// Cost from an expression over `x` and `a`.
    pub fn from_expr(r: Expr, convexity_modulus: f64) -> Result<Self> {
        let dim = r.dim();
        let label = r.source().to_string();
        RunningCost::new(dim, label, convexity_modulus, move |x, a| r.eval(x, &[], a))
    }

    pub fn with_da_r<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.da_r = Some(Arc::new(f));
        self
    }

    pub fn with_da2_r<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.da2_r = Some(Arc::new(f));
        self
    }

    /// Mixed partial, row-major with rows indexing x and columns indexing a.
    pub fn with_dxda_r<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.dxda_r = Some(Arc::new(f));
        self
    }

    /// Declared growth bound κ with |r(x, a)| ≤ κ(|a|).
    pub fn with_kappa<F>(mut self, kappa: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.kappa = Some(Arc::new(kappa));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn convexity_modulus(&self) -> f64 {
        self.convexity_modulus
    }

    #[inline]
    pub fn value(&self, x: &[f64], a: &[f64]) -> f64 {
        (self.r)(x, a)
    }

    pub fn grad_a_into(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
        if let Some(f) = &self.da_r {
            return f(x, a, out);
        }
        // five-point stencil: the minimizer inherits this error, so second
        // order (~1e-8) is not enough
        let mut probe = a.to_vec();
        let mut at = |i: usize, s: f64, h: f64| {
            probe[i] = a[i] + s * h;
            let v = (self.r)(x, &probe);
            probe[i] = a[i];
            v
        };
        for i in 0..self.dim {
            let h = fd2_step(a[i]);
            out[i] = (8.0 * (at(i, 1.0, h) - at(i, -1.0, h)) - (at(i, 2.0, h) - at(i, -2.0, h))) / (12.0 * h);
        }
    }

    pub fn grad_a(&self, x: &[f64], a: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.grad_a_into(x, a, &mut out);
        out
    }

    /// ∂_a² r, row-major.
    pub fn hess_a_into(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
        let d = self.dim;
        if let Some(f) = &self.da2_r {
            return f(x, a, out);
        }
        if self.da_r.is_some() {
            let mut probe = a.to_vec();
            let mut up = vec![0.0; d];
            let mut down = vec![0.0; d];
            for j in 0..d {
                let h = fd_step(a[j]);
                probe[j] = a[j] + h;
                self.grad_a_into(x, &probe, &mut up);
                probe[j] = a[j] - h;
                self.grad_a_into(x, &probe, &mut down);
                probe[j] = a[j];
                for i in 0..d {
                    out[i * d + j] = (up[i] - down[i]) / (2.0 * h);
                }
            }
            symmetrize(out, d);
            return;
        }
        let r0 = (self.r)(x, a);
        let mut p = a.to_vec();
        for i in 0..d {
            let hi = fd2_step(a[i]);
            p[i] = a[i] + hi;
            let up = (self.r)(x, &p);
            p[i] = a[i] - hi;
            let down = (self.r)(x, &p);
            p[i] = a[i];
            out[i * d + i] = (up - 2.0 * r0 + down) / (hi * hi);
            for j in (i + 1)..d {
                let hj = fd2_step(a[j]);
                let mut corner = |si: f64, sj: f64| {
                    p[i] = a[i] + si * hi;
                    p[j] = a[j] + sj * hj;
                    let v = (self.r)(x, &p);
                    p[i] = a[i];
                    p[j] = a[j];
                    v
                };
                let m = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                    / (4.0 * hi * hj);
                out[i * d + j] = m;
                out[j * d + i] = m;
            }
        }
    }

    pub fn hess_a(&self, x: &[f64], a: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        self.hess_a_into(x, a, &mut out);
        out
    }

    /// ∂_a∂_x r with rows indexing x and columns indexing a.
    pub fn mixed_xa(&self, x: &[f64], a: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        if let Some(f) = &self.dxda_r {
            f(x, a, &mut out);
            return out;
        }
        if self.da_r.is_some() {
            let mut xp = x.to_vec();
            let mut up = vec![0.0; d];
            let mut down = vec![0.0; d];
            for j in 0..d {
                let h = fd_step(x[j]);
                xp[j] = x[j] + h;
                self.grad_a_into(&xp, a, &mut up);
                xp[j] = x[j] - h;
                self.grad_a_into(&xp, a, &mut down);
                xp[j] = x[j];
                for k in 0..d {
                    out[j * d + k] = (up[k] - down[k]) / (2.0 * h);
                }
            }
            return out;
        }
        let mut xp = x.to_vec();
        let mut ap = a.to_vec();
        for j in 0..d {
            let hx = fd2_step(x[j]);
            for k in 0..d {
                let ha = fd2_step(a[k]);
                let mut corner = |sx: f64, sa: f64| {
                    xp[j] = x[j] + sx * hx;
                    ap[k] = a[k] + sa * ha;
                    let v = (self.r)(&xp, &ap);
                    xp[j] = x[j];
                    ap[k] = a[k];
                    v
                };
                out[j * d + k] = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
                    + corner(-1.0, -1.0))
                    / (4.0 * hx * ha);
            }
        }
        out
    }

    /// Spot-checks uniform convexity and the declared growth bound at the
    /// given probes `(x, a)`. Returns the first violation found.
    pub fn check_invariants(&self, probes: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
        for (x, a) in probes {
            let hess = self.hess_a(x, a);
            let lam = linalg::sym_min_eigenvalue(&hess, self.dim);
            // second differences carry ~1e-6 relative noise
            if lam < self.convexity_modulus * (1.0 - 1e-5) - 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "cost convexity violated at x = {x:?}, a = {a:?}: smallest eigenvalue {lam} < modulus {}",
                    self.convexity_modulus
                )));
            }
            if let Some(kappa) = &self.kappa {
                let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                let r = self.value(x, a);
                if !(r.abs() <= kappa(norm)) {
                    return Err(Error::InvalidInput(format!(
                        "cost growth bound violated at x = {x:?}, a = {a:?}: |r| = {} > kappa(|a|) = {}",
                        r.abs(),
                        kappa(norm)
                    )));
                }
            }
        }
        Ok(())
    }
}

fn symmetrize(m: &mut [f64], d: usize) {
    for i in 0..d {
        for j in (i + 1)..d {
            let s = 0.5 * (m[i * d + j] + m[j * d + i]);
            m[i * d + j] = s;
            m[j * d + i] = s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::VarSet;

    #[test]
    fn rejects_nonpositive_modulus() {
        assert!(RunningCost::new(1, "bad", 0.0, |_, a| a[0] * a[0]).is_err());
        assert!(RunningCost::new(1, "bad", -1.0, |_, a| a[0] * a[0]).is_err());
    }

    #[test]
    fn fd_partials_match_analytic() {
        let e = Expr::parse("0.5*(a1^2 + a2^2) + x1*a2 + sin(x2)*a1", 2, VarSet::XA).unwrap();
        let cost = RunningCost::from_expr(e, 1.0).unwrap();
        let x = [0.4, -0.7];
        let a = [1.1, 0.3];
        let g = cost.grad_a(&x, &a);
        assert!((g[0] - (1.1 + (-0.7f64).sin())).abs() < 1e-8);
        assert!((g[1] - (0.3 + 0.4)).abs() < 1e-8);
        let h = cost.hess_a(&x, &a);
        for (p, q) in h.iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert!((p - q).abs() < 1e-5);
        }
        // rows x, cols a: ∂x1∂a2 = 1, ∂x2∂a1 = cos(x2)
        let m = cost.mixed_xa(&x, &a);
        let expect = [0.0, 1.0, (-0.7f64).cos(), 0.0];
        for (p, q) in m.iter().zip(expect) {
            assert!((p - q).abs() < 1e-5, "{m:?}");
        }
    }

    #[test]
    fn invariant_spot_check() {
        let e = Expr::parse("0.5*a^2 + sin(x)^2", 1, VarSet::XA).unwrap();
        let cost = RunningCost::from_expr(e, 1.0)
            .unwrap()
            .with_kappa(|t| 1.0 + 0.5 * t * t);
        let probes: Vec<_> = (0..20)
            .map(|i| (vec![i as f64 * 0.3 - 3.0], vec![2.0 - 0.2 * i as f64]))
            .collect();
        cost.check_invariants(&probes).unwrap();

        let strict = RunningCost::from_expr(Expr::parse("0.5*a^2", 1, VarSet::XA).unwrap(), 2.0).unwrap();
        assert!(strict.check_invariants(&probes).is_err());
    }
}
