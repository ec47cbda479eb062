use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;

/// `x ↦ out` for vector-valued maps on ℝ^d.
pub type VecFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `x ↦ out` for d×d matrices stored row-major.
pub type MatFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `(x, z) ↦ value`.
pub type ScalarFn2 = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
/// `(x, z) ↦ out` for vector-valued partials.
pub type VecFn2 = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `(x, z) ↦ out` for d×d matrices stored row-major.
pub type MatFn2 = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Default finite-difference step at coordinate value `t`.
#[inline]
pub fn fd_step(t: f64) -> f64 {
    1e-4 * (1.0 + t.abs())
}

/// Central-difference gradient of a scalar field with a uniform step.
pub fn finite_diff_gradient<F>(field: F, x: &[f64], h_step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(h_step > 0.0, "finite-difference step must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h_step;
            let up = field(&probe);
            probe[i] = x[i] - h_step;
            let down = field(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h_step)
        })
        .collect()
}

/// Central-difference gradient using the per-coordinate default step.
pub fn fd_gradient<F>(field: F, x: &[f64], out: &mut [f64])
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        probe[i] = x[i] + h;
        let up = field(&probe);
        probe[i] = x[i] - h;
        let down = field(&probe);
        probe[i] = x[i];
        out[i] = (up - down) / (2.0 * h);
    }
}

/// A vector field b: ℝ^d → ℝ^d with an optional analytic Jacobian.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    eval: VecFn,
    jacobian: Option<MatFn>,
    label: String,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl VectorField {
    pub fn new<F>(dim: usize, label: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        assert!(dim >= 1, "dimension must be positive");
        VectorField {
            dim,
            eval: Arc::new(eval),
            jacobian: None,
            label: label.into(),
        }
    }

    pub fn with_jacobian<F>(mut self, jac: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    /// Linear field x ↦ A·x with `a` row-major.
    pub fn linear(dim: usize, a: Vec<f64>) -> Self {
        assert_eq!(a.len(), dim * dim);
        let a_eval = a.clone();
        VectorField::new(dim, format!("linear{a:?}"), move |x, out| {
            for i in 0..dim {
                out[i] = (0..dim).map(|j| a_eval[i * dim + j] * x[j]).sum();
            }
        })
        .with_jacobian(move |_, out| out.copy_from_slice(&a))
    }

    /// x ↦ c·x.
    pub fn scalar_linear(dim: usize, c: f64) -> Self {
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            a[i * dim + i] = c;
        }
        VectorField::linear(dim, a)
    }

    pub fn constant(value: Vec<f64>) -> Self {
        let dim = value.len();
        VectorField::new(dim, format!("const{value:?}"), move |_, out| {
            out.copy_from_slice(&value)
        })
        .with_jacobian(|_, out| out.fill(0.0))
    }

    /// One expression per component, each over `x` only.
    pub fn from_exprs(exprs: Vec<Expr>) -> Self {
        let dim = exprs.len();
        let label = exprs
            .iter()
            .map(|e| e.source().to_string())
            .collect::<Vec<_>>()
            .join(", ");
        VectorField::new(dim, format!("[{label}]"), move |x, out| {
            for (o, e) in out.iter_mut().zip(&exprs) {
                *o = e.eval(x, &[], &[]);
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }

    /// Jacobian `J[i][j] = ∂b_i/∂x_j`, row-major. Falls back to central
    /// differences when no analytic Jacobian was supplied.
    pub fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.jacobian {
            Some(jac) => jac(x, out),
            None => self.fd_jacobian_into(x, out),
        }
    }

    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        self.jacobian_into(x, &mut out);
        out
    }

    pub fn fd_jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let mut probe = x.to_vec();
        let mut up = vec![0.0; d];
        let mut down = vec![0.0; d];
        for j in 0..d {
            let h = fd_step(x[j]);
            probe[j] = x[j] + h;
            self.eval_into(&probe, &mut up);
            probe[j] = x[j] - h;
            self.eval_into(&probe, &mut down);
            probe[j] = x[j];
            for i in 0..d {
                out[i * d + j] = (up[i] - down[i]) / (2.0 * h);
            }
        }
    }

    /// The field c·b.
    pub fn scaled(&self, c: f64) -> VectorField {
        let inner = self.eval.clone();
        let jac = self.jacobian.clone();
        let mut out = VectorField::new(self.dim, format!("{c}*({})", self.label), move |x, o| {
            inner(x, o);
            o.iter_mut().for_each(|v| *v *= c);
        });
        if let Some(j) = jac {
            out = out.with_jacobian(move |x, o| {
                j(x, o);
                o.iter_mut().for_each(|v| *v *= c);
            });
        }
        out
    }
}

/// Driver f = g + h with optional analytic partials.
#[derive(Clone)]
pub struct DriverSplit {
    dim: usize,
    g: ScalarFn2,
    h: ScalarFn2,
    dx_g: Option<VecFn2>,
    dx_h: Option<VecFn2>,
    dz_f: Option<VecFn2>,
    label: String,
}

impl fmt::Debug for DriverSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriverSplit")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("dx_g", &self.dx_g.is_some())
            .field("dx_h", &self.dx_h.is_some())
            .field("dz_f", &self.dz_f.is_some())
            .finish()
    }
}

impl DriverSplit {
    pub fn new<G, H>(dim: usize, label: impl Into<String>, g: G, h: H) -> Self
    where
        G: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        H: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        DriverSplit {
            dim,
            g: Arc::new(g),
            h: Arc::new(h),
            dx_g: None,
            dx_h: None,
            dz_f: None,
            label: label.into(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        DriverSplit::new(dim, "0", |_, _| 0.0, |_, _| 0.0)
            .with_dx_g(|_, _, o| o.fill(0.0))
            .with_dx_h(|_, _, o| o.fill(0.0))
            .with_dz_f(|_, _, o| o.fill(0.0))
    }

    /// f ≡ c, carried in the h component.
    pub fn constant(dim: usize, c: f64) -> Self {
        DriverSplit::new(dim, format!("{c}"), |_, _| 0.0, move |_, _| c)
            .with_dx_g(|_, _, o| o.fill(0.0))
            .with_dx_h(|_, _, o| o.fill(0.0))
            .with_dz_f(|_, _, o| o.fill(0.0))
    }

    pub fn from_exprs(g: Expr, h: Expr) -> Self {
        assert_eq!(g.dim(), h.dim());
        let dim = g.dim();
        let label = format!("g = {}; h = {}", g.source(), h.source());
        DriverSplit::new(
            dim,
            label,
            move |x, z| g.eval(x, z, &[]),
            move |x, z| h.eval(x, z, &[]),
        )
    }

    pub fn with_dx_g<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.dx_g = Some(Arc::new(f));
        self
    }

    pub fn with_dx_h<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.dx_h = Some(Arc::new(f));
        self
    }

    pub fn with_dz_f<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.dz_f = Some(Arc::new(f));
        self
    }

    pub(crate) fn with_dx_g_arc(mut self, f: Option<VecFn2>) -> Self {
        self.dx_g = f;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dx_g_fn(&self) -> Option<VecFn2> {
        self.dx_g.clone()
    }

    #[inline]
    pub fn g(&self, x: &[f64], z: &[f64]) -> f64 {
        (self.g)(x, z)
    }

    #[inline]
    pub fn h(&self, x: &[f64], z: &[f64]) -> f64 {
        (self.h)(x, z)
    }

    /// f(x, z) = g(x, z) + h(x, z), unchecked.
    #[inline]
    pub fn value(&self, x: &[f64], z: &[f64]) -> f64 {
        (self.g)(x, z) + (self.h)(x, z)
    }

    pub fn dx_g_into(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        match &self.dx_g {
            Some(f) => f(x, z, out),
            None => fd_gradient(|xp| (self.g)(xp, z), x, out),
        }
    }

    pub fn dx_h_into(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        match &self.dx_h {
            Some(f) => f(x, z, out),
            None => fd_gradient(|xp| (self.h)(xp, z), x, out),
        }
    }

    pub fn dx_g(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.dx_g_into(x, z, &mut out);
        out
    }

    pub fn dx_h(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.dx_h_into(x, z, &mut out);
        out
    }

    pub fn dx_f(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let mut g = self.dx_g(x, z);
        let h = self.dx_h(x, z);
        g.iter_mut().zip(h).for_each(|(a, b)| *a += b);
        g
    }

    pub fn dz_f_into(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        match &self.dz_f {
            Some(f) => f(x, z, out),
            None => fd_gradient(|zp| self.value(x, zp), z, out),
        }
    }

    pub fn dz_f(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.dz_f_into(x, z, &mut out);
        out
    }

    /// The driver f + c; the constant is added to h so ∂_x g is untouched.
    pub fn shifted(&self, c: f64) -> DriverSplit {
        let h = self.h.clone();
        DriverSplit {
            dim: self.dim,
            g: self.g.clone(),
            h: Arc::new(move |x, z| h(x, z) + c),
            dx_g: self.dx_g.clone(),
            dx_h: self.dx_h.clone(),
            dz_f: self.dz_f.clone(),
            label: format!("{} + {c}", self.label),
        }
    }
}

/// f(x, z) = g(x, z) + h(x, z), rejecting non-finite results.
pub fn eval_driver(driver: &DriverSplit, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.iter().chain(z).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "driver arguments must be finite (x = {x:?}, z = {z:?})"
        )));
    }
    let v = driver.value(x, z);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::DriverOverflow {
            x: x.to_vec(),
            z: z.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::VarSet;

    fn benchmark_driver() -> DriverSplit {
        DriverSplit::from_exprs(
            Expr::parse("-tanh(x)*z^3", 1, VarSet::XZ).unwrap(),
            Expr::parse("cos(x)", 1, VarSet::XZ).unwrap(),
        )
    }

    #[test]
    fn eval_driver_examples() {
        assert_eq!(eval_driver(&DriverSplit::zero(1), &[0.3], &[2.0]).unwrap(), 0.0);
        let f = benchmark_driver();
        assert_eq!(eval_driver(&f, &[0.0], &[2.0]).unwrap(), 1.0);
        let expected = -(1.0f64).tanh() + (1.0f64).cos();
        assert!((eval_driver(&f, &[1.0], &[1.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - (-0.221)).abs() < 1e-3);
    }

    #[test]
    fn eval_driver_rejects_overflow() {
        let f = DriverSplit::new(1, "exp", |_, z| z[0].exp(), |_, _| 0.0);
        match eval_driver(&f, &[0.0], &[1e4]) {
            Err(Error::DriverOverflow { z, .. }) => assert_eq!(z, vec![1e4]),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn eval_driver_is_deterministic() {
        let f = benchmark_driver();
        let a = eval_driver(&f, &[0.37], &[-1.2]).unwrap();
        let b = eval_driver(&f, &[0.37], &[-1.2]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn finite_diff_examples() {
        let g = finite_diff_gradient(|_| 4.2, &[1.0, -2.0], 1e-4);
        assert_eq!(g, vec![0.0, 0.0]);
        let g = finite_diff_gradient(|x| x[0] * x[0], &[3.0], 1e-4);
        assert!((g[0] - 6.0).abs() < 1e-6);
        let g = finite_diff_gradient(|x| x[0].sin(), &[0.0], 1e-4);
        assert!((g[0] - 0.0f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn jacobian_fallback_matches_analytic() {
        let a = vec![-1.0, 0.5, 0.2, -2.0];
        let lin = VectorField::linear(2, a.clone());
        let raw = VectorField::new(2, "raw", move |x, o| {
            o[0] = a[0] * x[0] + a[1] * x[1];
            o[1] = a[2] * x[0] + a[3] * x[1];
        });
        let x = [0.3, -1.7];
        let ja = lin.jacobian(&x);
        let jf = raw.jacobian(&x);
        for (p, q) in ja.iter().zip(&jf) {
            assert!((p - q).abs() <= 1e-5 * (1.0 + p.abs()));
        }
    }
}
