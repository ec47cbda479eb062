//! Banded linear operators and the solvers registered for them.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::registry::Registry;

/// Sparse operator stored by diagonals: row `i` has entry `coeffs[i*k + s]`
/// in column `i + offsets[s]`. Entries pointing outside the matrix must be 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BandOperator {
    pub n: usize,
    pub offsets: Vec<isize>,
    pub coeffs: Vec<f64>,
}

impl BandOperator {
    pub fn new(n: usize, offsets: Vec<isize>) -> Self {
        let k = offsets.len();
        BandOperator {
            n,
            offsets,
            coeffs: vec![0.0; n * k],
        }
    }

    pub fn width(&self) -> usize {
        self.offsets.len()
    }

    pub fn lower(&self) -> usize {
        self.offsets.iter().map(|&o| (-o).max(0) as usize).max().unwrap_or(0)
    }

    pub fn upper(&self) -> usize {
        self.offsets.iter().map(|&o| o.max(0) as usize).max().unwrap_or(0)
    }

    fn slot(&self, off: isize) -> usize {
        self.offsets
            .iter()
            .position(|&o| o == off)
            .unwrap_or_else(|| panic!("offset {off} not in band"))
    }

    /// Adds `v` to entry (row, row + off).
    pub fn add(&mut self, row: usize, off: isize, v: f64) {
        let s = self.slot(off);
        let k = self.width();
        self.coeffs[row * k + s] += v;
    }

    pub fn entry(&self, row: usize, off: isize) -> f64 {
        self.coeffs[row * self.width() + self.slot(off)]
    }

    /// Copy with `shift` added to the diagonal.
    pub fn shifted(&self, shift: f64) -> BandOperator {
        let mut out = self.clone();
        let s = self.slot(0);
        let k = self.width();
        for i in 0..self.n {
            out.coeffs[i * k + s] += shift;
        }
        out
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let k = self.width();
        for i in 0..self.n {
            let mut acc = 0.0;
            for (s, &o) in self.offsets.iter().enumerate() {
                let c = self.coeffs[i * k + s];
                if c != 0.0 {
                    acc += c * x[(i as isize + o) as usize];
                }
            }
            out[i] = acc;
        }
    }
}

/// A prepared solve for a fixed operator. `x` carries the initial guess for
/// iterative methods and receives the solution.
pub trait Factored: Send + Sync {
    fn solve(&self, rhs: &[f64], x: &mut [f64]) -> Result<()>;
}

/// Strategy for solving banded systems with an M-matrix.
pub trait LinearSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn factor(&self, op: &BandOperator) -> Result<Box<dyn Factored>>;
}

/// Band LU without pivoting; stable for the diagonally dominant operators
/// assembled by the scheme.
#[derive(Debug, Clone, Copy, Default)]
pub struct BandedLu;

struct BandLuFactors {
    n: usize,
    lower: usize,
    upper: usize,
    ab: Vec<f64>,
}

impl BandLuFactors {
    #[inline]
    fn w(&self) -> usize {
        self.lower + self.upper + 1
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.w() + j + self.lower - i
    }
}

impl LinearSolver for BandedLu {
    fn name(&self) -> &'static str {
        "banded_lu"
    }

    fn factor(&self, op: &BandOperator) -> Result<Box<dyn Factored>> {
        let (n, lower, upper) = (op.n, op.lower(), op.upper());
        let mut f = BandLuFactors {
            n,
            lower,
            upper,
            ab: vec![0.0; n * (lower + upper + 1)],
        };
        let k = op.width();
        for i in 0..n {
            for (s, &o) in op.offsets.iter().enumerate() {
                let c = op.coeffs[i * k + s];
                if c != 0.0 {
                    let j = (i as isize + o) as usize;
                    let idx = f.at(i, j);
                    f.ab[idx] += c;
                }
            }
        }
        for kk in 0..n {
            let piv = f.ab[f.at(kk, kk)];
            if !(piv.abs() > 1e-300) || !piv.is_finite() {
                return Err(Error::LinearSolve(format!("zero pivot at row {kk}")));
            }
            let jend = (kk + upper + 1).min(n);
            let pivot_row = f.at(kk, kk + 1);
            for i in kk + 1..(kk + lower + 1).min(n) {
                let ik = f.at(i, kk);
                let l = f.ab[ik] / piv;
                f.ab[ik] = l;
                if l != 0.0 {
                    let row = f.at(i, kk + 1);
                    let len = jend - (kk + 1);
                    // band rows are contiguous and row kk precedes row i
                    let (a, b) = f.ab.split_at_mut(row);
                    let src = &a[pivot_row..pivot_row + len];
                    for (d, s) in b[..len].iter_mut().zip(src) {
                        *d -= l * s;
                    }
                }
            }
        }
        Ok(Box::new(f))
    }
}

impl Factored for BandLuFactors {
    fn solve(&self, rhs: &[f64], x: &mut [f64]) -> Result<()> {
        let n = self.n;
        x[..n].copy_from_slice(&rhs[..n]);
        for i in 0..n {
            let j0 = i.saturating_sub(self.lower);
            let base = self.at(i, j0);
            let mut acc = x[i];
            for (t, j) in (j0..i).enumerate() {
                acc -= self.ab[base + t] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let jend = (i + self.upper + 1).min(n);
            let base = self.at(i, i);
            let mut acc = x[i];
            for (t, j) in (i + 1..jend).enumerate() {
                acc -= self.ab[base + 1 + t] * x[j];
            }
            x[i] = acc / self.ab[base];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite solution".into()));
        }
        Ok(())
    }
}

/// Gauss–Seidel sweeps to a relative residual tolerance.
#[derive(Debug, Clone, Copy)]
pub struct GaussSeidel {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for GaussSeidel {
    fn default() -> Self {
        GaussSeidel {
            tol: 1e-13,
            max_sweeps: 200_000,
        }
    }
}

struct GaussSeidelPrepared {
    op: BandOperator,
    diag_slot: usize,
    tol: f64,
    max_sweeps: usize,
}

impl LinearSolver for GaussSeidel {
    fn name(&self) -> &'static str {
        "gauss_seidel"
    }

    fn factor(&self, op: &BandOperator) -> Result<Box<dyn Factored>> {
        let diag_slot = op.slot(0);
        let k = op.width();
        if (0..op.n).any(|i| op.coeffs[i * k + diag_slot] == 0.0) {
            return Err(Error::LinearSolve("zero diagonal entry".into()));
        }
        Ok(Box::new(GaussSeidelPrepared {
            op: op.clone(),
            diag_slot,
            tol: self.tol,
            max_sweeps: self.max_sweeps,
        }))
    }
}

impl Factored for GaussSeidelPrepared {
    fn solve(&self, rhs: &[f64], x: &mut [f64]) -> Result<()> {
        let op = &self.op;
        let k = op.width();
        let scale = 1.0 + rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut r = vec![0.0; op.n];
        for sweep in 0..self.max_sweeps {
            for i in 0..op.n {
                let mut acc = rhs[i];
                for (s, &o) in op.offsets.iter().enumerate() {
                    if s != self.diag_slot {
                        let c = op.coeffs[i * k + s];
                        if c != 0.0 {
                            acc -= c * x[(i as isize + o) as usize];
                        }
                    }
                }
                x[i] = acc / op.coeffs[i * k + self.diag_slot];
            }
            if sweep % 8 == 7 {
                op.apply(x, &mut r);
                let res = r.iter().zip(rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                if !res.is_finite() {
                    return Err(Error::LinearSolve("Gauss-Seidel diverged".into()));
                }
                if res <= self.tol * scale {
                    return Ok(());
                }
            }
        }
        Err(Error::LinearSolve(format!(
            "Gauss-Seidel did not reach tolerance in {} sweeps",
            self.max_sweeps
        )))
    }
}

pub fn linear_solvers() -> Registry<dyn LinearSolver> {
    let mut r: Registry<dyn LinearSolver> = Registry::new("linear solver");
    r.register("banded_lu", Arc::new(BandedLu));
    r.register("gauss_seidel", Arc::new(GaussSeidel::default()));
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random diagonally dominant operator with 2-d grid offsets.
    fn random_op(nx: usize, ny: usize, seed: u64) -> BandOperator {
        let n = nx * ny;
        let nx_i = nx as isize;
        let mut op = BandOperator::new(n, vec![-nx_i, -1, 0, 1, nx_i]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..n {
            let (ix, iy) = (i % nx, i / nx);
            let mut off_sum = 0.0;
            for (o, ok) in [(-nx_i, iy > 0), (-1, ix > 0), (1, ix + 1 < nx), (nx_i, iy + 1 < ny)] {
                if ok {
                    let c = -rng.random_range(0.0..1.0);
                    op.add(i, o, c);
                    off_sum += c;
                }
            }
            op.add(i, 0, -off_sum + 0.1);
        }
        op
    }

    #[test]
    fn solvers_agree_with_operator() {
        let op = random_op(7, 5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rhs: Vec<f64> = (0..op.n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for name in ["banded_lu", "gauss_seidel"] {
            let solver = linear_solvers().get(name).unwrap();
            let f = solver.factor(&op).unwrap();
            let mut x = vec![0.0; op.n];
            f.solve(&rhs, &mut x).unwrap();
            let mut ax = vec![0.0; op.n];
            op.apply(&x, &mut ax);
            let err = ax.iter().zip(&rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-11, "{name}: {err}");
        }
    }

    #[test]
    fn unknown_solver_is_rejected() {
        assert!(linear_solvers().get("cholesky").is_err());
    }
}
