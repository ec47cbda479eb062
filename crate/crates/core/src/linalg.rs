//! Small dense helpers over row-major slices.

use nalgebra::{DMatrix, DVector};

pub fn to_matrix(m: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, m)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn sym_min_eigenvalue(m: &[f64], d: usize) -> f64 {
    match d {
        1 => m[0],
        2 => {
            let (a, c) = (m[0], m[3]);
            let b = 0.5 * (m[1] + m[2]);
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            mean - rad
        }
        _ => {
            let mat = to_matrix(m, d);
            let sym = (&mat + mat.transpose()) * 0.5;
            sym.symmetric_eigenvalues().min()
        }
    }
}

/// Solves `m · x = rhs`; `None` when `m` is numerically singular.
pub fn solve(m: &[f64], d: usize, rhs: &[f64]) -> Option<Vec<f64>> {
    if d == 1 {
        return if m[0].abs() > 1e-300 && m[0].is_finite() {
            Some(vec![rhs[0] / m[0]])
        } else {
            None
        };
    }
    let lu = to_matrix(m, d).lu();
    lu.solve(&DVector::from_column_slice(rhs))
        .map(|v| v.iter().copied().collect())
}

/// Inverse of `m`, row-major; `None` when singular.
pub fn inverse(m: &[f64], d: usize) -> Option<Vec<f64>> {
    if d == 1 {
        return if m[0] != 0.0 && m[0].is_finite() {
            Some(vec![1.0 / m[0]])
        } else {
            None
        };
    }
    let inv = to_matrix(m, d).try_inverse()?;
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = inv[(i, j)];
        }
    }
    Some(out)
}

pub fn matmul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

/// zᵀ · m · z.
pub fn quad_form(m: &[f64], d: usize, z: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += z[i] * m[i * d + j] * z[j];
        }
    }
    s
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_two_by_two_matches_general() {
        let m = [2.0, 1.0, -0.5, 3.0];
        let fast = sym_min_eigenvalue(&m, 2);
        let mat = to_matrix(&m, 2);
        let sym = (&mat + mat.transpose()) * 0.5;
        let slow = sym.symmetric_eigenvalues().min();
        assert!((fast - slow).abs() < 1e-12);
    }

    #[test]
    fn solve_and_inverse() {
        let m = [4.0, 1.0, 2.0, 3.0];
        let x = solve(&m, 2, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 2.0).abs() < 1e-12);
        let inv = inverse(&m, 2).unwrap();
        let id = matmul(&m, &inv, 2);
        assert!((id[0] - 1.0).abs() < 1e-12 && id[1].abs() < 1e-12);
        assert!(inverse(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
    }
}
