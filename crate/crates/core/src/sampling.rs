//! Deterministic probe generation for the sampling-based checks.
//!
//! Points in x are drawn on nested dyadic scales: for a box of half-width L
//! the scales are 2^j for j = -3 ..= ceil(log2 L), and each scale uses its
//! own segment of a seeded (Cranley–Patterson rotated) Halton sequence.
//! Points landing outside the box are dropped. A larger box therefore sees a
//! superset of the probes of a smaller one. A coarse absolute lattice with
//! spacing [`LATTICE_SPACING`] is added on top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::DomainBox;

pub const LATTICE_SPACING: f64 = 0.5;
const MIN_SCALE_EXP: i32 = -3;
const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut factor = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % b) as f64 * factor;
        index /= b;
        factor *= inv;
    }
    out
}

/// Randomly shifted Halton sequence in [0, 1)^dims.
#[derive(Debug, Clone)]
pub struct Halton {
    shift: Vec<f64>,
}

impl Halton {
    pub fn new(dims: usize, seed: u64) -> Self {
        assert!(dims <= PRIMES.len(), "Halton sequence supports at most {} dims", PRIMES.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        Halton {
            shift: (0..dims).map(|_| rng.random::<f64>()).collect(),
        }
    }

    pub fn dims(&self) -> usize {
        self.shift.len()
    }

    pub fn point_into(&self, index: u64, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.shift.len()) {
            let v = radical_inverse(index + 1, PRIMES[k]) + self.shift[k];
            *o = v - v.floor();
        }
    }
}

/// A probe: a point x in the box plus `extra` uniform coordinates in [0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub x: Vec<f64>,
    pub extra: Vec<f64>,
}

pub fn dyadic_scales(half_width: f64) -> Vec<f64> {
    let top = half_width.log2().ceil() as i32;
    (MIN_SCALE_EXP..=top.max(MIN_SCALE_EXP)).map(|j| 2f64.powi(j)).collect()
}

/// Quasi-random probes on nested dyadic scales.
pub fn nested_probes(domain: &DomainBox, n_per_scale: usize, extra: usize, seed: u64) -> Vec<Probe> {
    let d = domain.dim;
    let halton = Halton::new(d + extra, seed);
    let mut q = vec![0.0; d + extra];
    let mut out = Vec::new();
    for (j, scale) in dyadic_scales(domain.half_width).into_iter().enumerate() {
        // segment per scale so the scales do not share rays through the origin
        let offset = (j as u64) * (n_per_scale as u64);
        for i in 0..n_per_scale as u64 {
            halton.point_into(offset + i, &mut q);
            let x: Vec<f64> = q[..d].iter().map(|t| scale * (2.0 * t - 1.0)).collect();
            if domain.contains(&x) {
                out.push(Probe {
                    x,
                    extra: q[d..].to_vec(),
                });
            }
        }
    }
    out
}

/// Absolute lattice {k · LATTICE_SPACING} ∩ box.
pub fn lattice(domain: &DomainBox) -> Vec<Vec<f64>> {
    let d = domain.dim;
    let kmax = (domain.half_width / LATTICE_SPACING + 1e-9).floor() as i64;
    let axis: Vec<f64> = (-kmax..=kmax).map(|k| k as f64 * LATTICE_SPACING).collect();
    let mut out: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Maps uniform coordinates in [0, 1)^d into the closed ball of radius `r`.
pub fn to_ball(u: &[f64], r: f64) -> Vec<f64> {
    match u.len() {
        1 => vec![r * (2.0 * u[0] - 1.0)],
        2 => {
            let rad = r * u[0].sqrt();
            let th = 2.0 * std::f64::consts::PI * u[1];
            vec![rad * th.cos(), rad * th.sin()]
        }
        _ => {
            let mut z: Vec<f64> = u.iter().map(|t| r * (2.0 * t - 1.0)).collect();
            let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > r {
                z.iter_mut().for_each(|v| *v *= r / n);
            }
            z
        }
    }
}

/// Deterministic z-lattice {0, ±r e_i, ±r/2 e_i}.
pub fn z_lattice(dim: usize, r: f64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; dim]];
    for i in 0..dim {
        for s in [r, -r, 0.5 * r, -0.5 * r] {
            let mut z = vec![0.0; dim];
            z[i] = s;
            out.push(z);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn probes_are_nested_in_box() {
        let small = DomainBox::new(1, 3.0).unwrap();
        let big = DomainBox::new(1, 6.0).unwrap();
        let ps = nested_probes(&small, 64, 1, 7);
        let pb = nested_probes(&big, 64, 1, 7);
        for p in &ps {
            assert!(pb.contains(p));
        }
        let ls = lattice(&small);
        let lb = lattice(&big);
        assert!(ls.iter().all(|p| lb.contains(p)));
        assert_eq!(lb.len(), 25);
    }

    #[test]
    fn ball_mapping_stays_inside() {
        let h = Halton::new(2, 3);
        let mut q = [0.0; 2];
        for i in 0..500 {
            h.point_into(i, &mut q);
            let z = to_ball(&q, 2.0);
            assert!((z[0] * z[0] + z[1] * z[1]).sqrt() <= 2.0 + 1e-12);
        }
    }
}
