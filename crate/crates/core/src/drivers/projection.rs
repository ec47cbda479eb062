use crate::linalg::{dot, norm};
use crate::model::ConvexSet;

/// Relative slack used to treat points on the boundary as inside, so that
/// P∘P = P holds bitwise despite rounding in the closed forms.
const INSIDE_SLACK: f64 = 1e-12;

impl ConvexSet {
    /// Nearest point of Π to `x`.
    pub fn project_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            ConvexSet::WholeSpace => out.copy_from_slice(x),
            ConvexSet::Box { lo, hi } => {
                for i in 0..x.len() {
                    out[i] = x[i].max(lo[i]).min(hi[i]);
                }
            }
            ConvexSet::Ball { center, radius } => {
                let mut n2 = 0.0;
                for i in 0..x.len() {
                    let t = x[i] - center[i];
                    n2 += t * t;
                }
                let n = n2.sqrt();
                if n <= radius * (1.0 + INSIDE_SLACK) {
                    out.copy_from_slice(x);
                } else {
                    let s = radius / n;
                    for i in 0..x.len() {
                        out[i] = center[i] + s * (x[i] - center[i]);
                    }
                }
            }
            ConvexSet::Halfspace { normal, offset } => {
                let s = dot(normal, x);
                let slack = INSIDE_SLACK * (1.0 + offset.abs() + norm(normal) * norm(x));
                if s <= offset + slack {
                    out.copy_from_slice(x);
                } else {
                    let t = (s - offset) / dot(normal, normal);
                    for i in 0..x.len() {
                        out[i] = x[i] - t * normal[i];
                    }
                }
            }
        }
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.project_into(x, &mut out);
        out
    }

    /// dist²(Π, x).
    pub fn dist_sq(&self, x: &[f64]) -> f64 {
        let p = self.project(x);
        x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// argmin over p ∈ Π of |x − p|.
pub fn project_convex(pi: &ConvexSet, x: &[f64]) -> Vec<f64> {
    pi.project(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_examples() {
        let ball = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(project_convex(&ball, &[2.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(project_convex(&ball, &[0.3, -0.4]), vec![0.3, -0.4]);
        let cube = ConvexSet::cube(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(project_convex(&cube, &[2.0, -1.0]), vec![1.0, 0.0]);
        let half = ConvexSet::halfspace(vec![0.0, 2.0], 2.0).unwrap();
        assert_eq!(project_convex(&half, &[3.0, 5.0]), vec![3.0, 1.0]);
        assert_eq!(project_convex(&ConvexSet::WholeSpace, &[7.0, -3.0]), vec![7.0, -3.0]);
    }

    fn sets() -> Vec<ConvexSet> {
        vec![
            ConvexSet::WholeSpace,
            ConvexSet::ball(vec![0.5, -0.25], 1.3).unwrap(),
            ConvexSet::cube(vec![-1.0, -0.5], vec![1.0, 2.0]).unwrap(),
            ConvexSet::halfspace(vec![1.0, -2.0], 0.7).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(x in -10.0f64..10.0, y in -10.0f64..10.0) {
            for set in sets() {
                let p = set.project(&[x, y]);
                let pp = set.project(&p);
                prop_assert_eq!(p, pp);
            }
        }

        #[test]
        fn projection_is_nonexpansive(a in prop::array::uniform4(-10.0f64..10.0)) {
            for set in sets() {
                let p = set.project(&a[..2]);
                let q = set.project(&a[2..]);
                let dpq = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                let dxy = ((a[0] - a[2]).powi(2) + (a[1] - a[3]).powi(2)).sqrt();
                prop_assert!(dpq <= dxy * (1.0 + 1e-12) + 1e-12);
            }
        }

        #[test]
        fn variational_inequality(x in prop::array::uniform2(-10.0f64..10.0), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for set in sets() {
                let p = set.project(&x);
                for _ in 0..100 {
                    let q = set.project(&[rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)]);
                    let vi = (x[0] - p[0]) * (q[0] - p[0]) + (x[1] - p[1]) * (q[1] - p[1]);
                    prop_assert!(vi <= 1e-9 * (1.0 + dot(&x, &x)));
                }
            }
        }
    }
}
