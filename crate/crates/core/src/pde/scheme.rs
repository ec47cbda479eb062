//! Finite-difference stencils with reflecting (mirror-ghost) boundaries.

use crate::model::{Grid, VectorField};
use crate::pde::linear::BandOperator;

/// Stencil data for a grid and a drift.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub grid: Grid,
    /// Node coordinates, `dim` per node.
    pub nodes: Vec<f64>,
    /// Drift at the nodes, `dim` per node.
    pub drift: Vec<f64>,
    strides: [usize; 2],
}

impl Scheme {
    pub fn new(grid: Grid, b: &VectorField) -> Self {
        let d = grid.dim;
        let n = grid.len();
        let mut nodes = vec![0.0; n * d];
        let mut drift = vec![0.0; n * d];
        for i in 0..n {
            grid.node_into(i, &mut nodes[i * d..(i + 1) * d]);
            let (x, out) = (&nodes[i * d..(i + 1) * d], &mut drift[i * d..(i + 1) * d]);
            b.eval_into(x, out);
        }
        let strides = [1, grid.counts[0]];
        Scheme {
            grid,
            nodes,
            drift,
            strides,
        }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[i * d..(i + 1) * d]
    }

    pub fn drift_at(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.drift[i * d..(i + 1) * d]
    }

    /// Left and right neighbours of node `i` along `axis`; at a face the
    /// missing neighbour is replaced by its mirror image.
    #[inline]
    pub fn neighbors(&self, i: usize, axis: usize) -> (usize, usize) {
        let s = self.strides[axis];
        let m = self.grid.multi_index(i)[axis];
        let last = self.grid.counts[axis] - 1;
        if m == 0 {
            (i + s, i + s)
        } else if m == last {
            (i - s, i - s)
        } else {
            (i - s, i + s)
        }
    }

    fn offsets(&self) -> Vec<isize> {
        match self.dim() {
            1 => vec![-1, 0, 1],
            _ => {
                let s = self.strides[1] as isize;
                vec![-s, -1, 0, 1, s]
            }
        }
    }

    /// −½Δ_h − b·∇_h. The drift term is centred where |b_k| h ≤ 1, which
    /// keeps every off-diagonal entry nonpositive, and upwinded elsewhere.
    pub fn generator_operator(&self) -> BandOperator {
        let d = self.dim();
        let n = self.len();
        let mut op = BandOperator::new(n, self.offsets());
        for i in 0..n {
            let b = self.drift_at(i);
            for k in 0..d {
                let h = self.grid.spacing[k];
                let (l, r) = self.neighbors(i, k);
                let (ol, or) = (l as isize - i as isize, r as isize - i as isize);
                let diff = 0.5 / (h * h);
                op.add(i, 0, 2.0 * diff);
                op.add(i, ol, -diff);
                op.add(i, or, -diff);
                let bk = b[k];
                if bk.abs() * h <= 1.0 {
                    op.add(i, or, -bk / (2.0 * h));
                    op.add(i, ol, bk / (2.0 * h));
                } else if bk > 0.0 {
                    op.add(i, or, -bk / h);
                    op.add(i, 0, bk / h);
                } else {
                    op.add(i, 0, -bk / h);
                    op.add(i, ol, bk / h);
                }
            }
        }
        op
    }

    /// Central-difference gradient, `dim` values per node.
    pub fn central_gradient(&self, u: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..self.len() {
            for k in 0..d {
                let (l, r) = self.neighbors(i, k);
                out[i * d + k] = (u[r] - u[l]) / (2.0 * self.grid.spacing[k]);
            }
        }
    }

    pub fn gradient_at(&self, u: &[f64], i: usize, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.dim()) {
            let (l, r) = self.neighbors(i, k);
            *o = (u[r] - u[l]) / (2.0 * self.grid.spacing[k]);
        }
    }

    /// Component `c` of an interleaved field with `stride` values per node.
    fn comp(u: &[f64], node: usize, stride: usize, c: usize) -> f64 {
        u[node * stride + c]
    }

    /// ∂_k of component `c` of an interleaved field, central.
    pub fn partial(&self, u: &[f64], stride: usize, c: usize, i: usize, k: usize) -> f64 {
        let (l, r) = self.neighbors(i, k);
        (Self::comp(u, r, stride, c) - Self::comp(u, l, stride, c)) / (2.0 * self.grid.spacing[k])
    }

    /// Δ_h of component `c` of an interleaved field.
    pub fn laplacian(&self, u: &[f64], stride: usize, c: usize, i: usize) -> f64 {
        let mut acc = 0.0;
        let ui = Self::comp(u, i, stride, c);
        for k in 0..self.dim() {
            let h = self.grid.spacing[k];
            let (l, r) = self.neighbors(i, k);
            acc += (Self::comp(u, r, stride, c) - 2.0 * ui + Self::comp(u, l, stride, c)) / (h * h);
        }
        acc
    }
}
