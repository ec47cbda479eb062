use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box [-L, L]^d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub dim: usize,
    pub half_width: f64,
}

impl DomainBox {
    pub fn new(dim: usize, half_width: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "box half-width must be positive, got {half_width}"
            )));
        }
        Ok(DomainBox { dim, half_width })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|v| v.abs() <= self.half_width)
    }

    pub fn lo(&self) -> Vec<f64> {
        vec![-self.half_width; self.dim]
    }

    pub fn hi(&self) -> Vec<f64> {
        vec![self.half_width; self.dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Scalar,
    Vector,
}

/// Uniform tensor grid over a box, d ∈ {1, 2}. Node index is x-fastest:
/// `idx = i0 + n0 * i1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub lo: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Grid {
    /// Grid over `domain` with (approximately) the requested spacing. The
    /// node count per axis is `round(2L / spacing) + 1` and the spacing is
    /// adjusted so the end nodes sit exactly on the box faces.
    pub fn new(domain: &DomainBox, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidInput(format!("spacing must be positive, got {spacing}")));
        }
        if !(1..=2).contains(&domain.dim) {
            return Err(Error::InvalidInput(format!(
                "grids support d in {{1, 2}}, got d = {}",
                domain.dim
            )));
        }
        let width = 2.0 * domain.half_width;
        let cells = (width / spacing).round().max(2.0) as usize;
        let h = width / cells as f64;
        Ok(Grid {
            dim: domain.dim,
            lo: domain.lo(),
            spacing: vec![h; domain.dim],
            counts: vec![cells + 1; domain.dim],
        })
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hi(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|k| self.lo[k] + self.spacing[k] * (self.counts[k] - 1) as f64)
            .collect()
    }

    /// Multi-index of node `idx`.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx % self.counts[0], idx / self.counts[0]],
        }
    }

    pub fn flat_index(&self, m: [usize; 2]) -> usize {
        match self.dim {
            1 => m[0],
            _ => m[0] + self.counts[0] * m[1],
        }
    }

    pub fn node_into(&self, idx: usize, out: &mut [f64]) {
        let m = self.multi_index(idx);
        for k in 0..self.dim {
            out[k] = self.lo[k] + self.spacing[k] * m[k] as f64;
        }
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.node_into(idx, &mut out);
        out
    }

    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut m = [0usize; 2];
        for k in 0..self.dim {
            let t = ((x[k] - self.lo[k]) / self.spacing[k]).round();
            m[k] = t.clamp(0.0, (self.counts[k] - 1) as f64) as usize;
        }
        self.flat_index(m)
    }

    /// Distance (in nodes) from node `idx` to the nearest face.
    pub fn layer_depth(&self, idx: usize) -> usize {
        let m = self.multi_index(idx);
        (0..self.dim)
            .map(|k| m[k].min(self.counts[k] - 1 - m[k]))
            .min()
            .unwrap_or(0)
    }

    /// Multilinear interpolation weights. Returns up to 4 (node, weight)
    /// pairs and whether `x` was clipped into the grid.
    pub fn stencil(&self, x: &[f64]) -> ([(usize, f64); 4], usize, bool) {
        let mut clipped = false;
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for k in 0..self.dim {
            let n = self.counts[k];
            let mut t = (x[k] - self.lo[k]) / self.spacing[k];
            if !(t >= 0.0) {
                clipped |= t < 0.0 || t.is_nan();
                t = 0.0;
            }
            let top = (n - 1) as f64;
            if t > top {
                clipped = true;
                t = top;
            }
            let i = (t.floor() as usize).min(n - 2);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        let mut out = [(0usize, 0.0f64); 4];
        if self.dim == 1 {
            out[0] = (base[0], 1.0 - frac[0]);
            out[1] = (base[0] + 1, frac[0]);
            (out, 2, clipped)
        } else {
            let n0 = self.counts[0];
            let i00 = base[0] + n0 * base[1];
            let (fx, fy) = (frac[0], frac[1]);
            out[0] = (i00, (1.0 - fx) * (1.0 - fy));
            out[1] = (i00 + 1, fx * (1.0 - fy));
            out[2] = (i00 + n0, (1.0 - fx) * fy);
            out[3] = (i00 + n0 + 1, fx * fy);
            (out, 4, clipped)
        }
    }
}

/// Values of a scalar or ℝ^d-valued field at the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    pub kind: FieldKind,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn scalar(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "scalar grid function needs {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Self::checked(grid, FieldKind::Scalar, values)
    }

    pub fn vector(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * grid.dim {
            return Err(Error::InvalidInput(format!(
                "vector grid function needs {} values, got {}",
                grid.len() * grid.dim,
                values.len()
            )));
        }
        Self::checked(grid, FieldKind::Vector, values)
    }

    fn checked(grid: Grid, kind: FieldKind, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid value at flat index {i}")));
        }
        Ok(GridFunction { grid, kind, values })
    }

    pub fn components(&self) -> usize {
        match self.kind {
            FieldKind::Scalar => 1,
            FieldKind::Vector => self.grid.dim,
        }
    }

    pub fn at(&self, idx: usize) -> &[f64] {
        let c = self.components();
        &self.values[idx * c..(idx + 1) * c]
    }

    /// Multilinear interpolation; writes `components()` values and returns
    /// whether `x` had to be clipped into the grid box.
    pub fn interpolate_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        let (stencil, n, clipped) = self.grid.stencil(x);
        let c = self.components();
        out[..c].fill(0.0);
        for &(node, w) in &stencil[..n] {
            for k in 0..c {
                out[k] += w * self.values[node * c + k];
            }
        }
        clipped
    }

    pub fn interpolate(&self, x: &[f64]) -> (Vec<f64>, bool) {
        let mut out = vec![0.0; self.components()];
        let clipped = self.interpolate_into(x, &mut out);
        (out, clipped)
    }

    pub fn sup_norm(&self) -> f64 {
        let c = self.components();
        self.values
            .chunks(c)
            .map(|v| v.iter().map(|t| t * t).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts_match_spacing() {
        let g = Grid::new(&DomainBox::new(1, 6.0).unwrap(), 0.01).unwrap();
        assert_eq!(g.counts, vec![1201]);
        assert!((g.hi()[0] - 6.0).abs() < 1e-12);
        let g2 = Grid::new(&DomainBox::new(2, 1.0).unwrap(), 0.25).unwrap();
        assert_eq!(g2.len(), 81);
        assert_eq!(g2.node(g2.flat_index([8, 0])), vec![1.0, -1.0]);
    }

    #[test]
    fn rejects_three_dimensions() {
        assert!(Grid::new(&DomainBox::new(3, 1.0).unwrap(), 0.5).is_err());
    }

    #[test]
    fn nearest_and_layers() {
        let g = Grid::new(&DomainBox::new(2, 1.0).unwrap(), 0.5).unwrap();
        let i = g.nearest_node(&[0.1, -0.2]);
        assert_eq!(g.node(i), vec![0.0, 0.0]);
        assert_eq!(g.layer_depth(i), 2);
        assert_eq!(g.layer_depth(0), 0);
    }

    #[test]
    fn bilinear_reproduces_affine() {
        let g = Grid::new(&DomainBox::new(2, 1.0).unwrap(), 0.25).unwrap();
        let vals = (0..g.len())
            .map(|i| {
                let p = g.node(i);
                1.0 + 2.0 * p[0] - 3.0 * p[1]
            })
            .collect();
        let f = GridFunction::scalar(g, vals).unwrap();
        let (v, clipped) = f.interpolate(&[0.13, -0.41]);
        assert!(!clipped);
        assert!((v[0] - (1.0 + 0.26 + 1.23)).abs() < 1e-12);
        let (_, clipped) = f.interpolate(&[1.5, 0.0]);
        assert!(clipped);
    }

    #[test]
    fn rejects_non_finite_and_bad_shape() {
        let g = Grid::new(&DomainBox::new(1, 1.0).unwrap(), 0.5).unwrap();
        assert!(GridFunction::scalar(g.clone(), vec![0.0; 4]).is_err());
        assert!(GridFunction::scalar(g, vec![0.0, f64::NAN, 0.0, 0.0, 0.0]).is_err());
    }
}
