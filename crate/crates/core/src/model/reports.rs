use serde::{Deserialize, Serialize};

use crate::model::grid::GridFunction;

/// Sampling witness for a violated (or worst-case) condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_bar: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_bar: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
}

impl Witness {
    pub fn at(x: &[f64]) -> Self {
        Witness {
            x: x.to_vec(),
            x_bar: None,
            z: None,
            z_bar: None,
            a: None,
        }
    }

    pub fn pair(x: &[f64], x_bar: &[f64]) -> Self {
        Witness {
            x_bar: Some(x_bar.to_vec()),
            ..Witness::at(x)
        }
    }

    pub fn triple(x: &[f64], z: &[f64], z_bar: &[f64]) -> Self {
        Witness {
            z: Some(z.to_vec()),
            z_bar: Some(z_bar.to_vec()),
            ..Witness::at(x)
        }
    }
}

/// Outcome of one sampling-based check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub holds: bool,
    /// Worst sampled value of the checked quantity (sign convention per check).
    pub worst: f64,
    pub witness: Option<Witness>,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub delta_hat: f64,
    pub dissipativity: Verdict,
    pub lipschitz_b: f64,
    /// Sampled lower estimate of the sup defining M.
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "M_prime")]
    pub m_prime: f64,
    pub monotone_dxg: Verdict,
    pub weak_monotone: Verdict,
    pub h_lipschitz_in_x: f64,
    pub sup_abs_g_at_zero: f64,
    pub sup_abs_h_at_zero: f64,
    pub z_radius: f64,
    pub box_half_width: f64,
    /// Suprema are taken over the declared box, so they are lower bounds.
    pub suprema_are_lower_bounds: bool,
    pub overall: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientBound {
    pub bound: f64,
    pub sup_v: f64,
    pub verdict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub rho: f64,
    /// ρ · u^ρ(x₀)
    pub lambda: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub u: GridFunction,
    #[serde(skip)]
    pub v: GridFunction,
    pub lambda: f64,
    /// Grid average of ρ·u^ρ at the last discount level.
    pub lambda_grid_average: f64,
    pub discount_trace: Vec<TraceEntry>,
    pub cap: Option<f64>,
    pub pde_residual: Option<f64>,
    pub gradient_system_residual: Option<f64>,
    pub gradient_bound: Option<GradientBound>,
}

impl SolveReport {
    pub fn trace_pairs(&self) -> Vec<(f64, f64)> {
        self.discount_trace.iter().map(|t| (t.rho, t.lambda)).collect()
    }
}

/// Seeded Euler–Maruyama trajectories, stored flat:
/// `states[(p * (n_steps + 1) + k) * dim + i]`,
/// `brownian_increments[(p * n_steps + k) * dim + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub n_paths: usize,
    pub n_steps: usize,
    pub dim: usize,
    pub dt: f64,
    pub seed: u64,
    pub start: Vec<f64>,
    pub states: Vec<f64>,
    pub brownian_increments: Vec<f64>,
    /// Paths aborted on a non-finite state; their tails are NaN.
    pub blown_up: Vec<usize>,
}

impl PathEnsemble {
    pub fn state(&self, p: usize, k: usize) -> &[f64] {
        let i = (p * (self.n_steps + 1) + k) * self.dim;
        &self.states[i..i + self.dim]
    }

    pub fn increment(&self, p: usize, k: usize) -> &[f64] {
        let i = (p * self.n_steps + k) * self.dim;
        &self.brownian_increments[i..i + self.dim]
    }

    pub fn path_states(&self, p: usize) -> &[f64] {
        let n = (self.n_steps + 1) * self.dim;
        &self.states[p * n..(p + 1) * n]
    }

    pub fn path_increments(&self, p: usize) -> &[f64] {
        let n = self.n_steps * self.dim;
        &self.brownian_increments[p * n..(p + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub value: f64,
    pub std_error: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_paths: usize,
    pub dt: f64,
    /// (T_j, estimate over [0.1 T_j, T_j]) on a doubling ladder ending at T.
    pub ladder: Vec<(f64, f64)>,
    pub blown_up: usize,
}
