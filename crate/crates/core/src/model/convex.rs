use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed convex constraint set Π. Nonempty by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexSet {
    WholeSpace,
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// {p : normal · p ≤ offset}
    Halfspace { normal: Vec<f64>, offset: f64 },
}

impl ConvexSet {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let set = ConvexSet::Ball { center, radius };
        set.validate()?;
        Ok(set)
    }

    pub fn cube(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let set = ConvexSet::Box { lo, hi };
        set.validate()?;
        Ok(set)
    }

    pub fn halfspace(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let set = ConvexSet::Halfspace { normal, offset };
        set.validate()?;
        Ok(set)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConvexSet::WholeSpace => "whole_space",
            ConvexSet::Ball { .. } => "ball",
            ConvexSet::Box { .. } => "box",
            ConvexSet::Halfspace { .. } => "halfspace",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexSet::WholeSpace => Ok(()),
            ConvexSet::Ball { center, radius } => {
                if !(*radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "ball needs finite center and radius > 0, got radius {radius}"
                    )));
                }
                Ok(())
            }
            ConvexSet::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                    return Err(Error::InvalidInput(format!(
                        "box needs lo <= hi componentwise, got lo {lo:?}, hi {hi:?}"
                    )));
                }
                Ok(())
            }
            ConvexSet::Halfspace { normal, offset } => {
                let n2: f64 = normal.iter().map(|v| v * v).sum();
                if !(n2 > 0.0) || !offset.is_finite() {
                    return Err(Error::InvalidInput("halfspace normal must be nonzero".into()));
                }
                Ok(())
            }
        }
    }

    /// Dimension the set is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ConvexSet::WholeSpace => None,
            ConvexSet::Ball { center, .. } => Some(center.len()),
            ConvexSet::Box { lo, .. } => Some(lo.len()),
            ConvexSet::Halfspace { normal, .. } => Some(normal.len()),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            ConvexSet::WholeSpace => true,
            ConvexSet::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                r2.sqrt() <= radius + tol
            }
            ConvexSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            ConvexSet::Halfspace { normal, offset } => {
                let s: f64 = x.iter().zip(normal).map(|(a, n)| a * n).sum();
                s <= offset + tol
            }
        }
    }
}
