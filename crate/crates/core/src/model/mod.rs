//! Domain types shared across the toolkit.

pub mod convex;
pub mod cost;
pub mod field;
pub mod grid;
pub mod reports;

pub use convex::ConvexSet;
pub use cost::RunningCost;
pub use field::{eval_driver, fd_gradient, fd_step, finite_diff_gradient, DriverSplit, VectorField};
pub use grid::{DomainBox, FieldKind, Grid, GridFunction};
pub use reports::{
    ConditionReport, CostEstimate, GradientBound, PathEnsemble, SolveReport, TraceEntry, Verdict,
    Witness,
};

use crate::error::{Error, Result};

/// Data of the ergodic problem: drift, driver, dissipativity constant,
/// domain box and normalization anchor.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub b: VectorField,
    pub driver: DriverSplit,
    pub delta: f64,
    pub domain: DomainBox,
    pub x0: Vec<f64>,
}

impl ProblemSpec {
    pub fn new(b: VectorField, driver: DriverSplit, delta: f64, domain: DomainBox) -> Result<Self> {
        let x0 = vec![0.0; domain.dim];
        Self::with_anchor(b, driver, delta, domain, x0)
    }

    pub fn with_anchor(
        b: VectorField,
        driver: DriverSplit,
        delta: f64,
        domain: DomainBox,
        x0: Vec<f64>,
    ) -> Result<Self> {
        let spec = ProblemSpec {
            b,
            driver,
            delta,
            domain,
            x0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.domain.dim;
        if !(1..=2).contains(&d) {
            return Err(Error::InvalidInput(format!("problem dimension must be 1 or 2, got {d}")));
        }
        if self.b.dim() != d || self.driver.dim() != d {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: box {d}, drift {}, driver {}",
                self.b.dim(),
                self.driver.dim()
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidInput(format!("delta must be positive, got {}", self.delta)));
        }
        if !self.domain.contains(&self.x0) {
            return Err(Error::InvalidInput(format!("anchor x0 = {:?} outside the box", self.x0)));
        }
        Ok(())
    }

    pub fn with_driver(&self, driver: DriverSplit) -> ProblemSpec {
        ProblemSpec {
            driver,
            ..self.clone()
        }
    }
}
