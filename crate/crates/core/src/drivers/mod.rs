//! Driver families: generic expression drivers, the control Hamiltonian,
//! its risk-sensitive variant and the forward-performance driver.

pub mod forward;
pub mod hamiltonian;
pub mod projection;

use std::sync::Arc;

pub use forward::{build_forward_driver, check_x_gradient, forward_driver_x_gradient, ForwardModel, GradientCheck};
pub use hamiltonian::{
    build_control_driver, build_risk_sensitive_driver, hamiltonian_mixed_partial, minimize_h, HamiltonianDriver,
    Minimizer,
};
pub use projection::project_convex;

use crate::config::ProblemConfig;
use crate::error::{Error, Result};
use crate::expr::{Expr, VarSet};
use crate::model::DriverSplit;
use crate::registry::Registry;

/// Builds a driver from a parsed problem file.
pub trait DriverFamily: Send + Sync {
    fn name(&self) -> &'static str;
    fn build(&self, config: &ProblemConfig) -> Result<DriverSplit>;
}

fn missing(family: &str, section: &str) -> Error {
    Error::Config(format!("driver `{family}` needs a [{section}] section"))
}

struct Generic;

impl DriverFamily for Generic {
    fn name(&self) -> &'static str {
        "generic"
    }

    fn build(&self, config: &ProblemConfig) -> Result<DriverSplit> {
        let d = config.dim();
        let zero = || Expr::parse("0", d, VarSet::XZ).expect("literal parses");
        if config.g.is_none() && config.h.is_none() {
            return Err(missing(self.name(), "g] or [h"));
        }
        let g = config.g.clone().unwrap_or_else(zero);
        let h = config.h.clone().unwrap_or_else(zero);
        Ok(DriverSplit::from_exprs(g, h))
    }
}

struct Control;

impl DriverFamily for Control {
    fn name(&self) -> &'static str {
        "control"
    }

    fn build(&self, config: &ProblemConfig) -> Result<DriverSplit> {
        let c = config.cost.as_ref().ok_or_else(|| missing(self.name(), "cost"))?;
        Ok(build_control_driver(&c.cost))
    }
}

struct RiskSensitive;

impl DriverFamily for RiskSensitive {
    fn name(&self) -> &'static str {
        "risk_sensitive"
    }

    fn build(&self, config: &ProblemConfig) -> Result<DriverSplit> {
        let c = config.cost.as_ref().ok_or_else(|| missing(self.name(), "cost"))?;
        let delta = c
            .delta_rs
            .ok_or_else(|| Error::Config("driver `risk_sensitive` needs cost.delta_rs".into()))?;
        build_risk_sensitive_driver(&c.cost, delta)
    }
}

struct Forward;

impl DriverFamily for Forward {
    fn name(&self) -> &'static str {
        "forward"
    }

    fn build(&self, config: &ProblemConfig) -> Result<DriverSplit> {
        let f = config.forward.as_ref().ok_or_else(|| missing(self.name(), "forward"))?;
        build_forward_driver(f.theta.clone(), f.pi.clone(), f.delta_cap)
    }
}

pub fn driver_families() -> Registry<dyn DriverFamily> {
    let mut r: Registry<dyn DriverFamily> = Registry::new("driver family");
    let families: [Arc<dyn DriverFamily>; 4] = [Arc::new(Generic), Arc::new(Control), Arc::new(RiskSensitive), Arc::new(Forward)];
    for f in families {
        r.register(f.name(), f);
    }
    r
}
