#![allow(dead_code)]

use ehjb_core::conditions::assemble_condition_report;
use ehjb_core::config::ProblemConfig;
use ehjb_core::model::{ConditionReport, ProblemSpec, SolveReport};
use ehjb_core::pde::solve_pipeline;

pub const BENCHMARK: &str = r#"
[problem]
dim = 1
box_half_width = 6.0
delta = 1.0

[drift]
b = ["-x"]

[g]
expr = "-tanh(x)*z^3"

[h]
expr = "cos(x)"
"#;

pub const LQ: &str = r#"
[problem]
dim = 1
box_half_width = 6.0
delta = 1.0

[drift]
b = ["-x"]

[g]
expr = "-0.5*z^2"

[h]
expr = "1.5*x^2"

[solver]
spacing = 0.01
min_rho = 1e-5
cap = "off"
"#;

pub const CONTROL: &str = r#"
[problem]
dim = 1
box_half_width = 6.0
driver = "control"

[drift]
b = ["-x"]

[cost]
r = "0.5*a^2 + sin(x)^2"
convexity_modulus = 1.0
delta_rs = 0.5
"#;

pub fn constant(c: f64) -> String {
    format!(
        r#"
[problem]
dim = 1
box_half_width = 6.0

[drift]
b = ["-x"]

[h]
expr = "{c}"
"#
    )
}

pub struct Solved {
    pub config: ProblemConfig,
    pub spec: ProblemSpec,
    pub conditions: ConditionReport,
    pub report: SolveReport,
}

pub fn solve_config(config: ProblemConfig) -> Solved {
    let spec = config.spec().unwrap();
    let conditions = assemble_condition_report(&spec, &config.check).unwrap();
    let report = solve_pipeline(&spec, &config.solver, &conditions).unwrap();
    Solved {
        config,
        spec,
        conditions,
        report,
    }
}

pub fn solve(source: &str) -> Solved {
    solve_config(ProblemConfig::from_toml(source).unwrap())
}
