use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in `{key}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Parse {
        key: String,
        line: Option<usize>,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("driver overflow at (x = {x:?}, z = {z:?})")]
    DriverOverflow { x: Vec<f64>, z: Vec<f64> },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("Newton iteration cap ({iterations}) exceeded; last iterate {last:?}, gradient norm {grad_norm:e}")]
    NewtonNotConverged {
        iterations: usize,
        last: Vec<f64>,
        grad_norm: f64,
    },

    #[error("singular Hessian in a at (x = {x:?}, a = {a:?})")]
    SingularHessian { x: Vec<f64>, a: Vec<f64> },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("fixed point did not converge at rho = {rho:e} after {iterations} iterations (last update {last_update:e})")]
    FixedPointNotConverged {
        rho: f64,
        iterations: usize,
        last_update: f64,
        history: Vec<f64>,
    },

    #[error("vanishing-discount schedule exhausted without lambda convergence (last difference {last_diff:e})")]
    DiscountNotConverged {
        last_diff: f64,
        trace: Vec<(f64, f64)>,
    },

    #[error("unknown {kind} `{name}` (known: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("feedback control exceeded its declared bound: |alpha| = {value} > {bound}")]
    FeedbackBound { value: f64, bound: f64 },
}
