//! Ergodic BSDE / ergodic HJB toolkit: structural checks, driver families,
//! a vanishing-discount grid solver and Monte-Carlo verification.

pub mod conditions;
pub mod config;
pub mod drivers;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod model;
pub mod pde;
pub mod registry;
pub mod sampling;
pub mod simulate;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
