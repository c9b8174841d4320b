//! Optimal Bayesian quantum-metrology strategies from tester semidefinite
//! programs.

pub mod analysis;
pub mod channels;
pub mod cost;
pub mod error;
pub mod greedy;
pub mod linalg;
pub mod operator;
pub mod prior;
pub mod realization;
pub mod sdp;
pub mod seesaw;
pub mod testers;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
