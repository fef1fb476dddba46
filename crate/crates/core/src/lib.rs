//! Two-echelon retail replenishment: a warehouse feeding several stores,
//! simulated at store-period granularity, with actor-critic agents, simple
//! baselines, and an evaluation harness built around seeded synthetic
//! demand traces.

pub mod agents;
pub mod baselines;
pub mod demand;
pub mod error;
pub mod eval;
pub mod instance;
pub mod nn;
pub mod policy;
pub mod rewards;
pub mod sim;
pub mod trainer;

pub use error::{CoreError, Result};
