//! Elastic-averaging SGD and its parameter-server baselines: a deterministic
//! multi-worker simulator plus closed-form mean, variance and stability
//! analysis for quadratic objectives.

pub mod analysis;
pub mod distributed;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod optim;
pub mod problems;

pub use error::{Error, Result};
