//! Direct data-driven LQR, Kalman filtering and LQG control from finite datasets of
//! noisy input/state/output trajectories, together with the model-based oracles and
//! Monte Carlo harness used to check them.

pub mod cli;
pub mod config;
pub mod controller;
pub mod dd_kalman;
pub mod dd_lqg;
pub mod dd_lqr;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod system;
pub mod window;

pub use error::{Error, Result};
