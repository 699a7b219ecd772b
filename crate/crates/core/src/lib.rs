//! Right-invariant EKF for a legged robot walking on a moving rigid surface,
//! with a static-surface baseline, a scenario simulator and an observability
//! analyzer.

pub mod drs;
pub mod error;
pub mod filter;
pub mod harness;
mod keyvalue;
pub mod kinematics;
pub mod liegroup;
pub mod observability;
pub mod sim;
pub mod state;

pub use error::{Error, Result};
