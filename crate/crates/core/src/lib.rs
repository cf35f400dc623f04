//! Pathwise stochastic control with time-changed (anticipating) noise.
//!
//! The crate covers rough path lifts of sampled paths, controlled paths and
//! rough integrals, a Davie-type RDE solver, time changes of the driving
//! noise, pathwise quadratic variation, Dupire derivatives of causal
//! functionals, a rough functional Itô decomposition, HJB residual and
//! verification checks, and three worked control problems.

pub mod causal;
pub mod controlled;
pub mod error;
pub mod examples;
pub mod funcito;
pub mod grid_paths;
pub mod hjb;
pub mod quad;
pub mod quadvar;
pub mod rde;
pub mod rng;
pub mod roughpath;
pub mod timechange;

pub use error::{Error, Result};
