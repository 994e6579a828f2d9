//! Simulation and exact analytics for random walks in random environments.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod env;
pub mod error;
pub mod exact1d;
pub mod experiment;
mod numeric;
pub mod regen;
pub mod rng;
pub mod stats;
pub mod walk;

pub use env::{EnvLaw, Environment, EnvironmentSpec, Rho};
pub use error::{Result, RwreError};
