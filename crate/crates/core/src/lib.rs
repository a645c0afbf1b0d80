//! Variance-reduced off-policy Monte Carlo evaluation of finite-horizon MDP
//! policies.
//!
//! The crate covers the full pipeline at tabular scale: exact dynamic
//! programming for every value and variance quantity, offline learning of a
//! low-variance behavior policy from logged tuples, adaptive UCB switching
//! between the learned policy and the target policy during online data
//! collection, and a grid-world experiment harness with seeded, reproducible
//! CSV output.

// The backward recursions read and write several [t][s][a] tables in one
// pass; explicit index loops keep them aligned with the table layout.
#![allow(clippy::needless_range_loop)]

pub mod adaptive;
pub mod dataset;
pub mod dp;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod gridworld;
pub mod learn;
pub mod mdp;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
