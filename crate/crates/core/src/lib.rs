//! Desk-scale residual reinforcement learning lab.
//!
//! Implements DAWN (data-anchored warmup + critic normalization) on top of a
//! residual soft actor-critic trainer, with scalar and distributional critic
//! heads, scripted base controllers, sparse-reward toy environments, and the
//! diagnostic instruments needed to study value learning (grounding error,
//! critic sensitivity, value difference, Q-value anatomy).

pub mod agent;
pub mod basepolicy;
pub mod buffer;
pub mod config;
pub mod diagnostics;
pub mod diffcore;
pub mod envs;
pub mod error;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
