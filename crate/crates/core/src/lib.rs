//! Solver and certification library for information design in finite
//! augmented Markov games.
//!
//! A principal commits to a per-state signaling rule that injects one signal
//! into each agent's per-period batch; agents select a batch entry and act on
//! it through stationary policies. This crate evaluates discounted values for
//! such strategy profiles, certifies equilibrium and obedience conditions,
//! checks design constraints with named residuals, and searches for feasible
//! or principal-optimal designs. Everything is deterministic under a fixed
//! seed: table iteration is lexicographic and reductions use a fixed order.

pub mod error;
pub mod spaces;
pub mod numeric;
pub mod game;
pub mod config;
pub mod dynamics;
pub mod valuation;
pub mod equilibrium;
pub mod solver;
pub mod principal;
pub mod instances;

pub use error::{Error, Result};
pub use spaces::Spaces;
