//! Simulator and policy library for routing a single repair truck over a
//! storm-damaged radial distribution grid while it learns where the faults are.

pub mod belief;
pub mod engine;
mod error;
pub mod experiment;
pub mod generate;
pub mod grid;
pub mod mcts;
pub mod policies;
pub mod rollout;
pub mod storm;

pub use error::Error;
