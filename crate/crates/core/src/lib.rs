//! A three-agent (planner, executor, diagnoser) planning loop that selects
//! plans by cross-agent evaluation consistency and refines the planner with
//! constraints learned from divergences, plus repair baselines, a scripted
//! backend for deterministic runs, and a benchmark harness.

pub mod backend;
pub mod cesr;
pub mod error;
pub mod harness;
pub mod ips;
pub mod memory;
pub mod prompts;
pub mod tools;
pub mod workflow;

pub use error::{Error, Result};
