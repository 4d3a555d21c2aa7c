//! Reactive operating-theatre sequencing.
//!
//! Builds daily surgical schedules with constructive heuristics, repairs them
//! under stochastic disruptions, and simulates weeks of operation.

pub mod domain;
pub mod gantt;
pub mod heuristics;
pub mod instancegen;
pub mod io;
pub mod mip;
pub mod objective;
pub mod reactive;
pub mod replicate;
pub mod simulator;
pub mod tuner;

pub use domain::*;
