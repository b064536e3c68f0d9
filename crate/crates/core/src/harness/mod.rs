//! Experiment orchestration.

pub mod config;
pub mod montecarlo;
pub mod output;
pub mod studies;
