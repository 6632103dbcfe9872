//! Simulation models, generators and experiments.

pub mod experiments;
pub mod generate;
pub mod models;
