//! Propagation-of-chaos toolkit for mean-field particle systems.

pub mod cli;
pub mod config;
pub mod gaussian_exact;
pub mod hierarchy_bounds;
pub mod metrics;
pub mod model;
pub mod report;
pub mod simulate;
pub mod special;
