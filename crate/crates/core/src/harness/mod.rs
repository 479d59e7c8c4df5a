//! Synthetic data, experiment drivers and their statistics.

pub mod experiment;
pub mod io;
pub mod stats;
pub mod variance;
pub mod synth;
