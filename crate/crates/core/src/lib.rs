//! Change-point detection across the frequencies of a short-time Fourier
//! transform, with selective p-values for the detected locations.

pub mod chi;
pub mod detect;
pub mod dp;
mod error;
pub mod harness;
pub mod inference;
pub mod interval;
pub mod objective;
pub mod rng;
pub mod sa;
pub mod spectral;

pub use error::{Error, Result};
