//! Blind identification of the multiple-access method of a received signal
//! from the distribution of its frame-wise fourth-order cumulant.

pub mod class_stats;
pub mod classifier;
pub mod constellations;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod netsim;

pub use error::{Error, Result};
