//! Multiple-instance target characterization.
//!
//! Learns target signatures for the spectral matched filter (MI-SMF) and the
//! adaptive cosine estimator (MI-ACE) from bag-labeled training data, where
//! a positive bag is only known to contain *some* target-bearing instance.

pub mod baselines;
pub mod cli;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod spectral;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
