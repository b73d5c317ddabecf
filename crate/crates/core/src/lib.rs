//! Maximum-likelihood NPSS timing acquisition for NB-IoT.
//!
//! The receive chain runs at the 240 kHz coarse rate: a streaming overlap-save
//! correlator evaluates the NPSS cross-correlation over a bank of carrier
//! frequency hypotheses, the magnitudes are combined non-coherently across
//! 10 ms periods, and a four-peak test decides whether the NPSS was found.
//! A downlink simulator and a Monte Carlo harness sit on top for latency,
//! false-alarm, complexity and energy studies.

pub mod channel;
pub mod detector;
pub mod error;
pub mod fir;
pub mod harness;
pub mod io;
pub mod npss;
pub mod olscorr;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex<f64>;
