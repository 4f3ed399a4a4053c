//! Tilted renewal sequences, their complex-plane spectra, and the pinning
//! model built on them.

pub mod error;
pub mod asympt;
pub mod cli;
pub mod laws;
pub mod pinning;
pub mod precision;
pub mod renewal;
pub mod spectral;

pub use error::{Error, Result};
pub use laws::{InterArrivalLaw, TiltedLaw};
pub use precision::PrecisionSpec;
