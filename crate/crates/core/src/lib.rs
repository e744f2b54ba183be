pub mod biomarker;
pub mod error;
pub mod evaluation;
pub mod filter;
pub mod io;
pub mod latency;
pub mod model;
pub mod pipeline;
pub mod rppg;
pub mod signal;
pub mod synth;
pub mod sync;

#[cfg(test)]
mod testutil;

pub use biomarker::{Biomarker, BiomarkerValues};
pub use error::{Error, Result};
