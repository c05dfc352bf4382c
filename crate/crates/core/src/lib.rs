//! Heart-rate estimation from a single wrist PPG channel plus 3-axis
//! acceleration, robust to strong motion artifacts.
//!
//! The per-window chain is:
//!
//! 1. [`preprocess::bandpass`] on the whole recording (0.4–5 Hz),
//! 2. [`ssa::cleanse`] removes SSA components that share a dominant frequency
//!    with the accelerometer,
//! 3. [`preprocess::second_difference`],
//! 4. [`ssr::focuss_spectrum`] over a pruned Fourier dictionary,
//! 5. [`tracker::Tracker::step`] picks and verifies the HR peak.
//!
//! [`pipeline`] wires these together per recording, and [`metrics`] scores the
//! result against ECG-derived ground truth.

pub mod error;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod ssa;
pub mod ssr;
pub mod tracker;

pub use error::{Error, Result};
