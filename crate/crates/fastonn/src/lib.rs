//! fastonn — behavioral simulator of a fanout free-space optical
//! matrix-vector processor.
//!
//! The simulated machine encodes a normalized input vector onto an array of
//! VCSELs, replicates the beams into M spatial copies through a diffractive
//! element, weights every copy on SLM pixels via polarization rotation, and
//! reads each copy out with a balanced photodetector pair, so one optical
//! clock cycle computes M signed dot products. On top of that single cycle
//! the crate provides:
//!
//! - [`hardware`] — the cycle itself: DAC input encoding, fanout with
//!   nearest-neighbor crosstalk, the weight-to-phase map, balanced
//!   detection, and ADC readout.
//! - [`noise`] — detector/shot/RIN noise, analytic SNR and effective bits,
//!   and the seeded per-arm draws the hardware consumes.
//! - [`calibration`] — a simulated imperfect SLM, isotonic response
//!   fitting, weight-to-gray lookup tables, flat-field gains, and sparse
//!   recalibration.
//! - [`cnn`] — the compact MNIST classifier (nine 3x3 kernels, stride 3,
//!   bias-free dense head) with digital or optical-in-the-loop forward
//!   passes, exact digital backprop, and Adam training with weight
//!   clipping.
//! - [`data`] — IDX dataset parsing, patch extraction, edge detection, and
//!   PGM output.
//! - [`analysis`] — throughput, energy-per-operation, and fanout geometry
//!   models.
//! - [`cli`] — the `fastonn` binary's subcommands with manifest-based
//!   replay.
//!
//! ## Runnable examples
//!
//! Each major capability has a standalone example:
//!
//! ```bash
//! cargo run --release --example mvm_accuracy
//! cargo run --release --example snr_curve
//! cargo run --release --example energy_report
//! cargo run --release --example fanout_layout
//! cargo run --release --example slm_calibration
//! cargo run --release --example edge_detection
//! cargo run --release --example digital_training      # needs data/, see README
//! cargo run --release --example in_system_training    # needs data/, see README
//! cargo run --release --example noise_robustness      # needs data/, see README
//! ```

pub mod analysis;
pub mod calibration;
pub mod cli;
pub mod cnn;
pub mod data;
pub mod error;
pub mod fmt;
pub mod hardware;
pub mod noise;
pub mod rng;

pub use error::{Error, Result};
