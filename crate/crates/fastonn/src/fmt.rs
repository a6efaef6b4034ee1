//! Fixed numeric formatting for machine-readable outputs.
//!
//! Every CSV the tool writes uses 17 significant digits so that repeated
//! runs with the same manifest are byte-identical and values round-trip
//! through f64 exactly.

/// Format with 17 significant digits (1 leading + 16 fractional).
pub fn float17(x: f64) -> String {
    format!("{x:.16e}")
}
