//! Numeric thresholds shared by the checks in this crate.

use serde::{Deserialize, Serialize};

/// Thresholds used across the pipeline. Defaults are the values the
/// acceptance suite runs at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Operator identities are checked against `identity * n` in max-norm.
    pub identity: f64,
    /// Relative singular-value cutoff for ranks and thinness.
    pub rank: f64,
    /// Entrywise agreement between measured and predicted module matrices.
    pub formula: f64,
    /// Eigenvalue and trace-identity agreement for predicted matrices.
    pub eigen: f64,
    /// Relative error of the trace formula.
    pub trace_rel: f64,
    /// Largest accepted distance from an integer before rounding a multiplicity.
    pub integrality: f64,
    /// Fit residual and cross-form agreement in the `q, s` engine.
    pub qs: f64,
    /// Relative cutoff below which a Krein parameter counts as zero.
    pub krein_zero: f64,
    /// Two eigenvalues closer than `spectrum * (1 + |theta|)` are a collision.
    pub spectrum: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-9,
            rank: 1e-8,
            formula: 1e-6,
            eigen: 1e-8,
            trace_rel: 1e-6,
            integrality: 1e-4,
            qs: 1e-8,
            krein_zero: 1e-8,
            spectrum: 1e-8,
        }
    }
}
