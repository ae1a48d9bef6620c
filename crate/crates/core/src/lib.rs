//! Spatial-parity Bell test simulator.
//!
//! A Gaussian pump, optionally parity-rotated or half-blocked, drives a
//! one-dimensional biphoton. Each photon passes a parity analyzer built from
//! a phase plate and a spatial flip; the crate computes outcome
//! probabilities, CHSH values, Schmidt spectra, two-qubit parity tomography
//! and finite-count experiment statistics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bell;
pub mod biphoton;
pub mod config;
pub mod counting;
pub mod error;
pub mod field;
pub mod output;
pub mod pump;
pub mod schmidt;
pub mod tomography;

pub use bell::{
    chsh, correlation, landscape, optimal_settings, outcome_probabilities, predicted_correlation,
    AnalyzerModel, BellEngine, Landscape, MeasurementSettings, OutcomeProbabilities, ThetaAxis,
};
pub use biphoton::{build_biphoton, BiphotonAmplitude, Representation};
pub use config::{parse_config, Config};
pub use counting::{
    estimate_chsh, estimate_correlation, run_experiment, simulate_counts, slice_scan, ChshEstimate,
    CountRecord, ExperimentReport, RunConfig, StreamKey,
};
pub use error::{Error, Result};
pub use field::{make_grid, Grid, SampledField, Side};
pub use pump::{prepare_pump, Pump, PumpSpec};
pub use schmidt::{schmidt_decompose, schmidt_number_analytic, SchmidtSpectrum};
pub use tomography::{concurrence, project_parity_tomography, ParityDensityMatrix};

/// `1 - (2/pi) asin((w^2 - b^2)/(w^2 + b^2))`: the finite-kernel deficit of
/// the Gaussian biphoton's `<X (x) X>`.
pub fn finite_kernel_epsilon(w: f64, b: f64) -> f64 {
    let rho = (w * w - b * b) / (w * w + b * b);
    1.0 - 2.0 / std::f64::consts::PI * rho.asin()
}
