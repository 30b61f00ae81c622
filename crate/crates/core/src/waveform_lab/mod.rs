//! Analog stand-in for measured delay data: a first-order RC stage with an
//! optional rippled supply, threshold-crossing extraction, deviation and
//! η-coverage analysis, and exp-channel parameter fitting.

mod deviation;
mod fit;
mod surrogate;

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::channel::ChannelError;
use crate::delay_model::DelayError;
use crate::rootfind::RootError;

pub use deviation::{
    coverage_by_bins, deviation_analysis, is_covered, write_deviation_csv, CoverageBin,
    DeviationReport, DeviationSample,
};
pub use fit::{
    fit_exp_channel, fit_exp_channel_with, fit_residuals, FitOptions, FitReport, FitResidual,
    MIN_SAMPLES,
};
pub use surrogate::{
    pulse_width_samples, synth_crossings, Crossing, DisturbancePhase, RcSurrogateParams, SynthRun,
    VddDisturbance, MAX_AMPLITUDE_FRACTION,
};

#[derive(Debug, Error)]
pub enum WaveformError {
    #[error("invalid surrogate parameters: {0}")]
    InvalidParams(String),
    #[error("η budget invalid: η⁺ = {eta_plus} leaves η⁻ = {eta_minus} < 0")]
    EtaBudgetInvalid { eta_plus: f64, eta_minus: f64 },
    #[error("fit needs at least {need} delay samples, got {got}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("fit diverged: {0}")]
    FitDiverged(String),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
