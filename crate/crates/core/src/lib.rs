//! Involution and η-involution delay channels, a discrete-event circuit
//! engine, and short-pulse-filtration analysis.

pub mod analysis;
pub mod channel;
pub mod circuit;
pub mod delay_model;
pub mod rootfind;
pub mod scalar;
pub mod signals;
pub mod waveform_lab;

/// Simulation time in seconds.
pub type Time = f64;

pub use channel::{apply_channel, AdversaryStrategy, ChannelSpec, EtaBounds};
pub use delay_model::{exp_channel, DelayFunction, Edge, ExpChannelParams};
pub use scalar::Real;
pub use signals::{Signal, Transition};

pub type DelayFunction32 = DelayFunction<f32>;
pub type ExpChannelParams32 = ExpChannelParams<f32>;
pub type EtaBounds32 = EtaBounds<f32>;
pub type PulseTrainCharacterization32 = analysis::PulseTrainCharacterization<f32>;
