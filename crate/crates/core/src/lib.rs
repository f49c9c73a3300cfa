//! Hybrid spiking/transformer audio denoising.
//!
//! The crate covers the whole signal path: WAV ingestion and synthetic
//! noisy-speech generation ([`audio`]), STFT/ISTFT framing ([`dsp`]), spike
//! codecs ([`coding`]), leaky integrate-and-fire dynamics in float and Q-format
//! fixed point ([`neuron`]), the small piecewise-linear expressivity demo
//! ([`expressivity`]), the attention/spiking denoiser with surrogate-gradient
//! training ([`model`]), SI-SNR ([`metrics`]) and an analytic MAC/throughput
//! model ([`perf`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod coding;
pub mod dsp;
pub mod expressivity;
pub mod metrics;
pub mod model;
pub mod neuron;
pub mod perf;
pub mod rng;
pub mod scalar;

pub use scalar::Scalar;

/// Default working precision.
pub type Real = f64;

pub type AudioBuffer = audio::AudioBuffer<Real>;
pub type AudioBufferF32 = audio::AudioBuffer<f32>;
pub type NoisyTriple = audio::NoisyTriple<Real>;
pub type Spectrogram = dsp::Spectrogram<Real>;
pub type SpectrogramF32 = dsp::Spectrogram<f32>;
pub type LifParams = neuron::LifParams<Real>;
pub type LifState = neuron::LifState<Real>;
pub type TriLinearFn = expressivity::TriLinearFn<Real>;
pub type ReluNet2 = expressivity::ReluNet2<Real>;
pub type SpikeRealization = expressivity::SpikeRealization<Real>;
pub type Model = model::Model<Real>;
pub type ModelF32 = model::Model<f32>;
pub type Params = model::Params<Real>;
pub type TrainState = model::TrainState<Real>;
pub type SiSnrResult = metrics::SiSnrResult<Real>;
