//! Attention/spiking denoiser: spectral embedding with positional encoding,
//! multi-head attention layers, a spiking self-attention block, an SNN
//! encode → LIF → decode stage and a sigmoid magnitude-mask head.
//!
//! Data flow for one utterance of `F` frames and `D` bins:
//!
//! ```text
//! noisy STFT ─► log(1+|X|) ─► embed (D→S) + PE ─► [MHA + FFN] × layers
//!            ─► spiking self-attention ─► SNN encode/LIF/decode
//!            ─► sigmoid head (S→D) ─► frame delay ─► mask · X ─► ISTFT
//! ```
//!
//! Spike nonlinearities use the fast-sigmoid surrogate
//! `1/(1 + α|u − θ|)²` on the backward pass.

mod checkpoint;
mod counter;
mod network;
mod ops;
mod params;
mod spiking;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use counter::{MacCounter, MacCounts, MacTerm};
pub use network::{ForwardOutput, Model};
pub use ops::{attention, embed, positional_encoding, softmax_rows, AttentionOutput};
pub use params::{LayerParams, Params, SpikingParams};
pub use spiking::{snn_decode_layer, snn_encode_layer, snn_lif_layer, spiking_attention, SpikingAttentionOutput};
pub use train::{
    check_gradients, evaluate, train, EvalSummary, GradCheck, PreparedSample, StepLog, TrainConfig, TrainError,
    TrainState,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding::{CodecParams, CodingError, Scheme};
use crate::dsp::{DspError, StftConfig};
use crate::neuron::LifParams;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    Shape {
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Architecture and spiking hyper-parameters.
///
/// `input_dim` (D), `embed_dim` (S), `num_heads` (T), `snn_neurons` (N) and
/// `snn_steps` (t_sim) are the symbols of the analytic MAC model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub snn_neurons: usize,
    pub snn_steps: usize,
    pub lif: LifParams<f64>,
    pub codec: CodecParams,
    pub seed: u64,
    /// Hidden width of each feed-forward block, as a multiple of `embed_dim`.
    pub ffn_mult: usize,
    pub spiking_attention: bool,
    pub snn_stage: bool,
    /// Run LIF dynamics between SNN encode and decode (rate codec only).
    pub recurrent_lif: bool,
    pub positional_encoding: bool,
    /// Frames by which the mask lags the input.
    pub delay_frames: usize,
    pub surrogate_alpha: f64,
    /// Initial head bias; σ(2) ≈ 0.88 starts close to a pass-through.
    pub head_bias_init: f64,
    pub stft: StftConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 257,
            embed_dim: 64,
            num_heads: 4,
            num_layers: 2,
            snn_neurons: 64,
            snn_steps: 16,
            lif: LifParams {
                decay: 0.9,
                threshold: 1.0,
                reset: 0.0,
                refractory_steps: 0,
            },
            codec: CodecParams {
                scheme: Scheme::Rate,
                num_steps: 16,
                dt_s: 1e-3,
                r_max: 1000.0,
                ..CodecParams::default()
            },
            seed: 0,
            ffn_mult: 2,
            spiking_attention: true,
            snn_stage: true,
            recurrent_lif: true,
            positional_encoding: true,
            delay_frames: 0,
            surrogate_alpha: 10.0,
            head_bias_init: 2.0,
            stft: StftConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads.max(1)
    }

    pub fn ffn_dim(&self) -> usize {
        self.embed_dim * self.ffn_mult
    }

    /// Codec parameters with the step count forced to `snn_steps`.
    pub fn snn_codec(&self) -> CodecParams {
        CodecParams {
            num_steps: self.snn_steps,
            seed: self.seed ^ self.codec.seed,
            ..self.codec
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.input_dim == 0 || self.embed_dim == 0 || self.num_heads == 0 {
            return bad("input_dim, embed_dim and num_heads must be positive".into());
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return bad(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.input_dim != self.stft.num_bins() {
            return bad(format!(
                "input_dim {} does not match the {} STFT bins",
                self.input_dim,
                self.stft.num_bins()
            ));
        }
        if self.ffn_mult == 0 {
            return bad("ffn_mult must be positive".into());
        }
        if (self.spiking_attention || self.snn_stage) && self.snn_steps == 0 {
            return bad("snn_steps (t_sim) must be at least 1".into());
        }
        if self.snn_stage {
            if self.snn_neurons != self.embed_dim {
                return bad(format!(
                    "snn_neurons {} must equal embed_dim {} (one neuron per channel)",
                    self.snn_neurons, self.embed_dim
                ));
            }
            match self.codec.scheme {
                Scheme::Rate => {}
                Scheme::Ttfs if !self.recurrent_lif => {}
                Scheme::Ttfs => return bad("the LIF stage needs rate coding; disable recurrent_lif for TTFS".into()),
                other => return bad(format!("SNN stage supports rate or TTFS coding, not {other:?}")),
            }
            self.snn_codec().validate()?;
            self.lif
                .validate()
                .map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        }
        if self.spiking_attention && !(self.codec.rate_per_step() > 0.0) {
            return bad("spiking attention needs a positive rate scale r_max·dt".into());
        }
        if !(self.surrogate_alpha > 0.0) {
            return bad("surrogate_alpha must be positive".into());
        }
        self.stft.validate()?;
        Ok(())
    }
}
