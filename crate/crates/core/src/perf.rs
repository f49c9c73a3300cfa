//! Analytic MAC model, throughput/efficiency arithmetic, device profiles and
//! a cross-check of the analytic counts against an instrumented forward pass.
//!
//! Analytic terms, for input features `D`, embedding width `S`, heads `T`,
//! SNN neurons `N` and simulation steps `t_sim`:
//!
//! ```text
//! embedding    D·S
//! transformer  2·D²·S + D·S²·T
//! snn          N·t_sim
//! ```
//!
//! Mapping onto the instrumented counters for one frame:
//!
//! | analytic term        | counter                               | exact |
//! |----------------------|---------------------------------------|-------|
//! | `D·S`                | [`MacTerm::Embedding`]                | yes   |
//! | `N·t_sim`            | [`MacTerm::Snn`]                      | yes   |
//! | `2·D²·S`             | [`MacTerm::AttentionProjection`]      | no    |
//! | `D·S²·T`             | [`MacTerm::AttentionScores`]          | no    |
//!
//! The attention rows are reported side by side; the counted values follow
//! [`attention_mac_mapping`] instead.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{Spectrogram, StftConfig};
use crate::model::{MacCounter, MacCounts, Model, ModelConfig, ModelError};
use crate::Scalar;

pub use crate::model::MacTerm;

/// Total MACs of the reference design, in operations (960 MOP).
pub const REFERENCE_TOTAL_MACS: f64 = 960e6;
/// Reference peak event rate, Mevents/s.
pub const MAX_EVENT_RATE_MEVENTS: f64 = 8.76;
/// Reference core clock of the signal path, MHz.
pub const CORE_CLOCK_MHZ: f64 = 250.0;
/// Sample resolution used for the dynamic-range figure.
pub const BIT_DEPTH: u32 = 16;
/// Tolerance for matching printed table cells.
pub const TABLE_TOLERANCE: f64 = 0.02;

#[derive(Debug, Error, PartialEq)]
pub enum PerfError {
    #[error("number of samples must be positive")]
    ZeroSamples,
    #[error("latency must be positive, got {0} ms")]
    NonPositiveLatency(f64),
    #[error("power must be positive, got {0} W")]
    NonPositivePower(f64),
    #[error("invalid device profile: {0}")]
    InvalidProfile(String),
    #[error("MAC counting is disabled for this forward pass")]
    CountingDisabled,
    #[error("instrumented forward failed: {0}")]
    Forward(String),
}

impl From<ModelError> for PerfError {
    fn from(e: ModelError) -> Self {
        PerfError::Forward(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerfConfig {
    pub d: u64,
    pub s: u64,
    pub t: u64,
    pub n: u64,
    pub t_sim: u64,
}

impl From<&ModelConfig> for PerfConfig {
    fn from(c: &ModelConfig) -> Self {
        Self {
            d: c.input_dim as u64,
            s: c.embed_dim as u64,
            t: c.num_heads as u64,
            n: if c.snn_stage { c.snn_neurons as u64 } else { 0 },
            t_sim: c.snn_steps as u64,
        }
    }
}

pub fn mac_embedding(c: &PerfConfig) -> u64 {
    c.d * c.s
}

pub fn mac_transformer(c: &PerfConfig) -> u64 {
    mac_transformer_terms(c).0 + mac_transformer_terms(c).1
}

/// `(2·D²·S, D·S²·T)`.
pub fn mac_transformer_terms(c: &PerfConfig) -> (u64, u64) {
    (2 * c.d * c.d * c.s, c.d * c.s * c.s * c.t)
}

pub fn mac_snn(c: &PerfConfig) -> u64 {
    c.n * c.t_sim
}

pub fn mac_total(c: &PerfConfig) -> u64 {
    mac_embedding(c) + mac_transformer(c) + mac_snn(c)
}

/// Mean latency per sample.
pub fn simulation_time(total_inference_ms: f64, num_samples: usize) -> Result<f64, PerfError> {
    if num_samples == 0 {
        return Err(PerfError::ZeroSamples);
    }
    Ok(total_inference_ms / num_samples as f64)
}

/// GOP/s from an operation count and a latency in milliseconds.
pub fn throughput(macs: f64, latency_ms: f64) -> Result<f64, PerfError> {
    if !(latency_ms > 0.0) {
        return Err(PerfError::NonPositiveLatency(latency_ms));
    }
    Ok((macs / 1e9) / (latency_ms / 1000.0))
}

/// GOP/s/W.
pub fn efficiency(throughput_gops: f64, power_w: f64) -> Result<f64, PerfError> {
    if !(power_w > 0.0) {
        return Err(PerfError::NonPositivePower(power_w));
    }
    Ok(throughput_gops / power_w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub technology_nm: u32,
    pub frequency_mhz: f64,
    pub power_w: f64,
    pub latency_ms: f64,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<(), PerfError> {
        if self.name.trim().is_empty() {
            return Err(PerfError::InvalidProfile("empty name".into()));
        }
        if !(self.frequency_mhz > 0.0) {
            return Err(PerfError::InvalidProfile(format!(
                "{}: frequency must be positive",
                self.name
            )));
        }
        if !(self.power_w > 0.0) {
            return Err(PerfError::InvalidProfile(format!(
                "{}: power must be positive",
                self.name
            )));
        }
        if !(self.latency_ms > 0.0) {
            return Err(PerfError::InvalidProfile(format!(
                "{}: latency must be positive",
                self.name
            )));
        }
        Ok(())
    }
}

/// Printed throughput and efficiency for a built-in profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrintedCells {
    pub throughput_gops: f64,
    pub efficiency_gops_per_w: f64,
}

fn profile(name: &str, nm: u32, mhz: f64, w: f64, ms: f64) -> DeviceProfile {
    DeviceProfile {
        name: name.to_string(),
        technology_nm: nm,
        frequency_mhz: mhz,
        power_w: w,
        latency_ms: ms,
    }
}

/// The three reference devices with their printed derived cells.
pub fn builtin_profiles() -> Vec<(DeviceProfile, PrintedCells)> {
    let cells = |t, e| PrintedCells {
        throughput_gops: t,
        efficiency_gops_per_w: e,
    };
    vec![
        (
            profile("Intel i9 12900H (CPU)", 10, 3700.0, 28.0, 110.62),
            cells(8.67, 0.30),
        ),
        (
            profile("NVIDIA RTX 3060 (GPU)", 8, 1320.0, 80.0, 3.15),
            cells(304.76, 3.80),
        ),
        (
            profile("Xilinx VU37P (FPGA)", 16, 100.0, 3.55, 13.5),
            cells(71.11, 19.75),
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRow {
    pub profile: DeviceProfile,
    pub macs: f64,
    pub throughput_gops: f64,
    pub efficiency_gops_per_w: f64,
    pub printed: Option<PrintedCells>,
}

impl DeviceRow {
    pub fn throughput_matches(&self) -> Option<bool> {
        self.printed
            .map(|p| (self.throughput_gops - p.throughput_gops).abs() <= TABLE_TOLERANCE)
    }

    pub fn efficiency_matches(&self) -> Option<bool> {
        self.printed
            .map(|p| (self.efficiency_gops_per_w - p.efficiency_gops_per_w).abs() <= TABLE_TOLERANCE)
    }
}

pub fn device_row(profile: DeviceProfile, macs: f64, printed: Option<PrintedCells>) -> Result<DeviceRow, PerfError> {
    profile.validate()?;
    let tp = throughput(macs, profile.latency_ms)?;
    Ok(DeviceRow {
        efficiency_gops_per_w: efficiency(tp, profile.power_w)?,
        throughput_gops: tp,
        macs,
        profile,
        printed,
    })
}

/// Built-in rows followed by `extra` profiles, all at `macs`.
pub fn device_table(macs: f64, extra: &[DeviceProfile]) -> Result<Vec<DeviceRow>, PerfError> {
    builtin_profiles()
        .into_iter()
        .map(|(p, c)| device_row(p, macs, Some(c)))
        .chain(extra.iter().cloned().map(|p| device_row(p, macs, None)))
        .collect()
}

/// The two derivations of the FPGA efficiency cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyDiscrepancy {
    pub printed_efficiency: f64,
    pub power_w: f64,
    /// Throughput listed in the device table.
    pub device_table_throughput: f64,
    pub from_device_table: f64,
    /// Throughput listed in the comparison table.
    pub comparison_throughput: f64,
    pub from_comparison: f64,
    /// True when the device-table throughput does not reproduce the printed
    /// efficiency within [`TABLE_TOLERANCE`].
    pub flagged: bool,
}

pub fn fpga_efficiency_check() -> EfficiencyDiscrepancy {
    let (printed, power, t2, t3) = (19.75, 3.55, 71.11, 70.11);
    let from_device_table = t2 / power;
    EfficiencyDiscrepancy {
        printed_efficiency: printed,
        power_w: power,
        device_table_throughput: t2,
        from_device_table,
        comparison_throughput: t3,
        from_comparison: t3 / power,
        flagged: (from_device_table - printed).abs() > TABLE_TOLERANCE,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    /// Reference operation count used for the device figures.
    pub mac_total: f64,
    /// Analytic count for the supplied model configuration.
    pub model_mac_total: u64,
    pub device: String,
    pub latency_ms: f64,
    pub throughput_gops: f64,
    pub efficiency_gops_per_w: f64,
    pub bands: usize,
    pub freq_range_hz: (f64, f64),
    pub dynamic_range_db: f64,
    pub max_event_rate_mevents: f64,
    pub clock_mhz: f64,
    /// Operating frequency of the FPGA profile, kept apart from `clock_mhz`.
    pub fpga_frequency_mhz: f64,
}

pub fn dynamic_range_db(bits: u32) -> f64 {
    20.0 * 2f64.powi(bits as i32).log10()
}

/// Band count, frequency range and dynamic range of `stft`, with device
/// figures for the FPGA profile at [`REFERENCE_TOTAL_MACS`].
pub fn characteristics_report(stft: &StftConfig, model: &ModelConfig) -> PerfReport {
    let (fpga, _) = builtin_profiles().pop().expect("three profiles");
    let tp = throughput(REFERENCE_TOTAL_MACS, fpga.latency_ms).expect("positive latency");
    PerfReport {
        mac_total: REFERENCE_TOTAL_MACS,
        model_mac_total: mac_total(&PerfConfig::from(model)),
        device: fpga.name.clone(),
        latency_ms: fpga.latency_ms,
        throughput_gops: tp,
        efficiency_gops_per_w: efficiency(tp, fpga.power_w).expect("positive power"),
        bands: stft.num_bins() - 1,
        freq_range_hz: (0.0, f64::from(stft.sample_rate_hz) / 2.0),
        dynamic_range_db: dynamic_range_db(BIT_DEPTH),
        max_event_rate_mevents: MAX_EVENT_RATE_MEVENTS,
        clock_mhz: CORE_CLOCK_MHZ,
        fpga_frequency_mhz: fpga.frequency_mhz,
    }
}

/// Expected attention counters for `frames` frames:
/// `(projection, scores)`, with per-layer `4·F·S²` and `2·F²·S`, and for
/// spiking attention `4·F·S²` and `F²·S·t_sim + F²·S`.
pub fn attention_mac_mapping(cfg: &ModelConfig, frames: usize) -> (u64, u64) {
    let (f, s, l) = (frames as u64, cfg.embed_dim as u64, cfg.num_layers as u64);
    let mut proj = l * 4 * f * s * s;
    let mut scores = l * 2 * f * f * s;
    if cfg.spiking_attention {
        proj += 4 * f * s * s;
        scores += f * f * s * cfg.snn_steps as u64 + f * f * s;
    }
    (proj, scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermComparison {
    pub term: String,
    pub analytic: u64,
    pub instrumented: u64,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentedReport {
    pub counts: MacCounts,
    pub analytic_total: u64,
    pub terms: Vec<TermComparison>,
}

/// Run one single-frame forward pass under `counter` and compare the
/// counted MACs with the analytic terms.
pub fn instrumented_macs<T: Scalar>(
    model: &Model<T>,
    counter: Option<&MacCounter>,
) -> Result<InstrumentedReport, PerfError> {
    let counter = counter.ok_or(PerfError::CountingDisabled)?;
    let cfg = &model.config;
    let bins = cfg.stft.num_bins();
    let frame = ndarray::Array2::from_shape_fn((1, bins), |(_, k)| {
        Complex::new(T::lit(1.0 + (k % 7) as f64), T::lit((k % 3) as f64 - 1.0))
    });
    let spec = Spectrogram::new(frame, cfg.stft).map_err(|e| PerfError::Forward(e.to_string()))?;
    counter.reset();
    model.forward_with(&spec, Some(counter))?;
    let counts = counter.snapshot();
    let pc = PerfConfig::from(cfg);
    let (t1, t2) = mac_transformer_terms(&pc);
    let row = |term: &str, analytic: u64, instrumented: u64| TermComparison {
        term: term.to_string(),
        analytic,
        instrumented,
        exact: analytic == instrumented,
    };
    Ok(InstrumentedReport {
        analytic_total: mac_total(&pc),
        terms: vec![
            row("embedding", mac_embedding(&pc), counts.embedding),
            row("transformer_projection", t1, counts.attention_projection),
            row("transformer_scores", t2, counts.attention_scores),
            row("snn", mac_snn(&pc), counts.snn),
        ],
        counts,
    })
}
