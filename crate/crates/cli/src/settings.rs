//! Resolved per-command settings: defaults ← config file ← flags.

use std::fs;
use std::path::{Path, PathBuf};

use neuroaudio::coding::{CodecParams, Scheme};
use neuroaudio::dsp::StftConfig;
use neuroaudio::model::{ModelConfig, TrainConfig};
use neuroaudio::perf::REFERENCE_TOTAL_MACS;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::Baseline;
use crate::error::{CliError, CliResult};

/// Settings from `path`, or defaults when no file is given.
pub fn load<S: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<S> {
    match path {
        None => Ok(S::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
            Ok(toml::from_str(&text)?)
        }
    }
}

/// Write `settings` as `<dir>/<name>.toml`.
pub fn echo<S: Serialize>(dir: &Path, name: &str, settings: &S) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let text = toml::to_string(settings).map_err(|e| CliError::data(e.to_string()))?;
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, text)?;
    Ok(path)
}

pub fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a PathBuf> {
    v.as_ref()
        .ok_or_else(|| CliError::usage(format!("missing {flag} (flag or config file)")))
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}
pub(crate) use set;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    pub out: Option<PathBuf>,
    pub count: usize,
    pub seconds: f64,
    pub seed: u64,
    pub snr_low: f64,
    pub snr_high: f64,
    pub sample_rate: u32,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            out: None,
            count: 8,
            seconds: 30.0,
            seed: 0,
            snr_low: -5.0,
            snr_high: 20.0,
            sample_rate: 16_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TrainSettings {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub overfit_one: bool,
    pub mask_logit: Option<f64>,
    pub train: TrainConfig,
    pub model: ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DenoiseSettings {
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub estimates: Option<PathBuf>,
    pub baseline: Baseline,
    pub out: Option<PathBuf>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            manifest: None,
            checkpoint: None,
            estimates: None,
            baseline: Baseline::Noisy,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerfSettings {
    pub profile: Option<PathBuf>,
    pub macs: f64,
    pub out: Option<PathBuf>,
    pub model: ModelConfig,
}

impl Default for PerfSettings {
    fn default() -> Self {
        Self {
            profile: None,
            macs: REFERENCE_TOTAL_MACS,
            out: None,
            model: ModelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpressivitySettings {
    pub theta: f64,
    pub dt: f64,
    pub points: usize,
    pub out: Option<PathBuf>,
}

impl Default for ExpressivitySettings {
    fn default() -> Self {
        Self {
            theta: 1.0,
            dt: 0.01,
            points: 101,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct StftSettings {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub inverse: bool,
    pub stft: StftConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodeSettings {
    pub values: Vec<f64>,
    pub output: Option<PathBuf>,
    pub codec: CodecParams,
}

impl Default for EncodeSettings {
    fn default() -> Self {
        Self {
            values: Vec::new(),
            output: None,
            codec: CodecParams::with_scheme(Scheme::Rate, 16),
        }
    }
}
