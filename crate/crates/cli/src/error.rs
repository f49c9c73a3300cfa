use std::fmt;

use neuroaudio::audio::AudioError;
use neuroaudio::coding::CodingError;
use neuroaudio::dsp::DspError;
use neuroaudio::expressivity::ExpressivityError;
use neuroaudio::metrics::MetricError;
use neuroaudio::model::{CheckpointError, ModelError, TrainError};
use neuroaudio::perf::PerfError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Numeric,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Numeric => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::Usage,
            message: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::Data,
            message: msg.into(),
        }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::Numeric,
            message: msg.into(),
        }
    }

    pub fn context(self, what: impl fmt::Display) -> Self {
        Self {
            kind: self.kind,
            message: format!("{what}: {}", self.message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        match e {
            AudioError::InvalidRange { .. } | AudioError::InvalidParameter(_) | AudioError::ZeroSampleRate => {
                Self::usage(e.to_string())
            }
            AudioError::NonFinite(_) => Self::numeric(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<DspError> for CliError {
    fn from(e: DspError) -> Self {
        match e {
            DspError::InvalidConfig(_) | DspError::NotCola { .. } => Self::usage(e.to_string()),
            DspError::NonFinite { .. } => Self::numeric(e.to_string()),
            DspError::Audio(a) => a.into(),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidConfig(_) | ModelError::Coding(_) => Self::usage(e.to_string()),
            ModelError::NonFinite(_) => Self::numeric(e.to_string()),
            ModelError::Dsp(d) => d.into(),
            ModelError::Shape { .. } => Self::data(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<CodingError> for CliError {
    fn from(e: CodingError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<ExpressivityError> for CliError {
    fn from(e: ExpressivityError) -> Self {
        match e {
            ExpressivityError::NoOutputSpike { .. } => Self::numeric(e.to_string()),
            _ => Self::usage(e.to_string()),
        }
    }
}

impl From<PerfError> for CliError {
    fn from(e: PerfError) -> Self {
        match e {
            PerfError::Forward(_) => Self::numeric(e.to_string()),
            _ => Self::usage(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Model(m) => m.into(),
            _ => Self::data(e.to_string()),
        }
    }
}

impl<T: fmt::Debug> From<TrainError<T>> for CliError {
    fn from(e: TrainError<T>) -> Self {
        match e {
            TrainError::EmptyDataset => Self::data(e.to_string()),
            TrainError::InvalidConfig(_) => Self::usage(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Dsp(d) => d.into(),
            TrainError::Metric(m) => m.into(),
            TrainError::Diverged { .. } => Self::numeric(e.to_string()),
        }
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        Self::usage(format!("config file: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(e.to_string())
    }
}
