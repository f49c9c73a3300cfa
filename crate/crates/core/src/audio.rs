//! PCM WAV ingestion/emission, SNR-controlled mixing and a deterministic
//! synthetic noisy-speech generator.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::hash4;
use crate::Scalar;

pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 16_000;

/// One 16-bit quantization step in normalized amplitude.
pub const PCM16_STEP: f64 = 1.0 / 32768.0;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("empty audio buffer")]
    Empty,
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedCodec(String),
    #[error("malformed WAV file: {0}")]
    Malformed(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("{0} signal has zero energy")]
    ZeroEnergy(&'static str),
    #[error("invalid SNR range: low {low} dB > high {high} dB")]
    InvalidRange { low: f64, high: f64 },
    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono PCM signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer<T> {
    samples: Vec<T>,
    sample_rate_hz: u32,
}

impl<T: Scalar> AudioBuffer<T> {
    pub fn new(samples: Vec<T>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        if sample_rate_hz == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn zeros(len: usize, sample_rate_hz: u32) -> Result<Self, AudioError> {
        Self::new(vec![T::zero(); len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    pub fn energy(&self) -> T {
        self.samples.iter().map(|&s| s * s).sum()
    }

    pub fn peak(&self) -> T {
        self.samples
            .iter()
            .fold(T::zero(), |m, &s| if s.abs() > m { s.abs() } else { m })
    }

    pub fn scaled(&self, gain: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Convert to another precision.
    pub fn cast<U: Scalar>(&self) -> AudioBuffer<U> {
        AudioBuffer {
            samples: self.samples.iter().map(|s| U::lit(s.as_f64())).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Clean, scaled noise and their sum, all of equal length and rate.
///
/// `noise` holds the noise *after* SNR scaling, so `noisy = clean + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyTriple<T> {
    pub clean: AudioBuffer<T>,
    pub noise: AudioBuffer<T>,
    pub noisy: AudioBuffer<T>,
    pub snr_db: f64,
}

impl<T: Scalar> NoisyTriple<T> {
    /// `10·log10(‖clean‖² / ‖noise‖²)` as actually realized by the buffers.
    pub fn measured_snr_db(&self) -> f64 {
        10.0 * (self.clean.energy().as_f64() / self.noise.energy().as_f64()).log10()
    }
}

/// Read a PCM WAV file, keeping the first channel and rescaling to [-1, 1].
pub fn read_wav<T: Scalar>(path: impl AsRef<Path>) -> Result<AudioBuffer<T>, AudioError> {
    let reader = hound::WavReader::open(path.as_ref()).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels.max(1));
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .step_by(channels)
            .map(|s| s.map(|v| f64::from(v) * PCM16_STEP))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedCodec(format!(
                "{bits}-bit {fmt:?} (need 16-bit int or 32-bit float)"
            )))
        }
    };
    if samples.is_empty() {
        return Err(AudioError::Empty);
    }
    AudioBuffer::new(samples.into_iter().map(T::lit).collect(), spec.sample_rate)
}

fn map_hound(e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            AudioError::Malformed("truncated file".into())
        }
        hound::Error::IoError(io) => AudioError::Io(io),
        hound::Error::Unsupported => AudioError::UnsupportedCodec("unsupported WAV format".into()),
        other => AudioError::Malformed(other.to_string()),
    }
}

/// Outcome of [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WriteReport {
    /// Samples whose magnitude exceeded 1 and were clamped.
    pub clipped: usize,
}

/// Write a 16-bit mono PCM WAV. Out-of-range samples are clamped, never wrapped.
pub fn write_wav<T: Scalar>(buf: &AudioBuffer<T>, path: impl AsRef<Path>) -> Result<WriteReport, AudioError> {
    if buf.is_empty() {
        return Err(AudioError::Empty);
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec).map_err(map_hound)?;
    let mut report = WriteReport::default();
    for &s in buf.samples() {
        let v = s.as_f64();
        let clamped = if v.abs() > 1.0 {
            report.clipped += 1;
            v.signum()
        } else {
            v
        };
        let q = (clamped * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(map_hound)?;
    }
    writer.finalize().map_err(map_hound)?;
    if report.clipped > 0 {
        log::warn!(
            "{}: clipped {} of {} samples to [-1, 1]",
            path.as_ref().display(),
            report.clipped,
            buf.len()
        );
    }
    Ok(report)
}

/// Scale `noise` so that `‖clean‖² / ‖α·noise‖²` equals `snr_db`, then mix.
pub fn mix_at_snr<T: Scalar>(
    clean: &AudioBuffer<T>,
    noise: &AudioBuffer<T>,
    snr_db: f64,
) -> Result<NoisyTriple<T>, AudioError> {
    if clean.len() != noise.len() {
        return Err(AudioError::LengthMismatch(clean.len(), noise.len()));
    }
    if clean.sample_rate_hz() != noise.sample_rate_hz() {
        return Err(AudioError::RateMismatch(clean.sample_rate_hz(), noise.sample_rate_hz()));
    }
    let ec = clean.energy().as_f64();
    let en = noise.energy().as_f64();
    if ec == 0.0 {
        return Err(AudioError::ZeroEnergy("clean"));
    }
    if en == 0.0 {
        return Err(AudioError::ZeroEnergy("noise"));
    }
    let alpha = ec.sqrt() / (en.sqrt() * 10f64.powf(snr_db / 20.0));
    let scaled = noise.scaled(T::lit(alpha));
    let noisy = AudioBuffer::new(
        clean
            .samples()
            .iter()
            .zip(scaled.samples())
            .map(|(&c, &n)| c + n)
            .collect(),
        clean.sample_rate_hz(),
    )?;
    Ok(NoisyTriple {
        clean: clean.clone(),
        noise: scaled,
        noisy,
        snr_db,
    })
}

/// Closed SNR interval in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrRange {
    pub low: f64,
    pub high: f64,
}

impl Default for SnrRange {
    fn default() -> Self {
        Self { low: -5.0, high: 20.0 }
    }
}

impl SnrRange {
    pub fn new(low: f64, high: f64) -> Result<Self, AudioError> {
        if !(low <= high) || !low.is_finite() || !high.is_finite() {
            return Err(AudioError::InvalidRange { low, high });
        }
        Ok(Self { low, high })
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.low..=self.high).contains(&x)
    }
}

/// Parameters of [`synth_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub count: usize,
    pub duration_s: f64,
    pub snr_range: SnrRange,
    pub seed: u64,
    pub sample_rate_hz: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 8,
            duration_s: 30.0,
            snr_range: SnrRange::default(),
            seed: 0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

/// Peak of the noisy mixture after generation.
const SYNTH_PEAK: f64 = 0.9;

/// Generate `count` clean/noise/noisy triples. Triple `i` depends only on
/// `(seed, i, duration, range, rate)`.
pub fn synth_dataset<T: Scalar>(cfg: &SynthConfig) -> Result<Vec<NoisyTriple<T>>, AudioError> {
    let range = SnrRange::new(cfg.snr_range.low, cfg.snr_range.high)?;
    if cfg.count == 0 {
        return Err(AudioError::InvalidParameter("count must be positive".into()));
    }
    if !(cfg.duration_s > 0.0) {
        return Err(AudioError::InvalidParameter("duration must be positive".into()));
    }
    if cfg.sample_rate_hz == 0 {
        return Err(AudioError::ZeroSampleRate);
    }
    let len = (cfg.duration_s * f64::from(cfg.sample_rate_hz)).round() as usize;
    if len == 0 {
        return Err(AudioError::InvalidParameter("duration shorter than one sample".into()));
    }
    (0..cfg.count)
        .map(|i| synth_triple(cfg, range, len, i as u64))
        .collect()
}

fn synth_triple<T: Scalar>(
    cfg: &SynthConfig,
    range: SnrRange,
    len: usize,
    index: u64,
) -> Result<NoisyTriple<T>, AudioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(hash4(cfg.seed, 0x5EED, index, 0));
    let fs = f64::from(cfg.sample_rate_hz);
    let clean = speech_like(&mut rng, len, fs);
    let noise = filtered_noise(&mut rng, len);
    let snr_db = if range.low == range.high {
        range.low
    } else {
        rng.random_range(range.low..=range.high)
    };

    let clean = AudioBuffer::new(clean, cfg.sample_rate_hz)?;
    let noise = AudioBuffer::new(noise, cfg.sample_rate_hz)?;
    let mixed = mix_at_snr::<f64>(&clean, &noise, snr_db)?;
    let peak = mixed.noisy.peak();
    let gain = if peak > 0.0 { SYNTH_PEAK / peak } else { 1.0 };
    Ok(NoisyTriple {
        clean: mixed.clean.scaled(gain).cast(),
        noise: mixed.noise.scaled(gain).cast(),
        noisy: mixed.noisy.scaled(gain).cast(),
        snr_db,
    })
}

/// Harmonic stack on a slowly wobbling fundamental, gated by on/off syllables
/// with raised-cosine edges.
fn speech_like(rng: &mut ChaCha8Rng, len: usize, fs: f64) -> Vec<f64> {
    let f0 = rng.random_range(80.0..300.0);
    let harmonics = rng.random_range(3..=8usize);
    let amps: Vec<f64> = (1..=harmonics).map(|h| rng.random_range(0.5..1.0) / h as f64).collect();
    let phases: Vec<f64> = (0..harmonics)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let vib_rate = rng.random_range(2.0..6.0);
    let vib_depth = rng.random_range(0.0..0.04);
    let vib_phase = rng.random_range(0.0..std::f64::consts::TAU);

    let envelope = syllable_envelope(rng, len, fs);

    let nyquist = fs / 2.0;
    let mut phase = 0.0f64;
    let mut out = Vec::with_capacity(len);
    for (n, env) in envelope.iter().enumerate() {
        let t = n as f64 / fs;
        let f = f0 * (1.0 + vib_depth * (std::f64::consts::TAU * vib_rate * t + vib_phase).sin());
        let mut s = 0.0;
        for (h, (&a, &p)) in amps.iter().zip(&phases).enumerate() {
            let k = (h + 1) as f64;
            if k * f < nyquist {
                s += a * (k * phase + p).sin();
            }
        }
        out.push(env * s);
        phase += std::f64::consts::TAU * f / fs;
    }
    out
}

fn syllable_envelope(rng: &mut ChaCha8Rng, len: usize, fs: f64) -> Vec<f64> {
    let ramp = (0.02 * fs).max(1.0) as usize;
    let mut env = vec![0.0; len];
    let mut pos = 0usize;
    let mut on = true;
    while pos < len {
        let dur_s = if on {
            rng.random_range(0.15..0.5)
        } else {
            rng.random_range(0.05..0.25)
        };
        let dur = ((dur_s * fs) as usize).max(1);
        let end = (pos + dur).min(len);
        if on {
            let level = rng.random_range(0.6..1.0);
            for (i, e) in env[pos..end].iter_mut().enumerate() {
                let from_start = i;
                let to_end = end - pos - 1 - i;
                let edge = from_start.min(to_end);
                let g = if edge < ramp {
                    0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / ramp as f64).cos()
                } else {
                    1.0
                };
                *e = level * g;
            }
        }
        pos = end;
        on = !on;
    }
    env
}

/// Gaussian noise through a random one-pole filter plus a little white floor.
fn filtered_noise(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let pole: f64 = rng.random_range(-0.7..0.97);
    let floor: f64 = rng.random_range(0.05..0.3);
    let mut y = 0.0;
    (0..len)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            let w: f64 = StandardNormal.sample(rng);
            y = pole * y + (1.0 - pole.abs()) * x;
            y + floor * w
        })
        .collect()
}

/// One dataset entry; paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub clean: PathBuf,
    /// Absent for user-supplied clean/noisy pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<PathBuf>,
    pub noisy: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

/// Manifest: one JSON object per line.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<(), AudioError> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in entries {
        let line = serde_json::to_string(e).map_err(|err| AudioError::Manifest {
            line: 0,
            msg: err.to_string(),
        })?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, AudioError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let entry = serde_json::from_str(trimmed).map_err(|e| AudioError::Manifest {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

/// Load the triple named by a manifest entry. Without a noise file the noise
/// is taken as `noisy − clean`.
pub fn load_triple<T: Scalar>(base_dir: &Path, entry: &ManifestEntry) -> Result<NoisyTriple<T>, AudioError> {
    let clean: AudioBuffer<T> = read_wav(base_dir.join(&entry.clean))?;
    let noisy: AudioBuffer<T> = read_wav(base_dir.join(&entry.noisy))?;
    if clean.len() != noisy.len() {
        return Err(AudioError::LengthMismatch(clean.len(), noisy.len()));
    }
    if clean.sample_rate_hz() != noisy.sample_rate_hz() {
        return Err(AudioError::RateMismatch(clean.sample_rate_hz(), noisy.sample_rate_hz()));
    }
    let noise = match &entry.noise {
        Some(p) => read_wav(base_dir.join(p))?,
        None => AudioBuffer::new(
            noisy
                .samples()
                .iter()
                .zip(clean.samples())
                .map(|(&y, &x)| y - x)
                .collect(),
            clean.sample_rate_hz(),
        )?,
    };
    if noise.len() != clean.len() {
        return Err(AudioError::LengthMismatch(clean.len(), noise.len()));
    }
    let mut triple = NoisyTriple {
        clean,
        noise,
        noisy,
        snr_db: 0.0,
    };
    triple.snr_db = entry.snr_db.unwrap_or_else(|| triple.measured_snr_db());
    Ok(triple)
}
