//! Short-time Fourier analysis/synthesis with fixed framing.
//!
//! Frame `t` covers samples `[t·hop, t·hop + window)`; there is no centering
//! or padding. Synthesis is weighted overlap-add normalized by the summed
//! squared window (floored at half its peak), which inverts the analysis
//! exactly on the fully overlapped interior and tapers the two ends.

use std::io::{Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioBuffer, AudioError};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid STFT configuration: {0}")]
    InvalidConfig(String),
    #[error("window does not satisfy constant overlap-add at hop {hop} (ripple {ripple:.3e})")]
    NotCola { hop: usize, ripple: f64 },
    #[error("signal of {len} samples is shorter than one window ({window})")]
    TooShort { len: usize, window: usize },
    #[error("spectrogram has {got} bins, configuration expects {expected}")]
    BinMismatch { got: usize, expected: usize },
    #[error("non-finite spectrogram entry at frame {frame}, bin {bin}")]
    NonFinite { frame: usize, bin: usize },
    #[error("bad spectrogram container: {0}")]
    Container(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    PeriodicHann,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients<T: Scalar>(self, len: usize) -> Vec<T> {
        match self {
            WindowKind::PeriodicHann => (0..len)
                .map(|n| {
                    let x = std::f64::consts::TAU * n as f64 / len as f64;
                    T::lit(0.5 - 0.5 * x.cos())
                })
                .collect(),
            WindowKind::Rectangular => vec![T::one(); len],
        }
    }

    fn id(self) -> u8 {
        match self {
            WindowKind::PeriodicHann => 0,
            WindowKind::Rectangular => 1,
        }
    }

    fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(WindowKind::PeriodicHann),
            1 => Some(WindowKind::Rectangular),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop_len: usize,
    pub window: WindowKind,
    pub sample_rate_hz: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 512,
            hop_len: 128,
            window: WindowKind::PeriodicHann,
            sample_rate_hz: 16_000,
        }
    }
}

impl StftConfig {
    pub fn new(window_len: usize, hop_len: usize, window: WindowKind, sample_rate_hz: u32) -> Result<Self, DspError> {
        let cfg = Self {
            window_len,
            hop_len,
            window,
            sample_rate_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.window_len < 2 || !self.window_len.is_multiple_of(2) {
            return Err(DspError::InvalidConfig(format!(
                "window length {} must be even and at least 2",
                self.window_len
            )));
        }
        if self.hop_len == 0 || self.hop_len > self.window_len {
            return Err(DspError::InvalidConfig(format!(
                "hop {} must be in 1..={}",
                self.hop_len, self.window_len
            )));
        }
        if self.sample_rate_hz == 0 {
            return Err(DspError::InvalidConfig("sample rate must be positive".into()));
        }
        let ripple = self.cola_ripple();
        if ripple > 1e-9 {
            return Err(DspError::NotCola {
                hop: self.hop_len,
                ripple,
            });
        }
        Ok(())
    }

    /// Relative peak-to-peak variation of `Σ_t w[n − t·hop]` over one hop.
    pub fn cola_ripple(&self) -> f64 {
        let w: Vec<f64> = self.window.coefficients(self.window_len);
        let sums: Vec<f64> = (0..self.hop_len)
            .map(|n| w.iter().skip(n).step_by(self.hop_len).sum())
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        if max <= 0.0 {
            return f64::INFINITY;
        }
        (max - min) / max
    }

    /// One-sided bin count, `window/2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            1 + (len - self.window_len) / self.hop_len
        }
    }

    /// Length covered by `frames` frames.
    pub fn covered_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop_len + self.window_len
        }
    }

    /// Seconds per time-step (one hop).
    pub fn frame_period_s(&self) -> f64 {
        self.hop_len as f64 / f64::from(self.sample_rate_hz)
    }

    /// Sample range where every sample is covered by `window/hop` frames.
    pub fn interior(&self, frames: usize) -> std::ops::Range<usize> {
        let start = self.window_len - self.hop_len;
        let end = frames * self.hop_len;
        start..end.max(start)
    }
}

/// Complex one-sided frames, `num_frames × num_bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    frames: Array2<Complex<T>>,
    config: StftConfig,
}

impl<T: Scalar> Spectrogram<T> {
    pub fn new(frames: Array2<Complex<T>>, config: StftConfig) -> Result<Self, DspError> {
        config.validate()?;
        if frames.ncols() != config.num_bins() {
            return Err(DspError::BinMismatch {
                got: frames.ncols(),
                expected: config.num_bins(),
            });
        }
        if let Some(((frame, bin), _)) = frames
            .indexed_iter()
            .find(|(_, c)| !(c.re.is_finite() && c.im.is_finite()))
        {
            return Err(DspError::NonFinite { frame, bin });
        }
        Ok(Self { frames, config })
    }

    pub fn zeros(num_frames: usize, config: StftConfig) -> Result<Self, DspError> {
        Self::new(
            Array2::from_elem((num_frames, config.num_bins()), Complex::new(T::zero(), T::zero())),
            config,
        )
    }

    pub fn frames(&self) -> &Array2<Complex<T>> {
        &self.frames
    }

    pub fn into_frames(self) -> Array2<Complex<T>> {
        self.frames
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.frames.ncols()
    }

    pub fn magnitude(&self) -> Array2<T> {
        self.frames.mapv(|c| c.norm())
    }

    pub fn energy(&self) -> T {
        self.frames.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Reusable analysis/synthesis state: window and FFT plans for one config.
pub struct StftEngine<T: Scalar> {
    config: StftConfig,
    window: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Scalar> StftEngine<T> {
    pub fn new(config: StftConfig) -> Result<Self, DspError> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: config.window.coefficients(config.window_len),
            forward: planner.plan_fft_forward(config.window_len),
            inverse: planner.plan_fft_inverse(config.window_len),
            config,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn window(&self) -> &[T] {
        &self.window
    }

    pub fn stft(&self, buf: &AudioBuffer<T>) -> Result<Spectrogram<T>, DspError> {
        let x = buf.samples();
        let cfg = &self.config;
        if x.len() < cfg.window_len {
            return Err(DspError::TooShort {
                len: x.len(),
                window: cfg.window_len,
            });
        }
        let frames = cfg.num_frames(x.len());
        let bins = cfg.num_bins();
        let mut out = Array2::from_elem((frames, bins), Complex::new(T::zero(), T::zero()));
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); cfg.window_len];
        for (t, mut row) in out.outer_iter_mut().enumerate() {
            let start = t * cfg.hop_len;
            for (j, c) in scratch.iter_mut().enumerate() {
                *c = Complex::new(x[start + j] * self.window[j], T::zero());
            }
            self.forward.process(&mut scratch);
            for (dst, src) in row.iter_mut().zip(&scratch) {
                *dst = *src;
            }
        }
        Spectrogram::new(out, *cfg)
    }

    /// Real inverse FFT of one one-sided frame (length `window_len`).
    pub fn inverse_frame(&self, bins: &[Complex<T>], out: &mut [T]) {
        let n = self.config.window_len;
        let half = n / 2;
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        buf[..=half].copy_from_slice(&bins[..=half]);
        for k in 1..half {
            buf[n - k] = bins[k].conj();
        }
        self.inverse.process(&mut buf);
        let scale = T::one() / T::from_usize_lossy(n);
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re * scale;
        }
    }

    /// `Σ_t w²[n − t·hop]` for a signal of `frames` frames.
    pub fn window_power_sum(&self, frames: usize) -> Vec<T> {
        let cfg = &self.config;
        let mut norm = vec![T::zero(); cfg.covered_len(frames)];
        for t in 0..frames {
            let start = t * cfg.hop_len;
            for (j, &w) in self.window.iter().enumerate() {
                norm[start + j] += w * w;
            }
        }
        norm
    }

    /// Per-sample divisor of the overlap-added frames: the summed squared
    /// window, floored at half its peak. Where every frame overlaps the sum
    /// is above the floor and reconstruction is exact; near the ends the
    /// floor tapers the output instead of dividing by values close to zero.
    pub fn synthesis_denominator(&self, frames: usize) -> Vec<T> {
        let norm = self.window_power_sum(frames);
        let peak = norm.iter().copied().fold(T::zero(), T::max);
        let floor = (peak * T::lit(0.5)).max(T::min_positive_value());
        norm.into_iter().map(|v| v.max(floor)).collect()
    }

    /// Overlap-add synthesis; output has `(frames − 1)·hop + window` samples.
    pub fn istft(&self, spec: &Spectrogram<T>) -> Result<AudioBuffer<T>, DspError> {
        self.istft_with_len(spec, self.config.covered_len(spec.num_frames()))
    }

    /// Overlap-add synthesis truncated or zero-extended to `len` samples.
    pub fn istft_with_len(&self, spec: &Spectrogram<T>, len: usize) -> Result<AudioBuffer<T>, DspError> {
        let cfg = &self.config;
        if spec.config() != cfg {
            return Err(DspError::InvalidConfig(
                "spectrogram was produced with a different configuration".into(),
            ));
        }
        if spec.num_bins() != cfg.num_bins() {
            return Err(DspError::BinMismatch {
                got: spec.num_bins(),
                expected: cfg.num_bins(),
            });
        }
        let frames = spec.num_frames();
        let covered = cfg.covered_len(frames);
        let mut acc = vec![T::zero(); covered];
        let mut frame = vec![T::zero(); cfg.window_len];
        for (t, row) in spec.frames().outer_iter().enumerate() {
            let bins: Vec<Complex<T>> = row.to_vec();
            self.inverse_frame(&bins, &mut frame);
            let start = t * cfg.hop_len;
            for (j, (&w, &f)) in self.window.iter().zip(&frame).enumerate() {
                acc[start + j] += w * f;
            }
        }
        let denom = self.synthesis_denominator(frames);
        let mut out = vec![T::zero(); len];
        for (n, o) in out.iter_mut().enumerate().take(covered) {
            *o = acc[n] / denom[n];
        }
        Ok(AudioBuffer::new(out, cfg.sample_rate_hz)?)
    }

    /// Adjoint of [`StftEngine::istft_with_len`]: given `dL/dy` for the
    /// `len`-sample output of a `frames`-frame synthesis, returns
    /// `dL/dRe(Y) + i·dL/dIm(Y)` for every frame and bin.
    pub fn istft_with_len_backward(&self, frames: usize, grad: &[T]) -> Array2<Complex<T>> {
        let cfg = &self.config;
        let n = cfg.window_len;
        let half = n / 2;
        let denom = self.synthesis_denominator(frames);
        let inv_n = T::one() / T::from_usize_lossy(n);
        let two = T::lit(2.0);
        let mut out = Array2::from_elem((frames, cfg.num_bins()), Complex::new(T::zero(), T::zero()));
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        for (t, mut row) in out.outer_iter_mut().enumerate() {
            let start = t * cfg.hop_len;
            for (j, c) in buf.iter_mut().enumerate() {
                let idx = start + j;
                let g = grad.get(idx).map_or(T::zero(), |&g| g * self.window[j] / denom[idx]);
                *c = Complex::new(g, T::zero());
            }
            self.forward.process(&mut buf);
            for (k, dst) in row.iter_mut().enumerate() {
                let ck = if k == 0 || k == half { T::one() } else { two };
                *dst = buf[k] * (ck * inv_n);
            }
        }
        out
    }
}

pub fn stft<T: Scalar>(buf: &AudioBuffer<T>, cfg: &StftConfig) -> Result<Spectrogram<T>, DspError> {
    StftEngine::new(*cfg)?.stft(buf)
}

pub fn istft<T: Scalar>(spec: &Spectrogram<T>) -> Result<AudioBuffer<T>, DspError> {
    StftEngine::new(*spec.config())?.istft(spec)
}

/// Magnitude and phase in `(−π, π]`; zero entries get phase 0.
pub fn mag_phase<T: Scalar>(spec: &Spectrogram<T>) -> (Array2<T>, Array2<T>) {
    let mag = spec.frames().mapv(|c| c.norm());
    let phase = spec.frames().mapv(|c| {
        if c.re == T::zero() && c.im == T::zero() {
            T::zero()
        } else {
            let p = c.im.atan2(c.re);
            if p <= -T::PI() {
                T::PI()
            } else {
                p
            }
        }
    });
    (mag, phase)
}

/// Rebuild `mag·e^{i·phase}`.
pub fn from_mag_phase<T: Scalar>(
    mag: &Array2<T>,
    phase: &Array2<T>,
    config: StftConfig,
) -> Result<Spectrogram<T>, DspError> {
    if mag.dim() != phase.dim() {
        return Err(DspError::InvalidConfig(format!(
            "magnitude {:?} and phase {:?} shapes differ",
            mag.dim(),
            phase.dim()
        )));
    }
    let frames = ndarray::Zip::from(mag)
        .and(phase)
        .map_collect(|&m, &p| Complex::from_polar(m, p));
    Spectrogram::new(frames, config)
}

const SPEC_MAGIC: &[u8; 4] = b"NASP";
const SPEC_VERSION: u16 = 1;

/// Little-endian container: magic, version, config, dims, then interleaved
/// `re, im` as 32-bit floats in row-major frame order.
pub fn write_spectrogram<T: Scalar, W: Write>(spec: &Spectrogram<T>, mut w: W) -> Result<(), DspError> {
    let cfg = spec.config();
    w.write_all(SPEC_MAGIC)?;
    w.write_u16::<LittleEndian>(SPEC_VERSION)?;
    w.write_u32::<LittleEndian>(cfg.window_len as u32)?;
    w.write_u32::<LittleEndian>(cfg.hop_len as u32)?;
    w.write_u32::<LittleEndian>(cfg.sample_rate_hz)?;
    w.write_u8(cfg.window.id())?;
    w.write_u32::<LittleEndian>(spec.num_frames() as u32)?;
    w.write_u32::<LittleEndian>(spec.num_bins() as u32)?;
    for c in spec.frames().iter() {
        w.write_f32::<LittleEndian>(c.re.to_f32().unwrap_or(f32::NAN))?;
        w.write_f32::<LittleEndian>(c.im.to_f32().unwrap_or(f32::NAN))?;
    }
    Ok(())
}

pub fn read_spectrogram<T: Scalar, R: Read>(mut r: R) -> Result<Spectrogram<T>, DspError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SPEC_MAGIC {
        return Err(DspError::Container("bad magic".into()));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != SPEC_VERSION {
        return Err(DspError::Container(format!("unsupported version {version}")));
    }
    let window_len = r.read_u32::<LittleEndian>()? as usize;
    let hop_len = r.read_u32::<LittleEndian>()? as usize;
    let sample_rate_hz = r.read_u32::<LittleEndian>()?;
    let window = WindowKind::from_id(r.read_u8()?).ok_or_else(|| DspError::Container("unknown window id".into()))?;
    let config = StftConfig::new(window_len, hop_len, window, sample_rate_hz)?;
    let frames = r.read_u32::<LittleEndian>()? as usize;
    let bins = r.read_u32::<LittleEndian>()? as usize;
    let mut data = Vec::with_capacity(frames * bins);
    for _ in 0..frames * bins {
        let re = r.read_f32::<LittleEndian>()?;
        let im = r.read_f32::<LittleEndian>()?;
        data.push(Complex::new(T::lit(f64::from(re)), T::lit(f64::from(im))));
    }
    let arr = Array2::from_shape_vec((frames, bins), data).map_err(|e| DspError::Container(e.to_string()))?;
    Spectrogram::new(arr, config)
}
