use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::apply_mask;
use super::{Model, ModelError, Params};
use crate::audio::{AudioBuffer, NoisyTriple};
use crate::dsp::{DspError, Spectrogram, StftEngine};
use crate::metrics::{si_snr, si_snr_with_grad, summarize, MetricError, SiSnrSummary, SiSnrValue};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum TrainError<T: std::fmt::Debug> {
    #[error("training set is empty")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    /// Carries the state before the failing step.
    #[error("training diverged at step {step}: {reason}")]
    Diverged {
        step: usize,
        reason: String,
        last_good: Box<TrainState<T>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Rescale the batch gradient to at most this global L2 norm.
    pub grad_clip: Option<f64>,
    /// Seed for minibatch order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            batch_size: 8,
            learning_rate: 0.01,
            momentum: 0.9,
            grad_clip: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate<T: std::fmt::Debug>(&self) -> Result<(), TrainError<T>> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("grad_clip must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub params: Params<T>,
    /// Momentum buffers, one per parameter array.
    pub velocity: Params<T>,
    pub step: usize,
    pub loss_history: Vec<f64>,
    pub si_snr_history: Vec<f64>,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub si_snr_db: f64,
    pub grad_norm: f64,
}

/// Noisy spectrogram plus the clean target, ready for repeated passes.
#[derive(Debug, Clone)]
pub struct PreparedSample<T> {
    pub spec: Spectrogram<T>,
    pub clean: Vec<T>,
    pub noisy: Vec<T>,
}

impl<T: Scalar> PreparedSample<T> {
    pub fn new(triple: &NoisyTriple<T>, engine: &StftEngine<T>) -> Result<Self, DspError> {
        Ok(Self {
            spec: engine.stft(&triple.noisy)?,
            clean: triple.clean.samples().to_vec(),
            noisy: triple.noisy.samples().to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }
}

/// `dL/dm = Re(X · conj(dL/dY))` for `Y = m·X`.
fn mask_gradient<T: Scalar>(x: &Spectrogram<T>, dy: &Array2<num_complex::Complex<T>>) -> Array2<T> {
    let mut out = Array2::zeros(dy.raw_dim());
    ndarray::Zip::from(&mut out)
        .and(x.frames())
        .and(dy)
        .for_each(|o, a, g| *o = a.re * g.re + a.im * g.im);
    out
}

impl<T: Scalar> Model<T> {
    /// STFT → mask → ISTFT, trimmed or padded to the input length.
    pub fn denoise(&self, input: &AudioBuffer<T>) -> Result<AudioBuffer<T>, ModelError> {
        if input.sample_rate_hz() != self.config.stft.sample_rate_hz {
            return Err(ModelError::InvalidConfig(format!(
                "input sample rate {} Hz differs from the model's {} Hz",
                input.sample_rate_hz(),
                self.config.stft.sample_rate_hz
            )));
        }
        let engine = StftEngine::new(self.config.stft)?;
        let spec = engine.stft(input)?;
        let out = self.forward(&spec)?;
        Ok(engine.istft_with_len(&out, input.len())?)
    }

    fn enhance(&self, sample: &PreparedSample<T>, engine: &StftEngine<T>) -> Result<Vec<T>, ModelError> {
        let out = self.forward(&sample.spec)?;
        Ok(engine.istft_with_len(&out, sample.len())?.into_samples())
    }

    /// Negative SI-SNR (dB) of the enhanced output against the clean target.
    pub fn loss(&self, sample: &PreparedSample<T>, engine: &StftEngine<T>) -> Result<T, TrainError<T>> {
        let y = self.enhance(sample, engine)?;
        Ok(-si_snr_with_grad(&y, &sample.clean)?.0)
    }

    /// Loss and parameter gradients for one sample.
    pub fn loss_and_grad(
        &self,
        sample: &PreparedSample<T>,
        engine: &StftEngine<T>,
    ) -> Result<(T, Params<T>), TrainError<T>> {
        let (mask, cache) = self.forward_cached(&sample.spec, None)?;
        let spec = Spectrogram::new(apply_mask(sample.spec.frames(), &mask), *sample.spec.config())?;
        let y = engine.istft_with_len(&spec, sample.len())?;
        let (value, grad) = si_snr_with_grad(y.samples(), &sample.clean)?;
        let dy: Vec<T> = grad.into_iter().map(|g| -g).collect();
        let dspec = engine.istft_with_len_backward(spec.num_frames(), &dy);
        let dmask = mask_gradient(&sample.spec, &dspec);
        Ok((-value, self.backward(&cache, &dmask)))
    }
}

fn prepare_all<T: Scalar>(data: &[NoisyTriple<T>], engine: &StftEngine<T>) -> Result<Vec<PreparedSample<T>>, DspError> {
    data.par_iter().map(|t| PreparedSample::new(t, engine)).collect()
}

type SampleGrad<T> = Result<(T, Params<T>), TrainError<T>>;

/// Minibatch order: a fresh shuffle of all indices per epoch.
struct Batches {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl Batches {
    fn new(n: usize, seed: u64) -> Self {
        let mut b = Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            pos: n,
        };
        b.refill();
        b
    }

    fn refill(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size.min(self.order.len()) {
            if self.pos == self.order.len() {
                self.refill();
            }
            batch.push(self.order[self.pos]);
            self.pos += 1;
        }
        batch.sort_unstable();
        batch
    }
}

/// Gradient descent with momentum on negative SI-SNR.
///
/// Per-sample passes in a batch run in parallel; their gradients are summed
/// in ascending sample index, so results do not depend on scheduling.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    data: &[NoisyTriple<T>],
    tc: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<TrainState<T>, TrainError<T>> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    tc.validate()?;
    model.config.validate()?;
    let engine = StftEngine::new(model.config.stft)?;
    let samples = prepare_all(data, &engine)?;
    let mut state = TrainState {
        velocity: model.params.zeros_like(),
        params: model.params.clone(),
        step: 0,
        loss_history: Vec::with_capacity(tc.steps),
        si_snr_history: Vec::with_capacity(tc.steps),
    };
    let mut batches = Batches::new(samples.len(), tc.seed);
    let lr = T::lit(tc.learning_rate);
    let mu = T::lit(tc.momentum);
    for step in 0..tc.steps {
        let batch = batches.next(tc.batch_size);
        let current = &*model;
        let results: Vec<SampleGrad<T>> = batch
            .par_iter()
            .map(|&i| current.loss_and_grad(&samples[i], &engine))
            .collect();
        let diverged = |reason: String, state: &TrainState<T>| TrainError::Diverged {
            step,
            reason,
            last_good: Box::new(state.clone()),
        };
        let mut total_loss = T::zero();
        let mut grads: Option<Params<T>> = None;
        for r in results {
            let (loss, g) = match r {
                Ok(v) => v,
                Err(TrainError::Model(ModelError::NonFinite(what))) => {
                    return Err(diverged(format!("non-finite {what}"), &state))
                }
                Err(e) => return Err(e),
            };
            total_loss += loss;
            match &mut grads {
                None => grads = Some(g),
                Some(acc) => acc.add_assign(&g),
            }
        }
        let mut grads = grads.expect("non-empty batch");
        let inv = T::one() / T::from_usize_lossy(batch.len());
        grads.scale(inv);
        let loss = total_loss * inv;
        if !loss.is_finite() {
            return Err(diverged("loss is not finite".into(), &state));
        }
        if !grads.all_finite() {
            return Err(diverged("gradient is not finite".into(), &state));
        }
        let norm = grads.norm();
        if let Some(clip) = tc.grad_clip {
            let clip = T::lit(clip);
            if norm > clip {
                grads.scale(clip / norm);
            }
        }
        for (((_, mut v), (_, g)), (_, mut p)) in state
            .velocity
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(model.params.tensors_mut())
        {
            v.zip_mut_with(&g, |v, &g| *v = mu * *v + g);
            p.zip_mut_with(&v, |p, &v| *p -= lr * v);
        }
        state.params = model.params.clone();
        state.step = step + 1;
        let log = StepLog {
            step: step + 1,
            loss: loss.as_f64(),
            si_snr_db: -loss.as_f64(),
            grad_norm: norm.as_f64(),
        };
        state.loss_history.push(log.loss);
        state.si_snr_history.push(log.si_snr_db);
        on_step(&log);
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub noisy: Vec<SiSnrValue>,
    pub enhanced: Vec<SiSnrValue>,
    pub noisy_summary: SiSnrSummary,
    pub enhanced_summary: SiSnrSummary,
    /// Mean over files of enhanced − noisy, finite pairs only.
    pub mean_delta_db: Option<f64>,
}

/// SI-SNR of the noisy input and of the enhanced output for every triple.
pub fn evaluate<T: Scalar>(model: &Model<T>, data: &[NoisyTriple<T>]) -> Result<EvalSummary, TrainError<T>> {
    let engine = StftEngine::new(model.config.stft)?;
    let pairs: Vec<Result<(SiSnrValue, SiSnrValue), TrainError<T>>> = data
        .par_iter()
        .map(|t| {
            let s = PreparedSample::new(t, &engine)?;
            let y = model.enhance(&s, &engine)?;
            Ok((si_snr(&s.noisy, &s.clean)?.value, si_snr(&y, &s.clean)?.value))
        })
        .collect();
    let pairs = pairs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let (noisy, enhanced): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let deltas: Vec<f64> = noisy
        .iter()
        .zip(&enhanced)
        .filter_map(|(a, b)| Some(b.db()? - a.db()?))
        .collect();
    Ok(EvalSummary {
        noisy_summary: summarize(&noisy),
        enhanced_summary: summarize(&enhanced),
        mean_delta_db: (!deltas.is_empty()).then(|| deltas.iter().sum::<f64>() / deltas.len() as f64),
        noisy,
        enhanced,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Central differences on `count` randomly chosen parameter scalars.
///
/// The relative error is `|a − n| / max(|a|, |n|, floor)`; `floor` keeps
/// parameters with vanishing gradient from dividing rounding noise by zero.
pub fn check_gradients<T: Scalar>(
    model: &Model<T>,
    sample: &PreparedSample<T>,
    count: usize,
    step: f64,
    floor: f64,
    seed: u64,
) -> Result<Vec<GradCheck>, TrainError<T>> {
    let engine = StftEngine::new(model.config.stft)?;
    let (_, grads) = model.loss_and_grad(sample, &engine)?;
    let n = model.params.num_scalars();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = rand::seq::index::sample(&mut rng, n, count.min(n)).into_vec();
    picks.sort_unstable();
    let h = T::lit(step);
    picks
        .into_iter()
        .map(|index| {
            let base = model.params.get_flat(index).expect("index in range");
            let mut probe = model.clone();
            probe.params.set_flat(index, base + h);
            let up = probe.loss(sample, &engine)?;
            probe.params.set_flat(index, base - h);
            let down = probe.loss(sample, &engine)?;
            let numeric = ((up - down) / (h + h)).as_f64();
            let analytic = grads.get_flat(index).expect("index in range").as_f64();
            let rel_err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            Ok(GradCheck {
                index,
                analytic,
                numeric,
                rel_err,
            })
        })
        .collect()
}
