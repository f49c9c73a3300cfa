//! Leaky integrate-and-fire dynamics: multiplier/accumulator synapses,
//! leak, threshold, reset-to-value and a refractory counter. Float and
//! saturating Q-format fixed-point variants share the same semantics.
//!
//! Per step, a non-refractory neuron computes `v ← λ·v + input` (leak first),
//! fires when `v ≥ θ`, then resets to `reset` and stays silent for
//! `refractory_steps` steps. Refractory neurons ignore their input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum NeuronError {
    #[error("invalid LIF parameters: {0}")]
    InvalidParams(String),
    #[error("input has {got} entries, layer has {expected} neurons")]
    DimMismatch { got: usize, expected: usize },
    #[error("non-finite input at index {0}")]
    NonFinite(usize),
    #[error("weight matrix row {row} has {got} columns, expected {expected}")]
    ShapeMismatch { row: usize, got: usize, expected: usize },
    #[error("invalid fixed-point format Q{int}.{frac}")]
    InvalidFormat { int: u32, frac: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams<T> {
    /// Membrane retention per step, in [0, 1].
    pub decay: T,
    pub threshold: T,
    pub reset: T,
    pub refractory_steps: u32,
}

impl<T: Scalar> Default for LifParams<T> {
    fn default() -> Self {
        Self {
            decay: T::lit(0.9),
            threshold: T::one(),
            reset: T::zero(),
            refractory_steps: 0,
        }
    }
}

impl<T: Scalar> LifParams<T> {
    pub fn validate(&self) -> Result<(), NeuronError> {
        if !(self.decay >= T::zero() && self.decay <= T::one()) {
            return Err(NeuronError::InvalidParams(format!(
                "decay {} outside [0, 1]",
                self.decay
            )));
        }
        if !(self.threshold > T::zero()) || !self.threshold.is_finite() {
            return Err(NeuronError::InvalidParams(format!(
                "threshold {} must be positive",
                self.threshold
            )));
        }
        if !self.reset.is_finite() {
            return Err(NeuronError::InvalidParams("reset must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifState<T> {
    pub membrane: Vec<T>,
    pub refractory_remaining: Vec<u32>,
}

impl<T: Scalar> LifState<T> {
    pub fn new(num_neurons: usize, initial: T) -> Self {
        Self {
            membrane: vec![initial; num_neurons],
            refractory_remaining: vec![0; num_neurons],
        }
    }

    pub fn len(&self) -> usize {
        self.membrane.len()
    }

    pub fn is_empty(&self) -> bool {
        self.membrane.is_empty()
    }

    /// Advance one step in place, returning which neurons fired.
    pub fn step(&mut self, input: &[T], p: &LifParams<T>) -> Result<Vec<bool>, NeuronError> {
        if input.len() != self.len() {
            return Err(NeuronError::DimMismatch {
                got: input.len(),
                expected: self.len(),
            });
        }
        if let Some(i) = input.iter().position(|x| !x.is_finite()) {
            return Err(NeuronError::NonFinite(i));
        }
        let mut spikes = vec![false; self.len()];
        for (i, (&x, s)) in input.iter().zip(spikes.iter_mut()).enumerate() {
            if self.refractory_remaining[i] > 0 {
                self.refractory_remaining[i] -= 1;
                continue;
            }
            let v = p.decay * self.membrane[i] + x;
            if v >= p.threshold {
                *s = true;
                self.membrane[i] = p.reset;
                self.refractory_remaining[i] = p.refractory_steps;
            } else {
                self.membrane[i] = v;
            }
        }
        Ok(spikes)
    }
}

/// Functional form of [`LifState::step`].
pub fn lif_step<T: Scalar>(
    state: &LifState<T>,
    weighted_input: &[T],
    p: &LifParams<T>,
) -> Result<(LifState<T>, Vec<bool>), NeuronError> {
    p.validate()?;
    let mut next = state.clone();
    let spikes = next.step(weighted_input, p)?;
    Ok((next, spikes))
}

/// `out_j = Σ_i weights[j][i]·spike_i`.
pub fn weighted_sum<T: Scalar>(spikes: &[bool], weights: &[Vec<T>]) -> Result<Vec<T>, NeuronError> {
    weights
        .iter()
        .enumerate()
        .map(|(j, row)| {
            if row.len() != spikes.len() {
                return Err(NeuronError::ShapeMismatch {
                    row: j,
                    got: row.len(),
                    expected: spikes.len(),
                });
            }
            Ok(row
                .iter()
                .zip(spikes)
                .filter(|(_, &s)| s)
                .fold(T::zero(), |acc, (&w, _)| acc + w))
        })
        .collect()
}

/// Signed two's-complement Q-format, saturating, round-half-to-even.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub total_bits: u32,
    pub frac_bits: u32,
}

impl Default for FixedPointFormat {
    fn default() -> Self {
        Self::Q8_8
    }
}

impl FixedPointFormat {
    pub const Q8_8: Self = Self {
        total_bits: 16,
        frac_bits: 8,
    };

    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self, NeuronError> {
        if !(2..=32).contains(&total_bits) || frac_bits >= total_bits {
            return Err(NeuronError::InvalidFormat {
                int: total_bits.saturating_sub(frac_bits),
                frac: frac_bits,
            });
        }
        Ok(Self { total_bits, frac_bits })
    }

    pub fn step(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn raw_max(&self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    pub fn raw_min(&self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    pub fn max_value(&self) -> f64 {
        self.raw_max() as f64 * self.step()
    }

    pub fn min_value(&self) -> f64 {
        self.raw_min() as f64 * self.step()
    }

    /// Nearest representable raw code, ties to even, saturating.
    pub fn to_raw(&self, x: f64) -> i64 {
        if x.is_nan() {
            return 0;
        }
        let scaled = (x * (self.frac_bits as f64).exp2()).round_ties_even();
        scaled.clamp(self.raw_min() as f64, self.raw_max() as f64) as i64
    }

    pub fn from_raw(&self, raw: i64) -> f64 {
        raw as f64 * self.step()
    }

    pub fn saturate(&self, raw: i64) -> i64 {
        raw.clamp(self.raw_min(), self.raw_max())
    }

    pub fn add(&self, a: i64, b: i64) -> i64 {
        self.saturate(a + b)
    }

    /// Product rescaled by `2^-frac`, ties to even, saturating.
    pub fn mul(&self, a: i64, b: i64) -> i64 {
        let p = a * b;
        let f = self.frac_bits;
        if f == 0 {
            return self.saturate(p);
        }
        let q = p >> f;
        let rem = p - (q << f);
        let half = 1i64 << (f - 1);
        let rounded = if rem > half || (rem == half && q & 1 == 1) {
            q + 1
        } else {
            q
        };
        self.saturate(rounded)
    }
}

/// Clamp to range and round to the nearest multiple of `2^-frac`, ties to even.
pub fn quantize<T: Scalar>(x: &[T], fmt: &FixedPointFormat) -> Vec<T> {
    x.iter()
        .map(|&v| T::lit(fmt.from_raw(fmt.to_raw(v.as_f64()))))
        .collect()
}

/// Fixed-point counterpart of [`weighted_sum`]; products and the running
/// sum are each quantized and saturated.
pub fn weighted_sum_fixed(
    spikes: &[bool],
    weights: &[Vec<f64>],
    fmt: &FixedPointFormat,
) -> Result<Vec<f64>, NeuronError> {
    let one = fmt.to_raw(1.0);
    weights
        .iter()
        .enumerate()
        .map(|(j, row)| {
            if row.len() != spikes.len() {
                return Err(NeuronError::ShapeMismatch {
                    row: j,
                    got: row.len(),
                    expected: spikes.len(),
                });
            }
            let mut acc = 0i64;
            for (&w, &s) in row.iter().zip(spikes) {
                let spike = if s { one } else { 0 };
                acc = fmt.add(acc, fmt.mul(fmt.to_raw(w), spike));
            }
            Ok(fmt.from_raw(acc))
        })
        .collect()
}

/// LIF layer whose parameters and membranes live in a fixed-point format.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedLif {
    pub format: FixedPointFormat,
    decay: i64,
    threshold: i64,
    reset: i64,
    refractory_steps: u32,
    membrane: Vec<i64>,
    refractory_remaining: Vec<u32>,
}

impl FixedLif {
    pub fn new(num_neurons: usize, params: &LifParams<f64>, format: FixedPointFormat) -> Result<Self, NeuronError> {
        params.validate()?;
        let threshold = format.to_raw(params.threshold);
        if threshold <= 0 {
            return Err(NeuronError::InvalidParams(
                "threshold rounds to zero in this format".into(),
            ));
        }
        let reset = format.to_raw(params.reset);
        Ok(Self {
            format,
            decay: format.to_raw(params.decay),
            threshold,
            reset,
            refractory_steps: params.refractory_steps,
            membrane: vec![0; num_neurons],
            refractory_remaining: vec![0; num_neurons],
        })
    }

    pub fn membrane(&self) -> Vec<f64> {
        self.membrane.iter().map(|&r| self.format.from_raw(r)).collect()
    }

    pub fn membrane_raw(&self) -> &[i64] {
        &self.membrane
    }

    pub fn refractory_remaining(&self) -> &[u32] {
        &self.refractory_remaining
    }

    /// Quantized decay factor actually used.
    pub fn decay(&self) -> f64 {
        self.format.from_raw(self.decay)
    }

    pub fn step(&mut self, input: &[f64]) -> Result<Vec<bool>, NeuronError> {
        if input.len() != self.membrane.len() {
            return Err(NeuronError::DimMismatch {
                got: input.len(),
                expected: self.membrane.len(),
            });
        }
        if let Some(i) = input.iter().position(|x| !x.is_finite()) {
            return Err(NeuronError::NonFinite(i));
        }
        let fmt = self.format;
        let mut spikes = vec![false; input.len()];
        for (i, (&x, s)) in input.iter().zip(spikes.iter_mut()).enumerate() {
            if self.refractory_remaining[i] > 0 {
                self.refractory_remaining[i] -= 1;
                continue;
            }
            let v = fmt.add(fmt.mul(self.decay, self.membrane[i]), fmt.to_raw(x));
            if v >= self.threshold {
                *s = true;
                self.membrane[i] = self.reset;
                self.refractory_remaining[i] = self.refractory_steps;
            } else {
                self.membrane[i] = v;
            }
        }
        Ok(spikes)
    }
}

/// Worst-case |fixed − float| membrane gap after `steps` steps while both
/// runs emit the same spikes. Each step adds at most half a quantum from the
/// input, half from the product rounding and `|λ − λ_q|·|v|` from the decay
/// quantization; earlier errors shrink by λ per step.
pub fn divergence_bound(steps: usize, decay: f64, membrane_bound: f64, fmt: &FixedPointFormat) -> f64 {
    let q = fmt.step();
    let per_step = q + 0.5 * q * membrane_bound.abs();
    let gain: f64 = (0..steps).map(|k| decay.powi(k as i32)).sum();
    per_step * gain
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(decay: f64, threshold: f64, refractory: u32) -> LifParams<f64> {
        LifParams {
            decay,
            threshold,
            reset: 0.0,
            refractory_steps: refractory,
        }
    }

    fn run(p: &LifParams<f64>, input: f64, steps: usize) -> Vec<bool> {
        let mut s = LifState::new(1, 0.0);
        (0..steps).map(|_| s.step(&[input], p).unwrap()[0]).collect()
    }

    #[test]
    fn memoryless_subthreshold_never_fires() {
        assert!(run(&params(0.0, 1.0, 0), 0.5, 50).iter().all(|&s| !s));
    }

    #[test]
    fn perfect_integrator_fires_on_second_step() {
        let p = params(1.0, 1.0, 0);
        let s0 = LifState::new(1, 0.0);
        let (s1, k1) = lif_step(&s0, &[0.5], &p).unwrap();
        assert_eq!((s1.membrane[0], k1[0]), (0.5, false));
        let (s2, k2) = lif_step(&s1, &[0.5], &p).unwrap();
        assert_eq!((s2.membrane[0], k2[0]), (0.0, true));
    }

    #[test]
    fn refractory_blocks_huge_input() {
        let p = params(1.0, 1.0, 2);
        let spikes = run(&p, 100.0, 7);
        assert_eq!(spikes, vec![true, false, false, true, false, false, true]);
    }

    #[test]
    fn rejects_bad_input() {
        let p = params(0.5, 1.0, 0);
        let mut s = LifState::new(2, 0.0);
        assert_eq!(
            s.step(&[1.0], &p),
            Err(NeuronError::DimMismatch { got: 1, expected: 2 })
        );
        assert_eq!(s.step(&[1.0, f64::NAN], &p), Err(NeuronError::NonFinite(1)));
        assert!(lif_step(&s, &[0.0, 0.0], &params(1.5, 1.0, 0)).is_err());
        assert!(lif_step(&s, &[0.0, 0.0], &params(0.5, 0.0, 0)).is_err());
    }

    #[test]
    fn weighted_sum_examples() {
        let w = vec![vec![0.25, -0.5]];
        assert_eq!(weighted_sum(&[true, true], &w).unwrap(), vec![-0.25]);
        assert_eq!(
            weighted_sum_fixed(&[true, true], &w, &FixedPointFormat::Q8_8).unwrap(),
            vec![-0.25]
        );
        assert_eq!(weighted_sum(&[false, false], &w).unwrap(), vec![0.0]);
        let eye = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(weighted_sum(&[false, true, false], &eye).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(matches!(
            weighted_sum(&[true], &w),
            Err(NeuronError::ShapeMismatch {
                row: 0,
                got: 2,
                expected: 1
            })
        ));
    }

    #[test]
    fn quantize_examples() {
        let f = FixedPointFormat::Q8_8;
        assert_eq!(quantize(&[0.5f64], &f), vec![0.5]);
        assert_eq!(quantize(&[300.0f64], &f), vec![127.99609375]);
        assert_eq!(quantize(&[-300.0f64], &f), vec![-128.0]);
        assert_eq!(f.max_value(), 128.0 - 1.0 / 256.0);
    }

    #[test]
    fn quantize_ties_to_even() {
        let f = FixedPointFormat::Q8_8;
        let half = 2f64.powi(-9);
        // k·2^-9 for odd k sits exactly between two codes
        for k in -41i64..=41 {
            let x = k as f64 * half;
            let got = quantize(&[x], &f)[0];
            let expected = if k % 2 == 0 {
                x
            } else {
                // neighbouring codes (k ± 1)/2; pick the even one
                let (a, b) = ((k - 1) / 2, (k + 1) / 2);
                let even = if a % 2 == 0 { a } else { b };
                even as f64 / 256.0
            };
            assert_eq!(got, expected, "k={k}");
        }
        assert_eq!(quantize(&[half], &f), vec![0.0]);
        assert_eq!(quantize(&[3.0 * half], &f), vec![2.0 / 256.0]);
    }

    #[test]
    fn fixed_mul_rounds_to_even() {
        let f = FixedPointFormat::Q8_8;
        // 0.5 * 2^-8 = 2^-9 -> tie -> 0
        assert_eq!(f.mul(f.to_raw(0.5), 1), 0);
        // 0.5 * 3·2^-8 = 1.5·2^-8 -> 2·2^-8
        assert_eq!(f.mul(f.to_raw(0.5), 3), 2);
        assert_eq!(f.mul(f.to_raw(-0.5), 3), -2);
        assert_eq!(f.mul(f.to_raw(100.0), f.to_raw(100.0)), f.raw_max());
        assert_eq!(f.add(f.raw_max(), 5), f.raw_max());
    }

    #[test]
    fn fixed_lif_matches_float_on_exact_values() {
        let p = params(0.5, 1.0, 1);
        let mut fixed = FixedLif::new(1, &p, FixedPointFormat::Q8_8).unwrap();
        let mut float = LifState::new(1, 0.0);
        // 0.625, 0.9375, 1.09375 → spike, refractory, repeat: all on the 2^-8 grid
        let mut fired = 0;
        for _ in 0..20 {
            let a = fixed.step(&[0.625]).unwrap();
            let b = float.step(&[0.625], &p).unwrap();
            fired += a[0] as usize;
            assert_eq!(a, b);
            assert_eq!(fixed.membrane()[0], float.membrane[0]);
        }
        assert_eq!(fired, 5);
    }
}
