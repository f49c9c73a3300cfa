//! Spike trains and the five codecs: rate, time-to-first-spike, phase,
//! burst and rank order.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum CodingError {
    #[error("event ({neuron}, {step}) outside {num_neurons}×{num_steps} train")]
    EventOutOfRange {
        neuron: usize,
        step: usize,
        num_neurons: usize,
        num_steps: usize,
    },
    #[error("duplicate event ({0}, {1})")]
    DuplicateEvent(usize, usize),
    #[error("value {value} at index {index} outside the codec domain {domain}")]
    OutOfDomain {
        index: usize,
        value: f64,
        domain: &'static str,
    },
    #[error("invalid codec parameters: {0}")]
    InvalidParams(String),
    #[error("neuron {0} fired {1} times; the codec expects exactly one spike")]
    SpikeCount(usize, usize),
    #[error("burst of {spikes} spikes at ISI {isi} does not fit in {num_steps} steps")]
    BurstOverflow {
        spikes: usize,
        isi: usize,
        num_steps: usize,
    },
    #[error("tied inputs at indices {0} and {1}; rank-order code would not be injective")]
    Tie(usize, usize),
    #[error("spike train has {got} neurons, expected {expected}")]
    NeuronMismatch { got: usize, expected: usize },
}

/// Binary events on a `num_neurons × num_steps` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpikeTrainRepr", into = "SpikeTrainRepr")]
pub struct SpikeTrain {
    num_neurons: usize,
    num_steps: usize,
    dt_s: f64,
    events: BTreeSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct SpikeTrainRepr {
    num_neurons: usize,
    num_steps: usize,
    dt_s: f64,
    /// `[neuron, step]` pairs sorted by neuron then step.
    events: Vec<(usize, usize)>,
}

impl TryFrom<SpikeTrainRepr> for SpikeTrain {
    type Error = CodingError;

    fn try_from(r: SpikeTrainRepr) -> Result<Self, Self::Error> {
        SpikeTrain::from_events(r.num_neurons, r.num_steps, r.dt_s, r.events)
    }
}

impl From<SpikeTrain> for SpikeTrainRepr {
    fn from(t: SpikeTrain) -> Self {
        SpikeTrainRepr {
            num_neurons: t.num_neurons,
            num_steps: t.num_steps,
            dt_s: t.dt_s,
            events: t.events.into_iter().collect(),
        }
    }
}

impl SpikeTrain {
    pub fn empty(num_neurons: usize, num_steps: usize, dt_s: f64) -> Self {
        Self {
            num_neurons,
            num_steps,
            dt_s,
            events: BTreeSet::new(),
        }
    }

    pub fn from_events(
        num_neurons: usize,
        num_steps: usize,
        dt_s: f64,
        events: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, CodingError> {
        let mut t = Self::empty(num_neurons, num_steps, dt_s);
        for (n, s) in events {
            t.insert(n, s)?;
        }
        Ok(t)
    }

    pub fn insert(&mut self, neuron: usize, step: usize) -> Result<(), CodingError> {
        if neuron >= self.num_neurons || step >= self.num_steps {
            return Err(CodingError::EventOutOfRange {
                neuron,
                step,
                num_neurons: self.num_neurons,
                num_steps: self.num_steps,
            });
        }
        if !self.events.insert((neuron, step)) {
            return Err(CodingError::DuplicateEvent(neuron, step));
        }
        Ok(())
    }

    pub fn num_neurons(&self) -> usize {
        self.num_neurons
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn dt_s(&self) -> f64 {
        self.dt_s
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn contains(&self, neuron: usize, step: usize) -> bool {
        self.events.contains(&(neuron, step))
    }

    /// Events ordered by neuron, then step.
    pub fn events(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.events.iter().copied()
    }

    /// Ascending spike steps of one neuron.
    pub fn spikes_of(&self, neuron: usize) -> Vec<usize> {
        self.events
            .range((neuron, 0)..(neuron + 1, 0))
            .map(|&(_, s)| s)
            .collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_neurons];
        for &(n, _) in &self.events {
            c[n] += 1;
        }
        c
    }

    /// Dense raster, `raster[neuron][step]`.
    pub fn raster(&self) -> Vec<Vec<bool>> {
        let mut r = vec![vec![false; self.num_steps]; self.num_neurons];
        for &(n, s) in &self.events {
            r[n][s] = true;
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spike train serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rate,
    Ttfs,
    Phase,
    Burst,
    RankOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecParams {
    pub scheme: Scheme,
    pub num_steps: usize,
    /// Seconds per step.
    pub dt_s: f64,
    /// Peak firing rate in Hz (rate scheme).
    pub r_max: f64,
    /// Bits per value (phase scheme).
    pub num_bits: u32,
    pub burst_max_spikes: usize,
    pub isi_min: usize,
    pub isi_max: usize,
    pub seed: u64,
}

impl Default for CodecParams {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rate,
            num_steps: 16,
            dt_s: 1e-3,
            r_max: 1000.0,
            num_bits: 8,
            burst_max_spikes: 5,
            isi_min: 1,
            isi_max: 9,
            seed: 0,
        }
    }
}

impl CodecParams {
    pub fn with_scheme(scheme: Scheme, num_steps: usize) -> Self {
        Self {
            scheme,
            num_steps,
            ..Self::default()
        }
    }

    /// Per-step firing probability at full input, `r_max·dt`.
    pub fn rate_per_step(&self) -> f64 {
        self.r_max * self.dt_s
    }

    pub fn validate(&self) -> Result<(), CodingError> {
        let bad = |m: &str| Err(CodingError::InvalidParams(m.to_string()));
        if self.num_steps == 0 {
            return bad("num_steps must be at least 1");
        }
        if !(self.dt_s > 0.0) {
            return bad("dt must be positive");
        }
        match self.scheme {
            Scheme::Rate if !(self.r_max > 0.0) => bad("r_max must be positive"),
            Scheme::Ttfs if self.num_steps < 2 => bad("time-to-first-spike needs at least 2 steps"),
            Scheme::Phase if self.num_bits == 0 || self.num_bits > 63 => bad("num_bits must be in 1..=63"),
            Scheme::Phase if self.num_steps < self.num_bits as usize => bad("phase coding needs num_steps >= num_bits"),
            Scheme::Burst if self.burst_max_spikes == 0 => bad("burst_max_spikes must be positive"),
            Scheme::Burst if self.isi_min == 0 || self.isi_min > self.isi_max => bad("need 1 <= isi_min <= isi_max"),
            _ => Ok(()),
        }
    }
}

/// Stream tag for rate-coding draws.
pub const RATE_STREAM: u64 = 0x5241_5445;

fn check_unit<T: Scalar>(x: &[T]) -> Result<(), CodingError> {
    for (i, &v) in x.iter().enumerate() {
        let v = v.as_f64();
        if !(0.0..=1.0).contains(&v) {
            return Err(CodingError::OutOfDomain {
                index: i,
                value: v,
                domain: "[0, 1]",
            });
        }
    }
    Ok(())
}

/// Bernoulli spike at `(neuron, step)` iff a keyed uniform draw falls below
/// `clamp(x·r_max·dt, 0, 1)`.
pub fn encode_rate<T: Scalar>(x: &[T], p: &CodecParams) -> Result<SpikeTrain, CodingError> {
    p.validate()?;
    check_unit(x)?;
    let mut train = SpikeTrain::empty(x.len(), p.num_steps, p.dt_s);
    let scale = p.rate_per_step();
    for (i, &v) in x.iter().enumerate() {
        let prob = (v.as_f64() * scale).clamp(0.0, 1.0);
        for t in 0..p.num_steps {
            if rng::uniform(p.seed, RATE_STREAM, i as u64, t as u64) < prob {
                train.events.insert((i, t));
            }
        }
    }
    Ok(train)
}

pub fn decode_rate<T: Scalar>(t: &SpikeTrain, p: &CodecParams) -> Result<Vec<T>, CodingError> {
    p.validate()?;
    let denom = t.num_steps() as f64 * p.rate_per_step();
    Ok(t.counts().into_iter().map(|c| T::lit(c as f64 / denom)).collect())
}

/// Step at which a TTFS neuron fires for input `x`.
pub fn ttfs_step(x: f64, num_steps: usize) -> usize {
    ((1.0 - x) * (num_steps - 1) as f64).round() as usize
}

/// One spike per neuron at `round((1 − x)·(num_steps − 1))`.
pub fn encode_ttfs<T: Scalar>(x: &[T], p: &CodecParams) -> Result<SpikeTrain, CodingError> {
    p.validate()?;
    if p.num_steps < 2 {
        return Err(CodingError::InvalidParams(
            "time-to-first-spike needs at least 2 steps".into(),
        ));
    }
    check_unit(x)?;
    let mut train = SpikeTrain::empty(x.len(), p.num_steps, p.dt_s);
    for (i, &v) in x.iter().enumerate() {
        train.events.insert((i, ttfs_step(v.as_f64(), p.num_steps)));
    }
    Ok(train)
}

pub fn decode_ttfs<T: Scalar>(t: &SpikeTrain, p: &CodecParams) -> Result<Vec<T>, CodingError> {
    p.validate()?;
    let span = (t.num_steps().max(2) - 1) as f64;
    (0..t.num_neurons())
        .map(|n| {
            let s = t.spikes_of(n);
            match s.as_slice() {
                [step] => Ok(T::lit(1.0 - *step as f64 / span)),
                _ => Err(CodingError::SpikeCount(n, s.len())),
            }
        })
        .collect()
}

/// MSB-first binary expansion: step `k` fires iff bit `B−1−k` is set.
pub fn encode_phase(values: &[u64], p: &CodecParams) -> Result<SpikeTrain, CodingError> {
    let mut q = *p;
    q.scheme = Scheme::Phase;
    q.validate()?;
    let bits = p.num_bits as usize;
    let mut train = SpikeTrain::empty(values.len(), p.num_steps, p.dt_s);
    for (i, &v) in values.iter().enumerate() {
        if v >> p.num_bits != 0 {
            return Err(CodingError::OutOfDomain {
                index: i,
                value: v as f64,
                domain: "[0, 2^num_bits)",
            });
        }
        for k in 0..bits {
            if (v >> (bits - 1 - k)) & 1 == 1 {
                train.events.insert((i, k));
            }
        }
    }
    Ok(train)
}

/// Sum of `2^(B−1−k)` over spike steps `k < B`.
pub fn decode_phase(t: &SpikeTrain, p: &CodecParams) -> Result<Vec<u64>, CodingError> {
    let bits = p.num_bits as usize;
    let mut out = vec![0u64; t.num_neurons()];
    for (n, k) in t.events() {
        if k < bits {
            out[n] |= 1 << (bits - 1 - k);
        }
    }
    Ok(out)
}

/// Spike count and inter-spike interval of a burst for input `x`.
pub fn burst_shape(x: f64, p: &CodecParams) -> (usize, usize) {
    let m = p.burst_max_spikes;
    let n = 1 + (x * (m - 1) as f64).round() as usize;
    let isi = (p.isi_max as f64 - x * (p.isi_max - p.isi_min) as f64).round() as usize;
    (n, isi)
}

/// Burst from step 0 with `1 + round(x·(M−1))` spikes spaced
/// `round(isi_max − x·(isi_max − isi_min))` apart.
pub fn encode_burst<T: Scalar>(x: &[T], p: &CodecParams) -> Result<SpikeTrain, CodingError> {
    let mut q = *p;
    q.scheme = Scheme::Burst;
    q.validate()?;
    check_unit(x)?;
    let mut train = SpikeTrain::empty(x.len(), p.num_steps, p.dt_s);
    for (i, &v) in x.iter().enumerate() {
        let (n, isi) = burst_shape(v.as_f64(), p);
        if (n - 1) * isi >= p.num_steps {
            return Err(CodingError::BurstOverflow {
                spikes: n,
                isi,
                num_steps: p.num_steps,
            });
        }
        for k in 0..n {
            train.events.insert((i, k * isi));
        }
    }
    Ok(train)
}

/// Count decides the value; the ISI is consulted only when the count carries
/// no information (`burst_max_spikes == 1`).
pub fn decode_burst<T: Scalar>(t: &SpikeTrain, p: &CodecParams) -> Result<Vec<T>, CodingError> {
    let m = p.burst_max_spikes;
    (0..t.num_neurons())
        .map(|n| {
            let s = t.spikes_of(n);
            if s.is_empty() {
                return Err(CodingError::SpikeCount(n, 0));
            }
            if m > 1 {
                let c = s.len().min(m);
                return Ok(T::lit((c - 1) as f64 / (m - 1) as f64));
            }
            if s.len() >= 2 && p.isi_max > p.isi_min {
                let isi = (s[1] - s[0]) as f64;
                let x = (p.isi_max as f64 - isi) / (p.isi_max - p.isi_min) as f64;
                return Ok(T::lit(x.clamp(0.0, 1.0)));
            }
            Ok(T::zero())
        })
        .collect()
}

/// Largest input fires at step 0, the next at step 1, and so on.
pub fn encode_rank_order<T: Scalar>(x: &[T], p: &CodecParams) -> Result<SpikeTrain, CodingError> {
    if p.num_steps < x.len() {
        return Err(CodingError::InvalidParams(format!(
            "rank order over {} neurons needs at least as many steps, got {}",
            x.len(),
            p.num_steps
        )));
    }
    for (i, v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(CodingError::OutOfDomain {
                index: i,
                value: v.as_f64(),
                domain: "finite reals",
            });
        }
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).expect("finite"));
    for w in order.windows(2) {
        if x[w[0]] == x[w[1]] {
            let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
            return Err(CodingError::Tie(a, b));
        }
    }
    let mut train = SpikeTrain::empty(x.len(), p.num_steps, p.dt_s);
    for (rank, &neuron) in order.iter().enumerate() {
        train.events.insert((neuron, rank));
    }
    Ok(train)
}

/// Neuron indices in firing order.
pub fn decode_rank_order(t: &SpikeTrain) -> Result<Vec<usize>, CodingError> {
    let mut firsts = Vec::with_capacity(t.num_neurons());
    for n in 0..t.num_neurons() {
        let s = t.spikes_of(n);
        match s.as_slice() {
            [step] => firsts.push((*step, n)),
            _ => return Err(CodingError::SpikeCount(n, s.len())),
        }
    }
    firsts.sort_unstable();
    Ok(firsts.into_iter().map(|(_, n)| n).collect())
}

/// Encode real values with whichever real-valued scheme `p` selects.
pub fn encode<T: Scalar>(x: &[T], p: &CodecParams) -> Result<SpikeTrain, CodingError> {
    match p.scheme {
        Scheme::Rate => encode_rate(x, p),
        Scheme::Ttfs => encode_ttfs(x, p),
        Scheme::Burst => encode_burst(x, p),
        Scheme::RankOrder => encode_rank_order(x, p),
        Scheme::Phase => {
            let max = (1u64 << p.num_bits) - 1;
            let ints: Vec<u64> = x
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let f = v.as_f64();
                    if (0.0..=1.0).contains(&f) {
                        Ok((f * max as f64).round() as u64)
                    } else {
                        Err(CodingError::OutOfDomain {
                            index: i,
                            value: f,
                            domain: "[0, 1]",
                        })
                    }
                })
                .collect::<Result<_, _>>()?;
            encode_phase(&ints, p)
        }
    }
}

/// Inverse of [`encode`]. Rank order decodes to `1 − rank/(N−1)`.
pub fn decode<T: Scalar>(t: &SpikeTrain, p: &CodecParams) -> Result<Vec<T>, CodingError> {
    match p.scheme {
        Scheme::Rate => decode_rate(t, p),
        Scheme::Ttfs => decode_ttfs(t, p),
        Scheme::Burst => decode_burst(t, p),
        Scheme::Phase => {
            let max = ((1u64 << p.num_bits) - 1) as f64;
            Ok(decode_phase(t, p)?
                .into_iter()
                .map(|v| T::lit(v as f64 / max))
                .collect())
        }
        Scheme::RankOrder => {
            let order = decode_rank_order(t)?;
            let n = order.len();
            let mut out = vec![T::zero(); n];
            for (rank, neuron) in order.into_iter().enumerate() {
                out[neuron] = if n > 1 {
                    T::lit(1.0 - rank as f64 / (n - 1) as f64)
                } else {
                    T::one()
                };
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rate(num_steps: usize) -> CodecParams {
        CodecParams {
            scheme: Scheme::Rate,
            num_steps,
            dt_s: 1e-3,
            r_max: 1000.0,
            seed: 11,
            ..CodecParams::default()
        }
    }

    #[test]
    fn train_rejects_bad_events() {
        let mut t = SpikeTrain::empty(2, 3, 1.0);
        assert!(t.insert(2, 0).is_err());
        assert!(t.insert(0, 3).is_err());
        t.insert(1, 2).unwrap();
        assert_eq!(t.insert(1, 2), Err(CodingError::DuplicateEvent(1, 2)));
    }

    #[test]
    fn train_json_is_sorted_and_validated() {
        let t = SpikeTrain::from_events(3, 4, 0.5, [(2, 1), (0, 3), (0, 0)]).unwrap();
        let js = t.to_json();
        assert_eq!(
            js,
            r#"{"num_neurons":3,"num_steps":4,"dt_s":0.5,"events":[[0,0],[0,3],[2,1]]}"#
        );
        assert_eq!(SpikeTrain::from_json(&js).unwrap(), t);
        assert!(SpikeTrain::from_json(r#"{"num_neurons":1,"num_steps":1,"dt_s":1,"events":[[0,5]]}"#).is_err());
    }

    #[test]
    fn rate_edges() {
        let p = rate(200);
        let t = encode_rate(&[0.0f64, 1.0], &p).unwrap();
        assert!(t.spikes_of(0).is_empty());
        assert_eq!(t.spikes_of(1).len(), 200);
        assert_eq!(decode_rate::<f64>(&t, &p).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(
            encode_rate(&[1.5f64], &p),
            Err(CodingError::OutOfDomain { index: 0, .. })
        ));
    }

    #[test]
    fn rate_half_is_binomial() {
        let p = rate(10_000);
        let t = encode_rate(&[0.5f64], &p).unwrap();
        let c = t.len() as f64;
        assert!((c - 5000.0).abs() <= 150.0, "{c}");
    }

    #[test]
    fn rate_is_reproducible() {
        let p = rate(64);
        let x = [0.1f64, 0.4, 0.9];
        assert_eq!(encode_rate(&x, &p).unwrap(), encode_rate(&x, &p).unwrap());
        let other = CodecParams { seed: 12, ..p };
        assert_ne!(encode_rate(&x, &p).unwrap(), encode_rate(&x, &other).unwrap());
    }

    #[test]
    fn ttfs_examples() {
        let p = CodecParams::with_scheme(Scheme::Ttfs, 101);
        let t = encode_ttfs(&[1.0f64, 0.0, 0.25], &p).unwrap();
        assert_eq!(t.spikes_of(0), vec![0]);
        assert_eq!(t.spikes_of(1), vec![100]);
        assert_eq!(t.spikes_of(2), vec![75]);
        assert_eq!(decode_ttfs::<f64>(&t, &p).unwrap(), vec![1.0, 0.0, 0.25]);
        let two = SpikeTrain::from_events(1, 101, 1.0, [(0, 1), (0, 4)]).unwrap();
        assert_eq!(decode_ttfs::<f64>(&two, &p), Err(CodingError::SpikeCount(0, 2)));
    }

    #[test]
    fn phase_examples() {
        let p = CodecParams {
            num_bits: 3,
            ..CodecParams::with_scheme(Scheme::Phase, 3)
        };
        let t = encode_phase(&[5, 0], &p).unwrap();
        assert_eq!(t.spikes_of(0), vec![0, 2]);
        assert!(t.spikes_of(1).is_empty());
        assert_eq!(decode_phase(&t, &p).unwrap(), vec![5, 0]);
        assert!(matches!(encode_phase(&[8], &p), Err(CodingError::OutOfDomain { .. })));
    }

    #[test]
    fn burst_examples() {
        let p = CodecParams {
            burst_max_spikes: 5,
            isi_min: 1,
            isi_max: 9,
            ..CodecParams::with_scheme(Scheme::Burst, 64)
        };
        assert_eq!(burst_shape(0.5, &p), (3, 5));
        let t = encode_burst(&[0.5f64, 0.0, 1.0], &p).unwrap();
        assert_eq!(t.spikes_of(0), vec![0, 5, 10]);
        assert_eq!(t.spikes_of(1), vec![0]);
        assert_eq!(t.spikes_of(2), vec![0, 1, 2, 3, 4]);
        assert_eq!(decode_burst::<f64>(&t, &p).unwrap(), vec![0.5, 0.0, 1.0]);
        let tight = CodecParams { num_steps: 8, ..p };
        assert!(matches!(
            encode_burst(&[0.5f64], &tight),
            Err(CodingError::BurstOverflow { .. })
        ));
    }

    #[test]
    fn rank_order_examples() {
        let p = CodecParams::with_scheme(Scheme::RankOrder, 8);
        let t = encode_rank_order(&[0.3f64, 0.9, 0.1], &p).unwrap();
        assert_eq!(decode_rank_order(&t).unwrap(), vec![1, 0, 2]);
        let inc: Vec<f64> = (0..5).map(f64::from).collect();
        let t = encode_rank_order(&inc, &p).unwrap();
        assert_eq!(decode_rank_order(&t).unwrap(), vec![4, 3, 2, 1, 0]);
        assert_eq!(encode_rank_order(&[0.2f64, 0.5, 0.2], &p), Err(CodingError::Tie(0, 2)));
    }

    #[test]
    fn generic_encode_decode_dispatch() {
        let x = [0.0f64, 0.5, 1.0];
        for scheme in [Scheme::Ttfs, Scheme::Burst, Scheme::Phase] {
            let p = CodecParams::with_scheme(scheme, 101);
            let y: Vec<f64> = decode(&encode(&x, &p).unwrap(), &p).unwrap();
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 0.01, "{scheme:?}: {a} vs {b}");
            }
        }
    }
}
