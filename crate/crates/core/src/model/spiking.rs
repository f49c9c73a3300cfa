use ndarray::{Array2, Axis};

use super::counter::{MacCounter, MacTerm};
use super::ops::{head_cols, matmul, softmax_backward, softmax_rows};
use super::{ModelConfig, ModelError, SpikingParams};
use crate::coding::{self, Scheme, SpikeTrain, RATE_STREAM};
use crate::neuron::{LifParams, LifState};
use crate::{rng, Scalar};

const SSA_Q_STREAM: u64 = 0x5353_4151;
const SSA_K_STREAM: u64 = 0x5353_414B;

/// Fast-sigmoid surrogate for `d H(u)/du`.
pub(crate) fn surrogate<T: Scalar>(u: T, alpha: T) -> T {
    let d = T::one() + alpha * u.abs();
    T::one() / (d * d)
}

/// Bernoulli spikes for one head, laid out `F × (t_sim·d_h)` with column
/// `t·d_h + j`, plus the surrogate derivative of each spike w.r.t. its input.
#[allow(clippy::too_many_arguments)]
fn spike_head<T: Scalar>(
    x: &Array2<T>,
    h: usize,
    dh: usize,
    t_sim: usize,
    seed: u64,
    stream: u64,
    rps: T,
    alpha: T,
) -> (Array2<T>, Array2<T>) {
    let (f, width) = x.dim();
    let mut spikes = Array2::zeros((f, t_sim * dh));
    let mut grad = Array2::zeros((f, t_sim * dh));
    for r in 0..f {
        for j in 0..dh {
            let c = h * dh + j;
            let drive = x[[r, c]] * rps;
            for t in 0..t_sim {
                let xi = T::lit(rng::uniform(seed, stream, (r * width + c) as u64, t as u64));
                if xi < drive {
                    spikes[[r, t * dh + j]] = T::one();
                }
                grad[[r, t * dh + j]] = rps * surrogate(drive - xi, alpha);
            }
        }
    }
    (spikes, grad)
}

#[derive(Debug, Clone)]
pub struct SpikingAttentionOutput<T> {
    /// `F × S`, after the output projection.
    pub output: Array2<T>,
    /// Per head `(1/t_sim)·Σ_t q_spike(t)·k_spike(t)ᵀ`.
    pub coincidence: Vec<Array2<T>>,
    /// Per head row-softmax of the scaled coincidences.
    pub weights: Vec<Array2<T>>,
}

#[derive(Debug, Clone)]
pub(crate) struct SsaCache<T> {
    x: Array2<T>,
    v: Array2<T>,
    q_spikes: Vec<Array2<T>>,
    k_spikes: Vec<Array2<T>>,
    q_grad: Vec<Array2<T>>,
    k_grad: Vec<Array2<T>>,
    weights: Vec<Array2<T>>,
    context: Array2<T>,
}

pub(crate) struct SsaGrads<T> {
    pub dx: Array2<T>,
    pub params: SpikingParams<T>,
}

pub(crate) fn spiking_attention_forward<T: Scalar>(
    x: &Array2<T>,
    sp: &SpikingParams<T>,
    cfg: &ModelConfig,
    counter: Option<&MacCounter>,
) -> Result<(SpikingAttentionOutput<T>, SsaCache<T>), ModelError> {
    let t_sim = cfg.snn_steps;
    if t_sim < 1 {
        return Err(ModelError::InvalidConfig("t_sim must be at least 1".into()));
    }
    let (f, s) = x.dim();
    let heads = cfg.num_heads;
    let dh = cfg.head_dim();
    let seed = cfg.snn_codec().seed;
    let rps = T::lit(cfg.codec.rate_per_step());
    let alpha = T::lit(cfg.surrogate_alpha);
    let xv = x.view();
    let q = matmul(&xv, &sp.wq.view(), counter, MacTerm::AttentionProjection);
    let k = matmul(&xv, &sp.wk.view(), counter, MacTerm::AttentionProjection);
    let v = matmul(&xv, &sp.wv.view(), counter, MacTerm::AttentionProjection);
    let scale = T::one() / T::from_usize_lossy(dh).sqrt();
    let norm = T::one() / T::from_usize_lossy(t_sim);
    let mut context = Array2::zeros((f, s));
    let mut cache = SsaCache {
        x: x.clone(),
        v: v.clone(),
        q_spikes: Vec::with_capacity(heads),
        k_spikes: Vec::with_capacity(heads),
        q_grad: Vec::with_capacity(heads),
        k_grad: Vec::with_capacity(heads),
        weights: Vec::with_capacity(heads),
        context: Array2::zeros((0, 0)),
    };
    let mut coincidence = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qs, qg) = spike_head(&q, h, dh, t_sim, seed, SSA_Q_STREAM, rps, alpha);
        let (ks, kg) = spike_head(&k, h, dh, t_sim, seed, SSA_K_STREAM, rps, alpha);
        let c = matmul(&qs.view(), &ks.t(), counter, MacTerm::AttentionScores) * norm;
        let p = softmax_rows(&(&c * scale))?;
        let vh = v.slice_axis(Axis(1), head_cols(h, dh));
        let ctx = matmul(&p.view(), &vh, counter, MacTerm::AttentionScores);
        context.slice_axis_mut(Axis(1), head_cols(h, dh)).assign(&ctx);
        coincidence.push(c);
        cache.q_spikes.push(qs);
        cache.k_spikes.push(ks);
        cache.q_grad.push(qg);
        cache.k_grad.push(kg);
        cache.weights.push(p);
    }
    let output = matmul(&context.view(), &sp.wo.view(), counter, MacTerm::AttentionProjection);
    cache.context = context;
    let out = SpikingAttentionOutput {
        output,
        coincidence,
        weights: cache.weights.clone(),
    };
    Ok((out, cache))
}

/// Spike-coincidence self-attention over `x` (`F × S`).
pub fn spiking_attention<T: Scalar>(
    x: &Array2<T>,
    sp: &SpikingParams<T>,
    cfg: &ModelConfig,
    counter: Option<&MacCounter>,
) -> Result<SpikingAttentionOutput<T>, ModelError> {
    spiking_attention_forward(x, sp, cfg, counter).map(|(o, _)| o)
}

pub(crate) fn spiking_attention_backward<T: Scalar>(
    cache: &SsaCache<T>,
    sp: &SpikingParams<T>,
    cfg: &ModelConfig,
    dout: &Array2<T>,
) -> SsaGrads<T> {
    let t_sim = cfg.snn_steps;
    let dh = cfg.head_dim();
    let scale = T::one() / T::from_usize_lossy(dh).sqrt();
    let norm = T::one() / T::from_usize_lossy(t_sim);
    let dwo = cache.context.t().dot(dout);
    let dctx = dout.dot(&sp.wo.t());
    let mut dq = Array2::zeros(cache.v.raw_dim());
    let mut dk = Array2::zeros(cache.v.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for (h, p) in cache.weights.iter().enumerate() {
        let cols = head_cols(h, dh);
        let dctx_h = dctx.slice_axis(Axis(1), cols);
        let dp = dctx_h.dot(&cache.v.slice_axis(Axis(1), cols).t());
        dv.slice_axis_mut(Axis(1), cols).assign(&p.t().dot(&dctx_h));
        let dc = softmax_backward(p, &dp) * (scale * norm);
        let dqs = dc.dot(&cache.k_spikes[h]) * &cache.q_grad[h];
        let dks = dc.t().dot(&cache.q_spikes[h]) * &cache.k_grad[h];
        for (dst, src) in [(&mut dq, &dqs), (&mut dk, &dks)] {
            let mut block = dst.slice_axis_mut(Axis(1), cols);
            for t in 0..t_sim {
                block += &src.slice_axis(Axis(1), head_cols(t, dh));
            }
        }
    }
    let xt = cache.x.t();
    let dx = dq.dot(&sp.wq.t()) + dk.dot(&sp.wk.t()) + dv.dot(&sp.wv.t());
    SsaGrads {
        dx,
        params: SpikingParams {
            wq: xt.dot(&dq),
            wk: xt.dot(&dk),
            wv: xt.dot(&dv),
            wo: dwo,
        },
    }
}

fn flat<T: Scalar>(x: &Array2<T>) -> Vec<T> {
    x.iter().copied().collect()
}

/// Spike-encode `x` (`F × N`, row-major neuron order) with the configured codec.
pub fn snn_encode_layer<T: Scalar>(x: &Array2<T>, cfg: &ModelConfig) -> Result<SpikeTrain, ModelError> {
    Ok(coding::encode(&flat(x), &cfg.snn_codec())?)
}

/// Drive one LIF neuron per input neuron with the input spikes (weight 1).
pub fn snn_lif_layer(train: &SpikeTrain, cfg: &ModelConfig) -> Result<SpikeTrain, ModelError> {
    let p: LifParams<f64> = cfg.lif;
    let n = train.num_neurons();
    let mut state = LifState::new(n, 0.0);
    let mut out = SpikeTrain::empty(n, train.num_steps(), train.dt_s());
    let mut input = vec![0.0; n];
    for t in 0..train.num_steps() {
        input.iter_mut().enumerate().for_each(|(i, x)| {
            *x = if train.contains(i, t) { 1.0 } else { 0.0 };
        });
        let fired = state
            .step(&input, &p)
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        for (i, _) in fired.iter().enumerate().filter(|(_, &f)| f) {
            out.insert(i, t)?;
        }
    }
    Ok(out)
}

/// Decode a spike train back to `frames × (N / frames)`.
pub fn snn_decode_layer<T: Scalar>(
    train: &SpikeTrain,
    cfg: &ModelConfig,
    frames: usize,
) -> Result<Array2<T>, ModelError> {
    let values: Vec<T> = coding::decode(train, &cfg.snn_codec())?;
    let width = values.len().checked_div(frames).unwrap_or(0);
    Array2::from_shape_vec((frames, width), values).map_err(|_| ModelError::Shape {
        op: "snn decode",
        expected: (frames, width),
        got: (train.num_neurons(), 1),
    })
}

#[derive(Debug, Clone)]
pub(crate) enum SnnCache<T> {
    /// Per step `t` and flat neuron `i` at index `t·n + i`.
    Rate {
        n: usize,
        in_grad: Vec<T>,
        /// Pre-reset membrane; `None` without LIF dynamics.
        lif: Option<LifTrace<T>>,
    },
    /// Straight-through: gradient passes where the input was inside (0, 1).
    Ttfs { pass: Array2<bool> },
}

#[derive(Debug, Clone)]
pub(crate) struct LifTrace<T> {
    potential: Vec<T>,
    fired: Vec<bool>,
    active: Vec<bool>,
}

/// Encode → (LIF) → decode over `x`; returns the decoded `F × N` tensor.
pub(crate) fn snn_stage_forward<T: Scalar>(
    x: &Array2<T>,
    cfg: &ModelConfig,
    counter: Option<&MacCounter>,
) -> Result<(Array2<T>, SnnCache<T>), ModelError> {
    let (f, width) = x.dim();
    let n = f * width;
    let t_sim = cfg.snn_steps;
    if let Some(c) = counter {
        c.add(MacTerm::Snn, (n * t_sim) as u64);
    }
    if cfg.codec.scheme == Scheme::Ttfs {
        let clamped = x.mapv(|v| v.max(T::zero()).min(T::one()));
        let train = snn_encode_layer(&clamped, cfg)?;
        let decoded = snn_decode_layer(&train, cfg, f)?;
        let pass = x.mapv(|v| v > T::zero() && v < T::one());
        return Ok((decoded, SnnCache::Ttfs { pass }));
    }
    let codec = cfg.snn_codec();
    let rps = T::lit(codec.rate_per_step());
    let alpha = T::lit(cfg.surrogate_alpha);
    let lifp = LifParams {
        decay: T::lit(cfg.lif.decay),
        threshold: T::lit(cfg.lif.threshold),
        reset: T::lit(cfg.lif.reset),
        refractory_steps: cfg.lif.refractory_steps,
    };
    let xs = flat(x);
    let mut in_grad = vec![T::zero(); t_sim * n];
    let mut counts = vec![0usize; n];
    let mut state = LifState::new(n, T::zero());
    let mut trace = cfg.recurrent_lif.then(|| LifTrace {
        potential: vec![T::zero(); t_sim * n],
        fired: vec![false; t_sim * n],
        active: vec![false; t_sim * n],
    });
    let mut input = vec![T::zero(); n];
    for t in 0..t_sim {
        for i in 0..n {
            let drive = xs[i] * rps;
            let xi = T::lit(rng::uniform(codec.seed, RATE_STREAM, i as u64, t as u64));
            input[i] = if xi < drive { T::one() } else { T::zero() };
            in_grad[t * n + i] = rps * surrogate(drive - xi, alpha);
        }
        match &mut trace {
            None => {
                for (c, &s) in counts.iter_mut().zip(&input) {
                    *c += (s > T::zero()) as usize;
                }
            }
            Some(tr) => {
                let before = state.clone();
                let fired = state
                    .step(&input, &lifp)
                    .map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
                for i in 0..n {
                    let k = t * n + i;
                    tr.active[k] = before.refractory_remaining[i] == 0;
                    tr.potential[k] = lifp.decay * before.membrane[i] + input[i];
                    tr.fired[k] = fired[i];
                    counts[i] += fired[i] as usize;
                }
            }
        }
    }
    let denom = T::from_usize_lossy(t_sim) * rps;
    let decoded = Array2::from_shape_vec(
        (f, width),
        counts.iter().map(|&c| T::from_usize_lossy(c) / denom).collect(),
    )
    .expect("shape matches");
    Ok((decoded, SnnCache::Rate { n, in_grad, lif: trace }))
}

pub(crate) fn snn_stage_backward<T: Scalar>(cache: &SnnCache<T>, cfg: &ModelConfig, dout: &Array2<T>) -> Array2<T> {
    match cache {
        SnnCache::Ttfs { pass } => {
            let mut dx = dout.clone();
            dx.zip_mut_with(pass, |g, &p| {
                if !p {
                    *g = T::zero();
                }
            });
            dx
        }
        SnnCache::Rate { n, in_grad, lif } => {
            let n = *n;
            let t_sim = cfg.snn_steps;
            let rps = T::lit(cfg.codec.rate_per_step());
            let alpha = T::lit(cfg.surrogate_alpha);
            let theta = T::lit(cfg.lif.threshold);
            let decay = T::lit(cfg.lif.decay);
            let d_count: Vec<T> = dout.iter().map(|&g| g / (T::from_usize_lossy(t_sim) * rps)).collect();
            let mut dx = vec![T::zero(); n];
            match lif {
                None => {
                    for t in 0..t_sim {
                        for i in 0..n {
                            dx[i] += d_count[i] * in_grad[t * n + i];
                        }
                    }
                }
                Some(tr) => {
                    for i in 0..n {
                        // gradient w.r.t. the membrane carried into step t
                        let mut dm = T::zero();
                        for t in (0..t_sim).rev() {
                            let k = t * n + i;
                            if !tr.active[k] {
                                continue;
                            }
                            let keep = if tr.fired[k] { T::zero() } else { dm };
                            let dv = d_count[i] * surrogate(tr.potential[k] - theta, alpha) + keep;
                            dx[i] += dv * in_grad[k];
                            dm = decay * dv;
                        }
                    }
                }
            }
            Array2::from_shape_vec(dout.raw_dim(), dx).expect("shape matches")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(t_sim: usize) -> ModelConfig {
        ModelConfig {
            snn_steps: t_sim,
            embed_dim: 4,
            snn_neurons: 4,
            num_heads: 2,
            ..ModelConfig::default()
        }
    }

    fn identity_params(s: usize) -> SpikingParams<f64> {
        SpikingParams {
            wq: Array2::eye(s),
            wk: Array2::eye(s),
            wv: Array2::eye(s),
            wo: Array2::eye(s),
        }
    }

    #[test]
    fn zero_input_gives_uniform_rows() {
        let c = cfg(8);
        let x = Array2::<f64>::zeros((5, 4));
        let out = spiking_attention(&x, &identity_params(4), &c, None).unwrap();
        for w in &out.weights {
            for &v in w {
                assert!((v - 0.2).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_step_saturating_is_binary_outer_product() {
        let c = cfg(1);
        let x = ndarray::array![[1.5, -2.0, 3.0, 0.0], [-1.0, 2.0, 1.0, 1.0], [4.0, 4.0, -4.0, -4.0]];
        let out = spiking_attention(&x, &identity_params(4), &c, None).unwrap();
        let b = x.mapv(|v| if v >= 1.0 { 1.0 } else { 0.0 });
        for h in 0..2 {
            let bh = b.slice_axis(Axis(1), head_cols(h, 2));
            assert_eq!(out.coincidence[h], bh.dot(&bh.t()));
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let c = cfg(16);
        let x = Array2::from_shape_fn((6, 4), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.4);
        let out = spiking_attention(&x, &identity_params(4), &c, None).unwrap();
        for w in &out.weights {
            for row in w.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stage_matches_public_layers() {
        let c = cfg(32);
        let x = Array2::from_shape_fn((3, 4), |(i, j)| ((i * 4 + j) as f64 * 0.083) % 1.0);
        let (fast, _) = snn_stage_forward(&x, &c, None).unwrap();
        let train = snn_encode_layer(&x, &c).unwrap();
        let lif = snn_lif_layer(&train, &c).unwrap();
        let slow: Array2<f64> = snn_decode_layer(&lif, &c, 3).unwrap();
        assert_eq!(fast, slow);
        let plain = ModelConfig {
            recurrent_lif: false,
            ..c.clone()
        };
        let (fast, _) = snn_stage_forward(&x, &plain, None).unwrap();
        let slow: Array2<f64> = snn_decode_layer(&train, &plain, 3).unwrap();
        assert_eq!(fast, slow);
    }

    #[test]
    fn surrogate_peaks_at_threshold() {
        assert_eq!(surrogate(0.0f64, 10.0), 1.0);
        assert!((surrogate(0.1f64, 10.0) - 0.25).abs() < 1e-15);
        assert_eq!(surrogate(-0.1f64, 10.0), surrogate(0.1, 10.0));
    }
}
