use ndarray::Array2;
use num_complex::Complex;

use super::counter::{MacCounter, MacTerm};
use super::ops::{attention, attention_backward, check_finite, check_shape, column_sums, embed, matmul};
use super::params::LayerParams;
use super::spiking::{
    snn_stage_backward, snn_stage_forward, spiking_attention_backward, spiking_attention_forward, SnnCache, SsaCache,
};
use super::{ModelConfig, ModelError, Params};
use crate::dsp::Spectrogram;
use crate::Scalar;

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub spectrogram: Spectrogram<T>,
    /// Delayed mask actually applied, `frames × bins`, in `[0, 1]`.
    pub mask: Array2<T>,
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    x: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    weights: Vec<Array2<T>>,
    context: Array2<T>,
    mid: Array2<T>,
    pre: Array2<T>,
    hidden: Array2<T>,
}

#[derive(Debug, Clone)]
pub(crate) struct Cache<T> {
    feats: Array2<T>,
    layers: Vec<LayerCache<T>>,
    ssa: Option<SsaCache<T>>,
    snn: Option<SnnCache<T>>,
    head_in: Array2<T>,
    mask: Array2<T>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn relu<T: Scalar>(x: T) -> T {
    x.max(T::zero())
}

fn layer_forward<T: Scalar>(
    x: Array2<T>,
    lp: &LayerParams<T>,
    cfg: &ModelConfig,
    counter: Option<&MacCounter>,
) -> Result<(Array2<T>, LayerCache<T>), ModelError> {
    let xv = x.view();
    let q = matmul(&xv, &lp.wq.view(), counter, MacTerm::AttentionProjection);
    let k = matmul(&xv, &lp.wk.view(), counter, MacTerm::AttentionProjection);
    let v = matmul(&xv, &lp.wv.view(), counter, MacTerm::AttentionProjection);
    let att = attention(&q, &k, &v, cfg.num_heads, &lp.wo, counter)?;
    let mid = &x + &att.output;
    let mut pre = matmul(&mid.view(), &lp.w1.view(), counter, MacTerm::FeedForward);
    pre += &lp.b1;
    let hidden = pre.mapv(relu);
    let mut out = matmul(&hidden.view(), &lp.w2.view(), counter, MacTerm::FeedForward);
    out += &lp.b2;
    out += &mid;
    Ok((
        out,
        LayerCache {
            x,
            q,
            k,
            v,
            weights: att.weights,
            context: att.context,
            mid,
            pre,
            hidden,
        },
    ))
}

fn layer_backward<T: Scalar>(c: &LayerCache<T>, lp: &LayerParams<T>, dout: &Array2<T>) -> (Array2<T>, LayerParams<T>) {
    let mut dpre = dout.dot(&lp.w2.t());
    dpre.zip_mut_with(&c.pre, |g, &p| {
        if p <= T::zero() {
            *g = T::zero();
        }
    });
    let dw2 = c.hidden.t().dot(dout);
    let db2 = column_sums(dout);
    let dw1 = c.mid.t().dot(&dpre);
    let db1 = column_sums(&dpre);
    let dmid = dout + &dpre.dot(&lp.w1.t());
    let dwo = c.context.t().dot(&dmid);
    let dctx = dmid.dot(&lp.wo.t());
    let (dq, dk, dv) = attention_backward(&c.q, &c.k, &c.v, &c.weights, &dctx);
    let xt = c.x.t();
    let dx = dmid + dq.dot(&lp.wq.t()) + dk.dot(&lp.wk.t()) + dv.dot(&lp.wv.t());
    (
        dx,
        LayerParams {
            wq: xt.dot(&dq),
            wk: xt.dot(&dk),
            wv: xt.dot(&dv),
            wo: dwo,
            w1: dw1,
            b1: db1,
            w2: dw2,
            b2: db2,
        },
    )
}

/// Source frame of each output frame under the configured delay.
fn delay_source(t: usize, delay: usize) -> usize {
    t.saturating_sub(delay)
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let params = Params::init(&config);
        Ok(Self { config, params })
    }

    /// Adopt existing parameters after checking every shape against `config`.
    pub fn from_parts(config: ModelConfig, params: Params<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let reference = Params::<T>::init(&config);
        let expected: Vec<(String, Vec<usize>)> = reference
            .tensors()
            .into_iter()
            .map(|(n, a)| (n, a.shape().to_vec()))
            .collect();
        let got: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|(n, a)| (n, a.shape().to_vec()))
            .collect();
        if expected != got {
            return Err(ModelError::InvalidConfig(
                "parameter names or shapes do not match the configuration".into(),
            ));
        }
        Ok(Self { config, params })
    }

    /// Force a constant mask `σ(logit)` by zeroing the head weights.
    pub fn set_constant_mask_logit(&mut self, logit: T) {
        self.params.head_w.fill(T::zero());
        self.params.head_b.fill(logit);
    }

    /// `ln(1 + |X|)` per frame and bin.
    pub fn features(spec: &Spectrogram<T>) -> Array2<T> {
        spec.frames().mapv(|c| c.norm().ln_1p())
    }

    pub(crate) fn forward_cached(
        &self,
        spec: &Spectrogram<T>,
        counter: Option<&MacCounter>,
    ) -> Result<(Array2<T>, Cache<T>), ModelError> {
        let cfg = &self.config;
        check_shape(
            "forward input",
            &spec.frames().view(),
            (spec.num_frames(), cfg.input_dim),
        )?;
        let feats = Self::features(spec);
        let mut x = embed(&feats, &self.params, cfg, counter)?;
        check_finite("embedding", &x.view())?;
        let mut layers = Vec::with_capacity(self.params.layers.len());
        for lp in &self.params.layers {
            let (out, c) = layer_forward(x, lp, cfg, counter)?;
            layers.push(c);
            x = out;
        }
        let ssa = match (&self.params.spiking, cfg.spiking_attention) {
            (Some(sp), true) => {
                let (out, c) = spiking_attention_forward(&x, sp, cfg, counter)?;
                x += &out.output;
                Some(c)
            }
            _ => None,
        };
        let snn = if cfg.snn_stage {
            let (decoded, c) = snn_stage_forward(&x, cfg, counter)?;
            x += &decoded;
            Some(c)
        } else {
            None
        };
        let mut logits = matmul(&x.view(), &self.params.head_w.view(), counter, MacTerm::Head);
        logits += &self.params.head_b;
        check_finite("mask logits", &logits.view())?;
        let mask = logits.mapv(sigmoid);
        let f = mask.nrows();
        let delayed = Array2::from_shape_fn(mask.raw_dim(), |(t, k)| {
            mask[[delay_source(t, cfg.delay_frames).min(f - 1), k]]
        });
        Ok((
            delayed,
            Cache {
                feats,
                layers,
                ssa,
                snn,
                head_in: x,
                mask,
            },
        ))
    }

    /// Gradients of every parameter given `dL/d(delayed mask)`.
    pub(crate) fn backward(&self, cache: &Cache<T>, dmask_delayed: &Array2<T>) -> Params<T> {
        let cfg = &self.config;
        let mut grads = self.params.zeros_like();
        let mut dmask = Array2::zeros(cache.mask.raw_dim());
        for ((t, k), &g) in dmask_delayed.indexed_iter() {
            dmask[[delay_source(t, cfg.delay_frames), k]] += g;
        }
        let mut dlogits = dmask;
        dlogits.zip_mut_with(&cache.mask, |g, &m| *g *= m * (T::one() - m));
        grads.head_w = cache.head_in.t().dot(&dlogits);
        grads.head_b = column_sums(&dlogits);
        let mut dx = dlogits.dot(&self.params.head_w.t());
        if let Some(c) = &cache.snn {
            dx = &dx + &snn_stage_backward(c, cfg, &dx);
        }
        if let (Some(c), Some(sp)) = (&cache.ssa, &self.params.spiking) {
            let g = spiking_attention_backward(c, sp, cfg, &dx);
            dx += &g.dx;
            grads.spiking = Some(g.params);
        }
        for (i, (c, lp)) in cache.layers.iter().zip(&self.params.layers).enumerate().rev() {
            let (dprev, g) = layer_backward(c, lp, &dx);
            grads.layers[i] = g;
            dx = dprev;
        }
        grads.embed_w = cache.feats.t().dot(&dx);
        grads.embed_b = column_sums(&dx);
        grads
    }

    /// Mask in `[0, 1]` for every frame and bin, after the frame delay.
    pub fn mask(&self, spec: &Spectrogram<T>) -> Result<Array2<T>, ModelError> {
        Ok(self.forward_cached(spec, None)?.0)
    }

    /// Masked noisy spectrogram; the noisy phase is reused.
    pub fn forward(&self, spec: &Spectrogram<T>) -> Result<Spectrogram<T>, ModelError> {
        Ok(self.forward_with(spec, None)?.spectrogram)
    }

    /// [`Model::forward`] charging the executed MACs to `counter`.
    pub fn forward_with(
        &self,
        spec: &Spectrogram<T>,
        counter: Option<&MacCounter>,
    ) -> Result<ForwardOutput<T>, ModelError> {
        let (mask, _) = self.forward_cached(spec, counter)?;
        let frames = apply_mask(spec.frames(), &mask);
        Ok(ForwardOutput {
            spectrogram: Spectrogram::new(frames, *spec.config())?,
            mask,
        })
    }
}

pub(crate) fn apply_mask<T: Scalar>(x: &Array2<Complex<T>>, mask: &Array2<T>) -> Array2<Complex<T>> {
    let mut out = x.clone();
    out.zip_mut_with(mask, |c, &m| *c *= m);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioBuffer;
    use crate::dsp::StftEngine;

    fn small() -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            snn_neurons: 8,
            num_heads: 2,
            num_layers: 1,
            snn_steps: 4,
            ..ModelConfig::default()
        }
    }

    fn spec(len: usize) -> Spectrogram<f64> {
        let x: Vec<f64> = (0..len)
            .map(|i| (i as f64 * 0.05).sin() * 0.5 + (i as f64 * 0.31).cos() * 0.1)
            .collect();
        let buf = AudioBuffer::new(x, 16000).unwrap();
        StftEngine::new(Default::default()).unwrap().stft(&buf).unwrap()
    }

    #[test]
    fn shape_is_preserved_and_mask_in_range() {
        let m = Model::<f64>::new(small()).unwrap();
        let s = spec(4000);
        let out = m.forward_with(&s, None).unwrap();
        assert_eq!(out.spectrogram.frames().dim(), s.frames().dim());
        assert!(out.mask.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn forced_masks() {
        let mut m = Model::<f64>::new(small()).unwrap();
        let s = spec(3000);
        m.set_constant_mask_logit(40.0);
        assert_eq!(m.forward(&s).unwrap().frames(), s.frames());
        m.set_constant_mask_logit(-800.0);
        assert!(m.forward(&s).unwrap().frames().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn delay_shifts_mask_frames() {
        let s = spec(4000);
        let base = Model::<f64>::new(small()).unwrap();
        let delayed = Model {
            config: ModelConfig {
                delay_frames: 2,
                ..small()
            },
            params: base.params.clone(),
        };
        let m0 = base.mask(&s).unwrap();
        let m2 = delayed.mask(&s).unwrap();
        for t in 2..m0.nrows() {
            assert_eq!(m2.row(t), m0.row(t - 2));
        }
        assert_eq!(m2.row(0), m0.row(0));
    }

    #[test]
    fn from_parts_rejects_wrong_shapes() {
        let p = Params::<f64>::init(&small());
        let other = ModelConfig {
            num_layers: 2,
            ..small()
        };
        assert!(Model::from_parts(other, p.clone()).is_err());
        assert!(Model::from_parts(small(), p).is_ok());
    }
}
