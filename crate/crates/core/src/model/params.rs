use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub wq: Array2<T>,
    pub wk: Array2<T>,
    pub wv: Array2<T>,
    pub wo: Array2<T>,
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikingParams<T> {
    pub wq: Array2<T>,
    pub wk: Array2<T>,
    pub wv: Array2<T>,
    pub wo: Array2<T>,
}

/// Every learnable array of the model. Shapes are fixed by the config.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    /// `D × S`
    pub embed_w: Array2<T>,
    pub embed_b: Array1<T>,
    pub layers: Vec<LayerParams<T>>,
    pub spiking: Option<SpikingParams<T>>,
    /// `S × D`
    pub head_w: Array2<T>,
    pub head_b: Array1<T>,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize, std: f64) -> Array2<T> {
        let dist = Normal::new(0.0, std).expect("positive std");
        Array2::from_shape_fn((rows, cols), |_| T::lit(dist.sample(&mut self.rng)))
    }
}

impl<T: Scalar> Params<T> {
    /// Scaled-normal initialization from `cfg.seed`; the head starts near a
    /// constant mask `σ(head_bias_init)`.
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut g = Init {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        };
        let (d, s, h) = (cfg.input_dim, cfg.embed_dim, cfg.ffn_dim());
        let inv = |n: usize| 1.0 / (n.max(1) as f64).sqrt();
        let embed_w = g.matrix(d, s, inv(d));
        let layers = (0..cfg.num_layers)
            .map(|_| LayerParams {
                wq: g.matrix(s, s, inv(s)),
                wk: g.matrix(s, s, inv(s)),
                wv: g.matrix(s, s, inv(s)),
                wo: g.matrix(s, s, 0.5 * inv(s)),
                w1: g.matrix(s, h, (2.0 / s as f64).sqrt()),
                b1: Array1::zeros(h),
                w2: g.matrix(h, s, 0.5 * inv(h)),
                b2: Array1::zeros(s),
            })
            .collect();
        let spiking = cfg.spiking_attention.then(|| SpikingParams {
            wq: g.matrix(s, s, inv(s)),
            wk: g.matrix(s, s, inv(s)),
            wv: g.matrix(s, s, inv(s)),
            wo: g.matrix(s, s, 0.5 * inv(s)),
        });
        let head_w = g.matrix(s, d, 0.1 * inv(s));
        Self {
            embed_w,
            embed_b: Array1::zeros(s),
            layers,
            spiking,
            head_w,
            head_b: Array1::from_elem(d, T::lit(cfg.head_bias_init)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z2 = |a: &Array2<T>| Array2::zeros(a.raw_dim());
        let z1 = |a: &Array1<T>| Array1::zeros(a.raw_dim());
        Self {
            embed_w: z2(&self.embed_w),
            embed_b: z1(&self.embed_b),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    wq: z2(&l.wq),
                    wk: z2(&l.wk),
                    wv: z2(&l.wv),
                    wo: z2(&l.wo),
                    w1: z2(&l.w1),
                    b1: z1(&l.b1),
                    w2: z2(&l.w2),
                    b2: z1(&l.b2),
                })
                .collect(),
            spiking: self.spiking.as_ref().map(|sp| SpikingParams {
                wq: z2(&sp.wq),
                wk: z2(&sp.wk),
                wv: z2(&sp.wv),
                wo: z2(&sp.wo),
            }),
            head_w: z2(&self.head_w),
            head_b: z1(&self.head_b),
        }
    }

    /// Named views in a fixed order (the checkpoint order).
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out = vec![
            ("embed.w".to_string(), self.embed_w.view().into_dyn()),
            ("embed.b".to_string(), self.embed_b.view().into_dyn()),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (n, a) in [
                ("wq", &l.wq),
                ("wk", &l.wk),
                ("wv", &l.wv),
                ("wo", &l.wo),
                ("w1", &l.w1),
            ] {
                out.push((format!("layer{i}.{n}"), a.view().into_dyn()));
            }
            out.push((format!("layer{i}.b1"), l.b1.view().into_dyn()));
            out.push((format!("layer{i}.w2"), l.w2.view().into_dyn()));
            out.push((format!("layer{i}.b2"), l.b2.view().into_dyn()));
        }
        if let Some(sp) = &self.spiking {
            for (n, a) in [("wq", &sp.wq), ("wk", &sp.wk), ("wv", &sp.wv), ("wo", &sp.wo)] {
                out.push((format!("ssa.{n}"), a.view().into_dyn()));
            }
        }
        out.push(("head.w".to_string(), self.head_w.view().into_dyn()));
        out.push(("head.b".to_string(), self.head_b.view().into_dyn()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, T>)> {
        let mut out = vec![
            ("embed.w".to_string(), self.embed_w.view_mut().into_dyn()),
            ("embed.b".to_string(), self.embed_b.view_mut().into_dyn()),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            let LayerParams {
                wq,
                wk,
                wv,
                wo,
                w1,
                b1,
                w2,
                b2,
            } = l;
            for (n, a) in [("wq", wq), ("wk", wk), ("wv", wv), ("wo", wo), ("w1", w1)] {
                out.push((format!("layer{i}.{n}"), a.view_mut().into_dyn()));
            }
            out.push((format!("layer{i}.b1"), b1.view_mut().into_dyn()));
            out.push((format!("layer{i}.w2"), w2.view_mut().into_dyn()));
            out.push((format!("layer{i}.b2"), b2.view_mut().into_dyn()));
        }
        if let Some(sp) = &mut self.spiking {
            let SpikingParams { wq, wk, wv, wo } = sp;
            for (n, a) in [("wq", wq), ("wk", wk), ("wv", wv), ("wo", wo)] {
                out.push((format!("ssa.{n}"), a.view_mut().into_dyn()));
            }
        }
        out.push(("head.w".to_string(), self.head_w.view_mut().into_dyn()));
        out.push(("head.b".to_string(), self.head_b.view_mut().into_dyn()));
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, a)| a.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, a)| a.iter().all(|v| v.is_finite()))
    }

    /// `self += other`, element-wise over matching tensors.
    pub fn add_assign(&mut self, other: &Self) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a += &b;
        }
    }

    pub fn scale(&mut self, k: T) {
        for (_, mut a) in self.tensors_mut() {
            a.mapv_inplace(|v| v * k);
        }
    }

    /// Global L2 norm over every scalar.
    pub fn norm(&self) -> T {
        self.tensors()
            .iter()
            .map(|(_, a)| a.iter().map(|&v| v * v).sum::<T>())
            .sum::<T>()
            .sqrt()
    }

    /// Flat read of scalar `index` in [`Params::tensors`] order.
    pub fn get_flat(&self, index: usize) -> Option<T> {
        let mut rem = index;
        for (_, a) in self.tensors() {
            if rem < a.len() {
                return a.iter().nth(rem).copied();
            }
            rem -= a.len();
        }
        None
    }

    pub fn set_flat(&mut self, index: usize, value: T) -> bool {
        let mut rem = index;
        for (_, mut a) in self.tensors_mut() {
            if rem < a.len() {
                if let Some(v) = a.iter_mut().nth(rem) {
                    *v = value;
                    return true;
                }
            }
            rem = rem.saturating_sub(a.len());
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_shaped() {
        let cfg = ModelConfig::default();
        let a = Params::<f64>::init(&cfg);
        let b = Params::<f64>::init(&cfg);
        assert_eq!(a, b);
        assert_eq!(a.embed_w.dim(), (257, 64));
        assert_eq!(a.head_w.dim(), (64, 257));
        assert_eq!(a.layers.len(), 2);
        assert!(a.spiking.is_some());
        let other = Params::<f64>::init(&ModelConfig { seed: 1, ..cfg });
        assert_ne!(a.embed_w, other.embed_w);
    }

    #[test]
    fn flat_access_round_trips() {
        let cfg = ModelConfig {
            num_layers: 1,
            ..ModelConfig::default()
        };
        let mut p = Params::<f64>::init(&cfg);
        let n = p.num_scalars();
        for idx in [0, 1, n / 2, n - 1] {
            assert!(p.set_flat(idx, 123.0));
            assert_eq!(p.get_flat(idx), Some(123.0));
        }
        assert_eq!(p.get_flat(n), None);
        assert!(!p.set_flat(n, 0.0));
    }

    #[test]
    fn names_are_unique() {
        let p = Params::<f32>::init(&ModelConfig::default());
        let mut names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        let len = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), len);
    }
}
