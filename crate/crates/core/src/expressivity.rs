//! A tri-linear function `f` computed three ways: its piecewise definition,
//! a sum of two ReLUs, a two-hidden-unit ReLU network, and a single spiking
//! output neuron driven by two timed input spikes.
//!
//! ```text
//! f(x) = x            for x ≤ −θ
//!      = (x − θ)/2    for −θ < x < θ
//!      = 0            for x ≥ θ
//!      = −½·relu(−x − θ) − ½·relu(−x + θ)
//! ```
//!
//! Spiking construction. A reference input fires at `0` and reaches the
//! output after delay `R`; the value input fires at `x + R` with no delay,
//! so the two arrive at `R` and `R + x`. Each arrival adds a ramp of slope
//! `w` to the output potential, which fires on reaching `θ_out = θ·w`:
//!
//! * reference alone (`x ≥ θ`): fires at `R + θ`,
//! * both inputs (`|x| < θ`): fires at `R + (x + θ)/2`,
//! * value alone (`x ≤ −θ`): fires at `R + x + θ`.
//!
//! Decoding `t_out − (R + θ)` reproduces `f`. Input spikes sit on the
//! simulation grid `dt`; the output crossing is located by linear
//! interpolation inside the step where it occurs, which is exact because the
//! potential is piecewise linear with kinks only at grid points. The only
//! error left is input-time quantization, so `|f̂ − f| ≤ dt/2`.

use serde::Serialize;
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum ExpressivityError {
    #[error("theta must be positive, got {0}")]
    InvalidTheta(f64),
    #[error("time step must be positive, got {0}")]
    InvalidDt(f64),
    #[error("x = {x} outside the coding range [-{range}, {range}]")]
    OutOfRange { x: f64, range: f64 },
    #[error("no output spike within the {horizon} s horizon")]
    NoOutputSpike { horizon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriLinearFn<T> {
    pub theta: T,
}

impl<T: Scalar> TriLinearFn<T> {
    pub fn new(theta: T) -> Result<Self, ExpressivityError> {
        if !(theta > T::zero()) || !theta.is_finite() {
            return Err(ExpressivityError::InvalidTheta(theta.as_f64()));
        }
        Ok(Self { theta })
    }
}

fn relu<T: Scalar>(x: T) -> T {
    x.max(T::zero())
}

pub fn eval_piecewise<T: Scalar>(x: T, f: &TriLinearFn<T>) -> T {
    let th = f.theta;
    if x <= -th {
        x
    } else if x < th {
        (x - th) / T::lit(2.0)
    } else {
        T::zero()
    }
}

pub fn eval_relu_form<T: Scalar>(x: T, f: &TriLinearFn<T>) -> T {
    let half = T::lit(0.5);
    -half * relu(-x - f.theta) - half * relu(-x + f.theta)
}

/// `out_w · relu(hidden_w·x + hidden_b) + out_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReluNet2<T> {
    pub hidden_w: [T; 2],
    pub hidden_b: [T; 2],
    pub out_w: [T; 2],
    pub out_b: T,
}

impl<T: Scalar> ReluNet2<T> {
    /// Weights read off the two-ReLU form of `f`.
    pub fn from_trilinear(f: &TriLinearFn<T>) -> Self {
        let half = T::lit(0.5);
        Self {
            hidden_w: [-T::one(), -T::one()],
            hidden_b: [-f.theta, f.theta],
            out_w: [-half, -half],
            out_b: T::zero(),
        }
    }

    pub fn zeros() -> Self {
        Self {
            hidden_w: [T::zero(); 2],
            hidden_b: [T::zero(); 2],
            out_w: [T::zero(); 2],
            out_b: T::zero(),
        }
    }
}

pub fn eval_relu_net<T: Scalar>(x: T, net: &ReluNet2<T>) -> T {
    (0..2).fold(net.out_b, |acc, i| {
        acc + net.out_w[i] * relu(net.hidden_w[i] * x + net.hidden_b[i])
    })
}

/// Two input neurons (value, reference) and one ramp-integrating output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpikeRealization<T> {
    /// Axonal delays of the value and reference inputs.
    pub delays: [T; 2],
    pub weights: [T; 2],
    pub threshold: T,
    pub dt: T,
    /// Values are accepted on `[−range, range]`.
    pub range: T,
    /// Subtracted from the output spike time when decoding.
    pub decode_offset: T,
}

impl<T: Scalar> SpikeRealization<T> {
    /// Construction for `f` with coding range `5θ`.
    pub fn for_function(f: &TriLinearFn<T>, dt: T) -> Result<Self, ExpressivityError> {
        Self::with_range(f, dt, T::lit(5.0) * f.theta)
    }

    pub fn with_range(f: &TriLinearFn<T>, dt: T, range: T) -> Result<Self, ExpressivityError> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(ExpressivityError::InvalidDt(dt.as_f64()));
        }
        let w = T::one();
        Ok(Self {
            delays: [T::zero(), range],
            weights: [w, w],
            threshold: f.theta * w,
            dt,
            range,
            decode_offset: range + f.theta,
        })
    }

    /// Simulated time after which a missing output spike is an error.
    pub fn horizon(&self) -> T {
        self.decode_offset + T::lit(4.0) * self.dt
    }

    fn grid_step(&self, t: T) -> i64 {
        (t / self.dt).round().to_i64().unwrap_or(i64::MAX)
    }
}

/// Encode `x` as spike times, simulate the output neuron on the `dt` grid and
/// decode its first spike time.
pub fn eval_spike_realization<T: Scalar>(x: T, r: &SpikeRealization<T>) -> Result<T, ExpressivityError> {
    if !(x.abs() <= r.range) {
        return Err(ExpressivityError::OutOfRange {
            x: x.as_f64(),
            range: r.range.as_f64(),
        });
    }
    let emit = [x + r.range, T::zero()];
    let arrivals: [i64; 2] = [r.grid_step(emit[0] + r.delays[0]), r.grid_step(emit[1] + r.delays[1])];
    let horizon = r.grid_step(r.horizon());
    let potential = |n: i64| -> T {
        let t = T::lit(n as f64) * r.dt;
        arrivals
            .iter()
            .zip(&r.weights)
            .filter(|(&a, _)| a <= n)
            .fold(T::zero(), |acc, (&a, &w)| acc + w * (t - T::lit(a as f64) * r.dt))
    };
    let mut prev = potential(0);
    if prev >= r.threshold {
        return Ok(-r.decode_offset);
    }
    for n in 1..=horizon {
        let p = potential(n);
        if p >= r.threshold {
            let frac = (r.threshold - prev) / (p - prev);
            let t_out = (T::lit((n - 1) as f64) + frac) * r.dt;
            return Ok(t_out - r.decode_offset);
        }
        prev = p;
    }
    Err(ExpressivityError::NoOutputSpike {
        horizon: r.horizon().as_f64(),
    })
}

/// `points` evenly spaced samples over `[−5θ, 5θ]`, endpoints included.
pub fn grid<T: Scalar>(f: &TriLinearFn<T>, points: usize) -> Vec<T> {
    let lo = T::lit(-5.0) * f.theta;
    let span = T::lit(10.0) * f.theta;
    match points {
        0 => Vec::new(),
        1 => vec![T::zero()],
        _ => (0..points)
            .map(|k| lo + span * T::from_usize_lossy(k) / T::from_usize_lossy(points - 1))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow<T> {
    pub x: T,
    pub exact: T,
    pub relu: T,
    pub snn: T,
}

pub fn grid_table<T: Scalar>(f: &TriLinearFn<T>, dt: T, points: usize) -> Result<Vec<GridRow<T>>, ExpressivityError> {
    let net = ReluNet2::from_trilinear(f);
    let snn = SpikeRealization::for_function(f, dt)?;
    grid(f, points)
        .into_iter()
        .map(|x| {
            Ok(GridRow {
                x,
                exact: eval_piecewise(x, f),
                relu: eval_relu_net(x, &net),
                snn: eval_spike_realization(x, &snn)?,
            })
        })
        .collect()
}

/// Max |f̂_snn − f| over `xs`.
pub fn spike_max_error<T: Scalar>(f: &TriLinearFn<T>, dt: T, xs: &[T]) -> Result<T, ExpressivityError> {
    let r = SpikeRealization::for_function(f, dt)?;
    xs.iter().try_fold(T::zero(), |m, &x| {
        let e = (eval_spike_realization(x, &r)? - eval_piecewise(x, f)).abs();
        Ok(m.max(e))
    })
}
