//! Scale-invariant source-to-noise ratio.
//!
//! Both the estimate and the reference are mean-centered before projecting
//! the estimate onto the reference, so the value is invariant to amplitude
//! scaling and constant offsets of either signal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: estimate {0}, reference {1}")]
    LengthMismatch(usize, usize),
    #[error("reference has zero energy after mean removal")]
    ZeroReference,
    #[error("empty signal")]
    Empty,
}

/// A finite dB value, or a residual at rounding level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiSnrValue {
    Db(f64),
    Perfect,
}

impl SiSnrValue {
    pub fn db(self) -> Option<f64> {
        match self {
            SiSnrValue::Db(v) => Some(v),
            SiSnrValue::Perfect => None,
        }
    }

    pub fn is_perfect(self) -> bool {
        matches!(self, SiSnrValue::Perfect)
    }
}

impl std::fmt::Display for SiSnrValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SiSnrValue::Db(v) => write!(f, "{v:.3}"),
            SiSnrValue::Perfect => f.write_str("perfect"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiSnrResult<T> {
    pub value: SiSnrValue,
    pub s_target_energy: T,
    pub e_noise_energy: T,
}

fn centered<T: Scalar>(x: &[T]) -> Vec<T> {
    let mean = x.iter().copied().sum::<T>() / T::from_usize_lossy(x.len());
    x.iter().map(|&v| v - mean).collect()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

struct Projection<T> {
    est: Vec<T>,
    reference: Vec<T>,
    inner: T,
    ref_energy: T,
    est_energy: T,
}

fn project<T: Scalar>(estimate: &[T], reference: &[T]) -> Result<Projection<T>, MetricError> {
    if estimate.len() != reference.len() {
        return Err(MetricError::LengthMismatch(estimate.len(), reference.len()));
    }
    if estimate.is_empty() {
        return Err(MetricError::Empty);
    }
    let est = centered(estimate);
    let reference = centered(reference);
    let ref_energy = dot(&reference, &reference);
    if ref_energy <= T::zero() {
        return Err(MetricError::ZeroReference);
    }
    Ok(Projection {
        inner: dot(&est, &reference),
        est_energy: dot(&est, &est),
        est,
        reference,
        ref_energy,
    })
}

/// Residual energy below this fraction of the estimate's energy is rounding.
fn perfect_floor<T: Scalar>(n: usize, est_energy: T) -> T {
    let eps = T::epsilon();
    est_energy * eps * eps * T::lit(16.0) * T::from_usize_lossy(n)
}

/// `10·log10(‖s_target‖² / ‖e_noise‖²)` with `s_target = (⟨ŝ,s⟩/‖s‖²)·s`.
pub fn si_snr<T: Scalar>(estimate: &[T], reference: &[T]) -> Result<SiSnrResult<T>, MetricError> {
    let p = project(estimate, reference)?;
    let alpha = p.inner / p.ref_energy;
    let mut target_energy = T::zero();
    let mut noise_energy = T::zero();
    for (&e, &s) in p.est.iter().zip(&p.reference) {
        let t = alpha * s;
        target_energy += t * t;
        noise_energy += (e - t) * (e - t);
    }
    let value = if noise_energy <= perfect_floor(p.est.len(), p.est_energy) {
        SiSnrValue::Perfect
    } else {
        SiSnrValue::Db(10.0 * (target_energy.as_f64() / noise_energy.as_f64()).log10())
    };
    Ok(SiSnrResult {
        value,
        s_target_energy: target_energy,
        e_noise_energy: noise_energy,
    })
}

/// SI-SNR in dB and its gradient with respect to the (uncentered) estimate.
///
/// With `a = ⟨e,s⟩²/‖s‖²` and `b = ‖e‖² − a`, the value is
/// `10/ln10 · (ln a − ln b)`; the gradient is projected onto zero-mean signals.
pub fn si_snr_with_grad<T: Scalar>(estimate: &[T], reference: &[T]) -> Result<(T, Vec<T>), MetricError> {
    let p = project(estimate, reference)?;
    let a = p.inner * p.inner / p.ref_energy;
    let floor = perfect_floor(p.est.len(), p.est_energy);
    let b = (p.est_energy - a).max(floor).max(T::min_positive_value());
    let a = a.max(T::min_positive_value());
    let k = T::lit(10.0 / std::f64::consts::LN_10);
    let value = k * (a.ln() - b.ln());
    let two = T::lit(2.0);
    // da/de = 2⟨e,s⟩ s/‖s‖², db/de = 2e − da/de
    let da_scale = two * p.inner / p.ref_energy;
    let mut grad: Vec<T> = p
        .est
        .iter()
        .zip(&p.reference)
        .map(|(&e, &s)| {
            let da = da_scale * s;
            let db = two * e - da;
            k * (da / a - db / b)
        })
        .collect();
    let mean = grad.iter().copied().sum::<T>() / T::from_usize_lossy(grad.len());
    for g in &mut grad {
        *g -= mean;
    }
    Ok((value, grad))
}

/// Aggregate over a batch; perfect results are counted, not averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiSnrSummary {
    pub count: usize,
    pub perfect: usize,
    pub mean_db: Option<f64>,
    pub median_db: Option<f64>,
}

pub fn summarize(values: &[SiSnrValue]) -> SiSnrSummary {
    let mut finite: Vec<f64> = values.iter().filter_map(|v| v.db()).collect();
    finite.sort_by(|a, b| a.partial_cmp(b).expect("finite dB"));
    let n = finite.len();
    let median = match n {
        0 => None,
        _ if n % 2 == 1 => Some(finite[n / 2]),
        _ => Some(0.5 * (finite[n / 2 - 1] + finite[n / 2])),
    };
    SiSnrSummary {
        count: values.len(),
        perfect: values.len() - n,
        mean_db: (n > 0).then(|| finite.iter().sum::<f64>() / n as f64),
        median_db: median,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example_is_zero_db() {
        let r = si_snr(&[2.0, 0.0, 0.0, -2.0], &[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(r.s_target_energy, 4.0);
        assert_eq!(r.e_noise_energy, 4.0);
        assert_eq!(r.value, SiSnrValue::Db(0.0));
    }

    #[test]
    fn collinear_is_perfect() {
        let s = [0.3, -1.2, 0.7, 0.25, -0.05];
        for c in [-3.0, 0.001, 1.0, 17.0] {
            let est: Vec<f64> = s.iter().map(|v| c * v).collect();
            assert!(si_snr(&est, &s).unwrap().value.is_perfect(), "c={c}");
        }
    }

    #[test]
    fn errors() {
        assert_eq!(si_snr(&[1.0], &[1.0, 2.0]), Err(MetricError::LengthMismatch(1, 2)));
        assert_eq!(si_snr(&[1.0, 2.0], &[3.0, 3.0]), Err(MetricError::ZeroReference));
        assert_eq!(si_snr::<f64>(&[], &[]), Err(MetricError::Empty));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let s: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let est: Vec<f64> = (0..64)
            .map(|i| (i as f64 * 0.37).sin() + 0.3 * (i as f64 * 1.9).cos())
            .collect();
        let (v, g) = si_snr_with_grad(&est, &s).unwrap();
        assert!((v - si_snr(&est, &s).unwrap().value.db().unwrap()).abs() < 1e-10);
        let h = 1e-6;
        for i in [0, 5, 31, 63] {
            let mut up = est.clone();
            let mut dn = est.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (si_snr_with_grad(&up, &s).unwrap().0 - si_snr_with_grad(&dn, &s).unwrap().0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * fd.abs().max(1.0), "i={i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn summary_excludes_perfect() {
        let s = summarize(&[
            SiSnrValue::Db(1.0),
            SiSnrValue::Perfect,
            SiSnrValue::Db(3.0),
            SiSnrValue::Db(8.0),
        ]);
        assert_eq!(s.count, 4);
        assert_eq!(s.perfect, 1);
        assert_eq!(s.mean_db, Some(4.0));
        assert_eq!(s.median_db, Some(3.0));
        let all = summarize(&[SiSnrValue::Perfect]);
        assert_eq!((all.mean_db, all.median_db), (None, None));
    }
}
