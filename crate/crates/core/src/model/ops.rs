use ndarray::{Array1, Array2, ArrayView2, Axis, Slice};

use super::counter::{MacCounter, MacTerm};
use super::{ModelConfig, ModelError, Params};
use crate::Scalar;

/// `a · b`, charging `m·k·n` MACs to `term`.
pub(crate) fn matmul<T: Scalar>(
    a: &ArrayView2<'_, T>,
    b: &ArrayView2<'_, T>,
    counter: Option<&MacCounter>,
    term: MacTerm,
) -> Array2<T> {
    if let Some(c) = counter {
        c.add(term, (a.nrows() * a.ncols() * b.ncols()) as u64);
    }
    a.dot(b)
}

pub(crate) fn check_shape<T>(
    op: &'static str,
    a: &ArrayView2<'_, T>,
    expected: (usize, usize),
) -> Result<(), ModelError> {
    if a.dim() != expected {
        return Err(ModelError::Shape {
            op,
            expected,
            got: a.dim(),
        });
    }
    Ok(())
}

pub(crate) fn check_finite<T: Scalar>(op: &'static str, a: &ArrayView2<'_, T>) -> Result<(), ModelError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite(op))
    }
}

pub(crate) fn column_sums<T: Scalar>(a: &Array2<T>) -> Array1<T> {
    a.sum_axis(Axis(0))
}

/// `PE[p, 2k] = sin(p / 10000^(2k/S))`, `PE[p, 2k+1] = cos(same angle)`.
pub fn positional_encoding<T: Scalar>(frames: usize, dim: usize) -> Array2<T> {
    Array2::from_shape_fn((frames, dim), |(p, c)| {
        let pair = (c / 2) * 2;
        let angle = p as f64 / 10000f64.powf(pair as f64 / dim as f64);
        T::lit(if c % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// Row-wise softmax; every row sums to one.
pub fn softmax_rows<T: Scalar>(logits: &Array2<T>) -> Result<Array2<T>, ModelError> {
    check_finite("softmax logits", &logits.view())?;
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    Ok(out)
}

/// Gradient of the logits given the softmax output `p` and its gradient.
pub(crate) fn softmax_backward<T: Scalar>(p: &Array2<T>, dp: &Array2<T>) -> Array2<T> {
    let mut da = p * dp;
    let dots = da.sum_axis(Axis(1));
    for ((mut row, &d), prow) in da.rows_mut().into_iter().zip(&dots).zip(p.rows()) {
        row.zip_mut_with(&prow, |g, &pv| *g -= pv * d);
    }
    da
}

/// `frames · W_e + b_e (+ PE)`, mapping `F × D` features to `F × S`.
pub fn embed<T: Scalar>(
    frames: &Array2<T>,
    params: &Params<T>,
    cfg: &ModelConfig,
    counter: Option<&MacCounter>,
) -> Result<Array2<T>, ModelError> {
    check_shape("embed", &frames.view(), (frames.nrows(), cfg.input_dim))?;
    check_shape("embed weights", &params.embed_w.view(), (cfg.input_dim, cfg.embed_dim))?;
    let mut x = matmul(&frames.view(), &params.embed_w.view(), counter, MacTerm::Embedding);
    x += &params.embed_b;
    if cfg.positional_encoding {
        x += &positional_encoding::<T>(frames.nrows(), cfg.embed_dim);
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct AttentionOutput<T> {
    /// Concatenated heads after the output projection, `F × S`.
    pub output: Array2<T>,
    /// Concatenated heads before the output projection.
    pub context: Array2<T>,
    /// Per-head attention weights, `F × F` each.
    pub weights: Vec<Array2<T>>,
}

pub(crate) fn head_cols(h: usize, dh: usize) -> Slice {
    Slice::from(h * dh..(h + 1) * dh)
}

/// Per head `softmax(Q_h K_hᵀ / √d_h) V_h`; heads concatenated, then `· W_o`.
pub fn attention<T: Scalar>(
    q: &Array2<T>,
    k: &Array2<T>,
    v: &Array2<T>,
    heads: usize,
    wo: &Array2<T>,
    counter: Option<&MacCounter>,
) -> Result<AttentionOutput<T>, ModelError> {
    let (f, width) = q.dim();
    if heads == 0 || width % heads != 0 {
        return Err(ModelError::InvalidConfig(format!(
            "width {width} not divisible into {heads} heads"
        )));
    }
    check_shape("attention keys", &k.view(), (k.nrows(), width))?;
    check_shape("attention values", &v.view(), (k.nrows(), width))?;
    check_shape("attention projection", &wo.view(), (width, wo.ncols()))?;
    let dh = width / heads;
    let scale = T::one() / T::from_usize_lossy(dh).sqrt();
    let mut context = Array2::zeros((f, width));
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.slice_axis(Axis(1), head_cols(h, dh));
        let kh = k.slice_axis(Axis(1), head_cols(h, dh));
        let vh = v.slice_axis(Axis(1), head_cols(h, dh));
        let logits = matmul(&qh, &kh.t(), counter, MacTerm::AttentionScores) * scale;
        let p = softmax_rows(&logits)?;
        let ctx = matmul(&p.view(), &vh, counter, MacTerm::AttentionScores);
        context.slice_axis_mut(Axis(1), head_cols(h, dh)).assign(&ctx);
        weights.push(p);
    }
    let output = matmul(&context.view(), &wo.view(), counter, MacTerm::AttentionProjection);
    Ok(AttentionOutput {
        output,
        context,
        weights,
    })
}

/// Gradients of `q`, `k`, `v` from the gradient of the concatenated context.
pub(crate) fn attention_backward<T: Scalar>(
    q: &Array2<T>,
    k: &Array2<T>,
    v: &Array2<T>,
    weights: &[Array2<T>],
    dcontext: &Array2<T>,
) -> (Array2<T>, Array2<T>, Array2<T>) {
    let heads = weights.len();
    let dh = q.ncols() / heads;
    let scale = T::one() / T::from_usize_lossy(dh).sqrt();
    let mut dq = Array2::zeros(q.raw_dim());
    let mut dk = Array2::zeros(k.raw_dim());
    let mut dv = Array2::zeros(v.raw_dim());
    for (h, p) in weights.iter().enumerate() {
        let cols = head_cols(h, dh);
        let dctx = dcontext.slice_axis(Axis(1), cols);
        let dp = dctx.dot(&v.slice_axis(Axis(1), cols).t());
        dv.slice_axis_mut(Axis(1), cols).assign(&p.t().dot(&dctx));
        let da = softmax_backward(p, &dp) * scale;
        dq.slice_axis_mut(Axis(1), cols)
            .assign(&da.dot(&k.slice_axis(Axis(1), cols)));
        dk.slice_axis_mut(Axis(1), cols)
            .assign(&da.t().dot(&q.slice_axis(Axis(1), cols)));
    }
    (dq, dk, dv)
}
