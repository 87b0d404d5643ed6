//! Causal attention kernels.
//!
//! Three routes compute the same duration-weighted attention output for a
//! stepwise-constant sentence:
//!
//! 1. [`stepwise_cct_attention`] — the closed form: the weight on key `k` for
//!    query `t` is `exp(q_t . k_k / sqrt(d)) * d_k / Z_t`.
//! 2. [`masked_attention_path`] — a standard attention loop where the duration
//!    enters as an additive `log d_k` mask term (or a multiplicative
//!    post-exponential coefficient).
//! 3. [`continuous_attention_quadrature`] — midpoint quadrature of the
//!    underlying integral, kept in double precision as the oracle.
//!
//! At unit durations all of them reduce to [`discrete_causal_attention`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rope::{rope_rotate, RotaryConfig};
use crate::sequence::StepwiseSentence;

/// How durations enter the attention logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DurationBiasMode {
    /// `log d_k` added to the logit before the softmax.
    #[default]
    AdditiveLog,
    /// `d_k` multiplied onto the exponentiated logit.
    Multiplicative,
}

/// Per-layer attention projections. `w_q`, `w_k`, `w_v` stack all heads as
/// `(H * d_head) x d_model`; `w_o` maps the concatenated heads back to
/// `d_model`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_q: Array2<f32>,
    pub w_k: Array2<f32>,
    pub w_v: Array2<f32>,
    pub w_o: Array2<f32>,
    pub head_count: usize,
    pub head_dim: usize,
}

impl AttentionParams {
    pub fn new(
        w_q: Array2<f32>,
        w_k: Array2<f32>,
        w_v: Array2<f32>,
        w_o: Array2<f32>,
        head_count: usize,
        head_dim: usize,
    ) -> Result<Self> {
        if head_count == 0 || head_dim == 0 {
            return Err(Error::Invalid("head_count and head_dim must be positive".into()));
        }
        let stacked = head_count * head_dim;
        let d_model = w_q.ncols();
        for (name, w) in [("w_q", &w_q), ("w_k", &w_k), ("w_v", &w_v)] {
            if w.dim() != (stacked, d_model) {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has shape {:?}, expected ({stacked}, {d_model})",
                    w.dim()
                )));
            }
        }
        if w_o.ncols() != stacked {
            return Err(Error::DimensionMismatch(format!(
                "w_o has shape {:?}, expected (_, {stacked})",
                w_o.dim()
            )));
        }
        for (name, w) in [("w_q", &w_q), ("w_k", &w_k), ("w_v", &w_v), ("w_o", &w_o)] {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("attention matrix {name}")));
            }
        }
        Ok(Self {
            w_q,
            w_k,
            w_v,
            w_o,
            head_count,
            head_dim,
        })
    }

    pub fn d_model(&self) -> usize {
        self.w_q.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w_o.nrows()
    }

    fn head_cols(&self, head: usize) -> std::ops::Range<usize> {
        head * self.head_dim..(head + 1) * self.head_dim
    }
}

fn check_finite(x: &ArrayView2<f32>, what: &str) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what.into()));
    }
    Ok(())
}

fn project(x: &ArrayView2<f32>, w: &Array2<f32>) -> Array2<f32> {
    x.dot(&w.t())
}

fn dot_f32(a: ArrayView1<f32>, b: ArrayView1<f32>) -> f32 {
    a.dot(&b)
}

/// Shared per-query attention loop. `durations` of `None` means the plain
/// discrete kernel; `positions` (with a rotary config) rotates q and k rows
/// before the dot products.
fn causal_attention_kernel(
    x: &ArrayView2<f32>,
    durations: Option<&[f64]>,
    positions: Option<(&[f64], &RotaryConfig)>,
    params: &AttentionParams,
    bias: DurationBiasMode,
) -> Result<Array2<f32>> {
    check_finite(x, "attention input")?;
    let t_len = x.nrows();
    if t_len == 0 {
        return Err(Error::Empty("attention input"));
    }
    if x.ncols() != params.d_model() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} columns, params expect {}",
            x.ncols(),
            params.d_model()
        )));
    }
    if let Some(d) = durations {
        if d.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidDuration(
                d.iter().copied().find(|&v| !(v > 0.0)).unwrap_or(0.0),
            ));
        }
    }

    let mut q = project(x, &params.w_q);
    let mut k = project(x, &params.w_k);
    let v = project(x, &params.w_v);
    if let Some((pos, cfg)) = positions {
        q = rope_per_head(&q, pos, cfg, params);
        k = rope_per_head(&k, pos, cfg, params);
    }

    let scale = 1.0 / (params.head_dim as f32).sqrt();
    let mut concat = Array2::<f32>::zeros((t_len, params.head_count * params.head_dim));
    let mut logits = vec![0.0f64; t_len];
    for head in 0..params.head_count {
        let cols = params.head_cols(head);
        let qh = q.slice(ndarray::s![.., cols.clone()]);
        let kh = k.slice(ndarray::s![.., cols.clone()]);
        let vh = v.slice(ndarray::s![.., cols.clone()]);
        for t in 0..t_len {
            let keys = t + 1;
            for s in 0..keys {
                logits[s] = (dot_f32(qh.row(t), kh.row(s)) * scale) as f64;
            }
            let weights = normalized_weights(&logits[..keys], durations, bias);
            let mut acc = vec![0.0f64; params.head_dim];
            for s in 0..keys {
                let w = weights[s];
                for (a, &vv) in acc.iter_mut().zip(vh.row(s)) {
                    *a += w * vv as f64;
                }
            }
            for (j, a) in acc.into_iter().enumerate() {
                concat[[t, cols.start + j]] = a as f32;
            }
        }
    }
    Ok(concat.dot(&params.w_o.t()))
}

/// Stable softmax over the causal prefix with the duration bias folded in.
/// The normalizer is accumulated in double precision and never formed as a
/// raw exponential sum.
fn normalized_weights(
    logits: &[f64],
    durations: Option<&[f64]>,
    bias: DurationBiasMode,
) -> Vec<f64> {
    let mut weights = vec![0.0f64; logits.len()];
    match (durations, bias) {
        (None, _) => {
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (w, &l) in weights.iter_mut().zip(logits) {
                *w = (l - m).exp();
                z += *w;
            }
            for w in &mut weights {
                *w /= z;
            }
        }
        (Some(d), DurationBiasMode::AdditiveLog) => {
            let m = logits
                .iter()
                .zip(d)
                .map(|(&l, &dk)| l + dk.ln())
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for ((w, &l), &dk) in weights.iter_mut().zip(logits).zip(d) {
                *w = (l + dk.ln() - m).exp();
                z += *w;
            }
            for w in &mut weights {
                *w /= z;
            }
        }
        (Some(d), DurationBiasMode::Multiplicative) => {
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for ((w, &l), &dk) in weights.iter_mut().zip(logits).zip(d) {
                *w = (l - m).exp() * dk;
                z += *w;
            }
            for w in &mut weights {
                *w /= z;
            }
        }
    }
    weights
}

fn rope_per_head(
    projected: &Array2<f32>,
    positions: &[f64],
    cfg: &RotaryConfig,
    params: &AttentionParams,
) -> Array2<f32> {
    let mut out = projected.clone();
    for head in 0..params.head_count {
        let cols = params.head_cols(head);
        let block = out.slice(ndarray::s![.., cols.clone()]).to_owned();
        let rotated = rope_rotate(&block, positions, cfg);
        out.slice_mut(ndarray::s![.., cols]).assign(&rotated);
    }
    out
}

/// Classical causal attention over a `T x d_model` matrix: row `t` attends to
/// rows `s <= t` with softmax weights, heads concatenated through `w_o`.
pub fn discrete_causal_attention(x: &Array2<f32>, params: &AttentionParams) -> Result<Array2<f32>> {
    causal_attention_kernel(&x.view(), None, None, params, DurationBiasMode::AdditiveLog)
}

/// Discrete attention with rotary rotation at integer positions `0..T`.
pub fn discrete_causal_attention_rotary(
    x: &Array2<f32>,
    params: &AttentionParams,
    rotary: Option<&RotaryConfig>,
) -> Result<Array2<f32>> {
    let positions: Vec<f64> = (0..x.nrows()).map(|i| i as f64).collect();
    causal_attention_kernel(
        &x.view(),
        None,
        rotary.map(|cfg| (positions.as_slice(), cfg)),
        params,
        DurationBiasMode::AdditiveLog,
    )
}

/// Closed-form duration-weighted attention: one output row per span, query
/// taken at the span's own index, keys over spans `0..=t` weighted by their
/// durations. Depends on durations only, never on absolute time.
pub fn stepwise_cct_attention(
    sentence: &StepwiseSentence,
    params: &AttentionParams,
    bias: DurationBiasMode,
) -> Result<Array2<f32>> {
    let x = sentence.embedding_matrix();
    let durations = sentence.durations();
    causal_attention_kernel(&x.view(), Some(&durations), None, params, bias)
}

/// Duration-weighted attention with rotary rotations at the spans' cumulative
/// real-valued positions.
pub fn stepwise_cct_attention_rotary(
    sentence: &StepwiseSentence,
    params: &AttentionParams,
    bias: DurationBiasMode,
    rotary: Option<&RotaryConfig>,
) -> Result<Array2<f32>> {
    let x = sentence.embedding_matrix();
    let durations = sentence.durations();
    let positions = sentence.positions();
    causal_attention_kernel(
        &x.view(),
        Some(&durations),
        rotary.map(|cfg| (positions.as_slice(), cfg)),
        params,
        bias,
    )
}

/// Duration-weighted attention over an explicit activation matrix. Used by
/// deeper layers, where the activations are no longer raw embeddings but the
/// durations and positions still belong to the input sentence.
pub fn duration_weighted_attention(
    x: &Array2<f32>,
    durations: &[f64],
    rotary_positions: Option<(&[f64], &RotaryConfig)>,
    params: &AttentionParams,
    bias: DurationBiasMode,
) -> Result<Array2<f32>> {
    causal_attention_kernel(&x.view(), Some(durations), rotary_positions, params, bias)
}

/// Matrix-style attention with an explicit duration mask: scores are built as
/// a full `T x T` matrix, masked with `log d_k` below the diagonal and `-inf`
/// above it (additive mode), then row-softmaxed and multiplied with `V`.
pub fn masked_attention_path(
    sentence: &StepwiseSentence,
    params: &AttentionParams,
    bias: DurationBiasMode,
) -> Result<Array2<f32>> {
    let x = sentence.embedding_matrix();
    check_finite(&x.view(), "attention input")?;
    let durations = sentence.durations();
    if durations.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidDuration(
            durations.iter().copied().find(|&d| !(d > 0.0)).unwrap_or(0.0),
        ));
    }
    let t_len = x.nrows();
    let q = project(&x.view(), &params.w_q);
    let k = project(&x.view(), &params.w_k);
    let v = project(&x.view(), &params.w_v);
    let scale = 1.0 / (params.head_dim as f32).sqrt();

    let mut concat = Array2::<f32>::zeros((t_len, params.head_count * params.head_dim));
    for head in 0..params.head_count {
        let cols = params.head_cols(head);
        let qh = q.slice(ndarray::s![.., cols.clone()]);
        let kh = k.slice(ndarray::s![.., cols.clone()]);
        let vh = v.slice(ndarray::s![.., cols.clone()]);

        // Full score matrix with the causal/duration mask applied.
        let mut scores = Array2::<f64>::from_elem((t_len, t_len), f64::NEG_INFINITY);
        for t in 0..t_len {
            for s in 0..=t {
                let mut l = (dot_f32(qh.row(t), kh.row(s)) * scale) as f64;
                if bias == DurationBiasMode::AdditiveLog {
                    l += durations[s].ln();
                }
                scores[[t, s]] = l;
            }
        }
        // Row softmax; in multiplicative mode the duration multiplies the
        // exponentiated score instead.
        let mut probs = Array2::<f64>::zeros((t_len, t_len));
        for t in 0..t_len {
            let row = scores.row(t);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for s in 0..t_len {
                if scores[[t, s]] == f64::NEG_INFINITY {
                    continue;
                }
                let mut e = (scores[[t, s]] - m).exp();
                if bias == DurationBiasMode::Multiplicative {
                    e *= durations[s];
                }
                probs[[t, s]] = e;
                z += e;
            }
            for s in 0..t_len {
                probs[[t, s]] /= z;
            }
        }
        for t in 0..t_len {
            for j in 0..params.head_dim {
                let mut acc = 0.0f64;
                for s in 0..t_len {
                    acc += probs[[t, s]] * vh[[s, j]] as f64;
                }
                concat[[t, cols.start + j]] = acc as f32;
            }
        }
    }
    Ok(concat.dot(&params.w_o.t()))
}

/// Normalized attention weight rows (one per query span). Exposed for the
/// softmax-row and duration-monotonicity checks.
pub fn attention_weight_rows(
    sentence: &StepwiseSentence,
    params: &AttentionParams,
    bias: DurationBiasMode,
    head: usize,
) -> Result<Vec<Vec<f64>>> {
    let x = sentence.embedding_matrix();
    check_finite(&x.view(), "attention input")?;
    let durations = sentence.durations();
    let q = project(&x.view(), &params.w_q);
    let k = project(&x.view(), &params.w_k);
    let scale = 1.0 / (params.head_dim as f32).sqrt();
    let cols = params.head_cols(head);
    let qh = q.slice(ndarray::s![.., cols.clone()]);
    let kh = k.slice(ndarray::s![.., cols]);
    let mut rows = Vec::with_capacity(sentence.len());
    let mut logits = vec![0.0f64; sentence.len()];
    for t in 0..sentence.len() {
        for s in 0..=t {
            logits[s] = (dot_f32(qh.row(t), kh.row(s)) * scale) as f64;
        }
        rows.push(normalized_weights(&logits[..=t], Some(&durations[..=t]), bias));
    }
    Ok(rows)
}

/// Double-precision midpoint quadrature of the attention integral up to
/// absolute time `t`, with nodes subdivided per span so that no subinterval
/// straddles a boundary. Exact up to round-off for the stepwise integrand.
pub fn continuous_attention_quadrature(
    sentence: &StepwiseSentence,
    params: &AttentionParams,
    t: f64,
    step: f64,
) -> Result<Array1<f64>> {
    if !(step > 0.0) {
        return Err(Error::Invalid(format!("quadrature step {step} must be positive")));
    }
    quadrature_impl(sentence, params, t, |seg| {
        ((seg / step).ceil() as usize).max(1)
    })
}

/// Midpoint quadrature over a uniform grid that ignores span boundaries.
/// Converges to the closed form as the node count grows; used for the
/// step-halving convergence study.
pub fn continuous_attention_quadrature_uniform(
    sentence: &StepwiseSentence,
    params: &AttentionParams,
    t: f64,
    node_count: usize,
) -> Result<Array1<f64>> {
    if node_count == 0 {
        return Err(Error::Invalid("node_count must be positive".into()));
    }
    let origin = sentence.origin();
    let total = sentence.total_length();
    if !(t > origin && t <= origin + total + 1e-12) {
        return Err(Error::TimeOutOfDomain {
            t,
            lo: origin,
            hi: origin + total,
        });
    }
    let positions = sentence.positions();
    let query_span = query_span_index(&positions, t);
    let (qh, kh, vh, w_o) = projections_f64(sentence, params);

    let h = (t - origin) / node_count as f64;
    let scale = 1.0 / (params.head_dim as f64).sqrt();
    let d = params.head_dim;
    let mut concat = vec![0.0f64; params.head_count * d];
    for head in 0..params.head_count {
        let q = &qh[head][query_span];
        let mut num = vec![0.0f64; d];
        let mut z = 0.0f64;
        for j in 0..node_count {
            let s = origin + (j as f64 + 0.5) * h;
            let span = query_span_index(&positions, s);
            let logit = dot64(q, &kh[head][span]) * scale;
            let e = logit.exp() * h;
            z += e;
            for (n, &vv) in num.iter_mut().zip(&vh[head][span]) {
                *n += e * vv;
            }
        }
        for (j, n) in num.into_iter().enumerate() {
            concat[head * d + j] = n / z;
        }
    }
    Ok(apply_w_o_f64(&w_o, &concat))
}

/// Double-precision evaluation of the closed form for one query span:
/// `sum_k exp(q . k_k / sqrt(d)) d_k v_k / Z` over keys `k <= query_index`.
/// Reference side of the quadrature oracle comparison.
pub fn stepwise_closed_form_f64(
    sentence: &StepwiseSentence,
    params: &AttentionParams,
    query_index: usize,
) -> Result<Array1<f64>> {
    if query_index >= sentence.len() {
        return Err(Error::Invalid(format!(
            "query index {query_index} out of range for {} spans",
            sentence.len()
        )));
    }
    let durations = sentence.durations();
    let (qh, kh, vh, w_o) = projections_f64(sentence, params);
    let scale = 1.0 / (params.head_dim as f64).sqrt();
    let d = params.head_dim;
    let mut concat = vec![0.0f64; params.head_count * d];
    for head in 0..params.head_count {
        let q = &qh[head][query_index];
        let mut num = vec![0.0f64; d];
        let mut z = 0.0f64;
        for k_idx in 0..=query_index {
            let e = (dot64(q, &kh[head][k_idx]) * scale).exp() * durations[k_idx];
            z += e;
            for (acc, &vv) in num.iter_mut().zip(&vh[head][k_idx]) {
                *acc += e * vv;
            }
        }
        for (j, n) in num.into_iter().enumerate() {
            concat[head * d + j] = n / z;
        }
    }
    Ok(apply_w_o_f64(&w_o, &concat))
}

fn quadrature_impl(
    sentence: &StepwiseSentence,
    params: &AttentionParams,
    t: f64,
    nodes_for_segment: impl Fn(f64) -> usize,
) -> Result<Array1<f64>> {
    let origin = sentence.origin();
    let total = sentence.total_length();
    if !(t > origin && t <= origin + total + 1e-12) {
        return Err(Error::TimeOutOfDomain {
            t,
            lo: origin,
            hi: origin + total,
        });
    }
    let positions = sentence.positions();
    let query_span = query_span_index(&positions, t);
    let (qh, kh, vh, w_o) = projections_f64(sentence, params);

    let scale = 1.0 / (params.head_dim as f64).sqrt();
    let d = params.head_dim;
    let mut concat = vec![0.0f64; params.head_count * d];
    for head in 0..params.head_count {
        let q = &qh[head][query_span];
        let mut num = vec![0.0f64; d];
        let mut z = 0.0f64;
        for (k_idx, &start) in positions.iter().enumerate() {
            if start >= t {
                break;
            }
            let end = (start + sentence.spans()[k_idx].duration).min(t);
            let seg = end - start;
            let n = nodes_for_segment(seg);
            let h = seg / n as f64;
            let logit = dot64(q, &kh[head][k_idx]) * scale;
            // Midpoint nodes all fall inside the span; the integrand is
            // constant there.
            for j in 0..n {
                let _mid = start + (j as f64 + 0.5) * h;
                let e = logit.exp() * h;
                z += e;
                for (acc, &vv) in num.iter_mut().zip(&vh[head][k_idx]) {
                    *acc += e * vv;
                }
            }
        }
        for (j, n) in num.into_iter().enumerate() {
            concat[head * d + j] = n / z;
        }
    }
    Ok(apply_w_o_f64(&w_o, &concat))
}

/// Index of the span whose interval contains `s`, with an exact boundary
/// resolving to the earlier span (a query at a span end belongs to that span).
fn query_span_index(positions: &[f64], s: f64) -> usize {
    let mut idx = 0;
    for (i, &p) in positions.iter().enumerate() {
        if p < s {
            idx = i;
        } else {
            break;
        }
    }
    idx
}

type HeadVectors = Vec<Vec<Vec<f64>>>;

fn projections_f64(
    sentence: &StepwiseSentence,
    params: &AttentionParams,
) -> (HeadVectors, HeadVectors, HeadVectors, Array2<f64>) {
    let x = sentence.embedding_matrix();
    let q = project(&x.view(), &params.w_q);
    let k = project(&x.view(), &params.w_k);
    let v = project(&x.view(), &params.w_v);
    let to_heads = |m: &Array2<f32>| -> HeadVectors {
        (0..params.head_count)
            .map(|head| {
                let cols = params.head_cols(head);
                (0..m.nrows())
                    .map(|t| {
                        m.slice(ndarray::s![t, cols.clone()])
                            .iter()
                            .map(|&x| x as f64)
                            .collect()
                    })
                    .collect()
            })
            .collect()
    };
    let w_o = params.w_o.mapv(|x| x as f64);
    (to_heads(&q), to_heads(&k), to_heads(&v), w_o)
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn apply_w_o_f64(w_o: &Array2<f64>, concat: &[f64]) -> Array1<f64> {
    let mut out = Array1::<f64>::zeros(w_o.nrows());
    for (i, mut_row) in out.iter_mut().enumerate() {
        *mut_row = w_o.row(i).iter().zip(concat).map(|(w, c)| w * c).sum();
    }
    out
}

/// Concatenate per-head outputs and apply the output projection.
pub fn multi_head_combine(per_head: &[Array1<f32>], w_o: &Array2<f32>) -> Result<Array1<f32>> {
    if per_head.is_empty() {
        return Err(Error::Empty("per-head outputs"));
    }
    let total: usize = per_head.iter().map(|h| h.len()).sum();
    if total != w_o.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "concatenated heads have {total} entries, w_o expects {}",
            w_o.ncols()
        )));
    }
    let mut concat = Array1::<f32>::zeros(total);
    let mut offset = 0;
    for h in per_head {
        concat.slice_mut(ndarray::s![offset..offset + h.len()]).assign(h);
        offset += h.len();
    }
    Ok(w_o.dot(&concat))
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gain: Array1<f32>,
    pub bias: Array1<f32>,
}

impl LayerNormParams {
    pub fn identity(d: usize) -> Self {
        Self {
            gain: Array1::ones(d),
            bias: Array1::zeros(d),
        }
    }
}

/// Layer normalization with the epsilon inside the square root; mean and
/// variance accumulated in double precision.
pub fn layer_norm(x: &Array1<f32>, params: &LayerNormParams) -> Array1<f32> {
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = x
        .iter()
        .map(|&v| {
            let c = v as f64 - mean;
            c * c
        })
        .sum::<f64>()
        / n;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    Array1::from_iter(x.iter().enumerate().map(|(i, &v)| {
        ((v as f64 - mean) * inv) as f32 * params.gain[i] + params.bias[i]
    }))
}

/// Attention plus the residual/normalization block around it.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub attention: AttentionParams,
    pub w_z: Array2<f32>,
    pub norm1: LayerNormParams,
    pub norm2: LayerNormParams,
}

/// `z = LayerNorm(y + x); out = LayerNorm(W_z z + x)`.
pub fn add_norm_block(x: &Array1<f32>, y: &Array1<f32>, block: &BlockParams) -> Result<Array1<f32>> {
    if x.len() != y.len() || block.w_z.ncols() != x.len() || block.w_z.nrows() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "add_norm_block: x {}, y {}, w_z {:?}",
            x.len(),
            y.len(),
            block.w_z.dim()
        )));
    }
    let z = layer_norm(&(y + x), &block.norm1);
    let out = layer_norm(&(block.w_z.dot(&z) + x), &block.norm2);
    Ok(out)
}

/// Largest per-element absolute difference between two matrices.
pub fn max_abs_diff(a: &Array2<f32>, b: &Array2<f32>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .fold(0.0, f64::max)
}

/// Largest relative per-element difference of `a` against reference `b`.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / y.abs().max(1e-9))
        .fold(0.0, f64::max)
}

pub fn row_f64(m: &Array2<f32>, row: usize) -> Vec<f64> {
    m.row(row).iter().map(|&v| v as f64).collect()
}
