//! Sentences as stepwise-constant functions over a real interval.
//!
//! A sentence is an ordered list of token spans. Span `s` carries an
//! embedding vector and a positive duration; it occupies the interval
//! `[origin + sum(d_j, j < s), origin + sum(d_j, j <= s))`. Intervals are
//! always derived from prefix sums over the durations, so edits can never
//! leave holes or overlaps between spans.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One constant piece of the input function: an embedding held for `duration`
/// time units.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSpan {
    pub embedding: Array1<f32>,
    pub duration: f64,
}

impl TokenSpan {
    pub fn new(embedding: Array1<f32>, duration: f64) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::InvalidDuration(duration));
        }
        if embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("span embedding".into()));
        }
        Ok(Self {
            embedding,
            duration,
        })
    }
}

/// Inclusive 0-based range of token indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanSelector {
    pub start_index: usize,
    pub end_index: usize,
}

impl SpanSelector {
    pub fn new(start_index: usize, end_index: usize) -> Self {
        Self {
            start_index,
            end_index,
        }
    }

    pub fn all(len: usize) -> Self {
        Self {
            start_index: 0,
            end_index: len.saturating_sub(1),
        }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.start_index > self.end_index || self.end_index >= len {
            return Err(Error::SelectorOutOfRange {
                start: self.start_index,
                end: self.end_index,
                len,
            });
        }
        Ok(())
    }

    pub fn contains(&self, index: usize) -> bool {
        index >= self.start_index && index <= self.end_index
    }

    pub fn len(&self) -> usize {
        self.end_index - self.start_index + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Interpolation coefficient plus grid density for interpolation sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationSpec {
    pub alpha: f64,
    pub step_count: usize,
}

impl InterpolationSpec {
    pub const DEFAULT_STEP_COUNT: usize = 40;

    pub fn new(alpha: f64, step_count: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Invalid(format!(
                "interpolation alpha {alpha} outside [0, 1]"
            )));
        }
        if step_count == 0 {
            return Err(Error::Invalid("step_count must be positive".into()));
        }
        Ok(Self { alpha, step_count })
    }
}

impl Default for InterpolationSpec {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            step_count: Self::DEFAULT_STEP_COUNT,
        }
    }
}

/// An ordered, contiguous partition of `[origin, origin + total_length)`
/// into token spans.
#[derive(Debug, Clone, PartialEq)]
pub struct StepwiseSentence {
    spans: Vec<TokenSpan>,
    origin: f64,
}

impl StepwiseSentence {
    pub fn new(spans: Vec<TokenSpan>, origin: f64) -> Result<Self> {
        if spans.is_empty() {
            return Err(Error::Empty("sentence must contain at least one span"));
        }
        if !(origin >= 0.0) || !origin.is_finite() {
            return Err(Error::Invalid(format!("origin {origin} must be finite and >= 0")));
        }
        let d = spans[0].embedding.len();
        for span in &spans {
            if span.embedding.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "span embedding has {} entries, expected {}",
                    span.embedding.len(),
                    d
                )));
            }
        }
        let sentence = Self { spans, origin };
        sentence.audit()?;
        Ok(sentence)
    }

    /// Build a sentence with unit duration per token and origin 0.
    pub fn from_embeddings(embeddings: Vec<Array1<f32>>) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(Error::Empty("embedding list"));
        }
        let spans = embeddings
            .into_iter()
            .map(|e| TokenSpan::new(e, 1.0))
            .collect::<Result<Vec<_>>>()?;
        Self::new(spans, 0.0)
    }

    /// Re-check every construction invariant.
    pub fn audit(&self) -> Result<()> {
        if self.spans.is_empty() {
            return Err(Error::Empty("sentence must contain at least one span"));
        }
        let d = self.spans[0].embedding.len();
        for span in &self.spans {
            if !(span.duration > 0.0) || !span.duration.is_finite() {
                return Err(Error::InvalidDuration(span.duration));
            }
            if span.embedding.len() != d {
                return Err(Error::DimensionMismatch(
                    "ragged span embedding dimensions".into(),
                ));
            }
            if span.embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("span embedding".into()));
            }
        }
        let total = self.total_length();
        if !total.is_finite() || !(total > 0.0) {
            return Err(Error::Invalid(format!("total length {total} not positive")));
        }
        // Contiguity holds by construction: interval ends are the next prefix
        // sum, never stored separately. Positions must still be strictly
        // increasing.
        let positions = self.positions();
        for w in positions.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Invalid("positions not strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn d_model(&self) -> usize {
        self.spans[0].embedding.len()
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn spans(&self) -> &[TokenSpan] {
        &self.spans
    }

    pub fn durations(&self) -> Vec<f64> {
        self.spans.iter().map(|s| s.duration).collect()
    }

    pub fn total_length(&self) -> f64 {
        self.spans.iter().map(|s| s.duration).sum()
    }

    /// Interval start of each span: `origin + sum(d_j, j < i)`, recomputed
    /// from scratch on every call.
    pub fn positions(&self) -> Vec<f64> {
        let mut acc = self.origin;
        self.spans
            .iter()
            .map(|s| {
                let p = acc;
                acc += s.duration;
                p
            })
            .collect()
    }

    /// `[start, end)` interval of span `index`.
    pub fn interval(&self, index: usize) -> (f64, f64) {
        let positions = self.positions();
        let start = positions[index];
        (start, start + self.spans[index].duration)
    }

    /// Span embeddings stacked as a `T x d_model` matrix.
    pub fn embedding_matrix(&self) -> Array2<f32> {
        let d = self.d_model();
        let mut m = Array2::zeros((self.len(), d));
        for (i, span) in self.spans.iter().enumerate() {
            m.row_mut(i).assign(&span.embedding);
        }
        m
    }

    /// Multiply the durations of the selected spans by `factor` in (0, 1].
    pub fn shrink(&self, selector: SpanSelector, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(Error::InvalidFactor(factor));
        }
        selector.validate(self.len())?;
        let spans = self
            .spans
            .iter()
            .enumerate()
            .map(|(i, span)| TokenSpan {
                embedding: span.embedding.clone(),
                duration: if selector.contains(i) {
                    span.duration * factor
                } else {
                    span.duration
                },
            })
            .collect();
        Self::new(spans, self.origin)
    }

    /// Translate the whole partition right by `delta >= 0`.
    pub fn shift(&self, delta: f64) -> Result<Self> {
        if delta < 0.0 || !delta.is_finite() {
            return Err(Error::NegativeShift(delta));
        }
        Self::new(self.spans.clone(), self.origin + delta)
    }

    /// Multiply every duration and the origin by `c > 0`.
    pub fn scale(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidScale(c));
        }
        let spans = self
            .spans
            .iter()
            .map(|span| TokenSpan {
                embedding: span.embedding.clone(),
                duration: span.duration * c,
            })
            .collect();
        Self::new(spans, self.origin * c)
    }

    /// Span-wise affine blend `(1 - alpha) * a + alpha * b` of two sentences
    /// sharing span count, durations, and origin.
    pub fn interpolate(a: &Self, b: &Self, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Invalid(format!(
                "interpolation alpha {alpha} outside [0, 1]"
            )));
        }
        if a.len() != b.len() {
            return Err(Error::InterpolationMismatch("span count"));
        }
        if a.d_model() != b.d_model() {
            return Err(Error::InterpolationMismatch("embedding dimension"));
        }
        if a.origin != b.origin {
            return Err(Error::InterpolationMismatch("origin"));
        }
        let alpha_f = alpha as f32;
        let spans = a
            .spans
            .iter()
            .zip(&b.spans)
            .map(|(sa, sb)| {
                if sa.duration != sb.duration {
                    return Err(Error::InterpolationMismatch("span durations"));
                }
                // Two-coefficient form so both endpoints reproduce the
                // operands bit for bit.
                let embedding =
                    &(&sa.embedding * (1.0 - alpha_f)) + &(&sb.embedding * alpha_f);
                Ok(TokenSpan {
                    embedding,
                    duration: sa.duration,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(spans, a.origin)
    }
}

/// JSON exchange format for sentences. Exactly one of `token_id` /
/// `embedding` must be present per span; token ids are resolved against a
/// model's embedding table by the runtime.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentenceDoc {
    pub origin: f64,
    pub spans: Vec<SpanDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpanDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_id: Option<u32>,
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
}

impl SentenceDoc {
    pub fn validate(&self) -> Result<()> {
        if self.spans.is_empty() {
            return Err(Error::Empty("sentence document has no spans"));
        }
        for (i, span) in self.spans.iter().enumerate() {
            match (&span.token_id, &span.embedding) {
                (Some(_), Some(_)) => {
                    return Err(Error::Invalid(format!(
                        "span {i} has both token_id and embedding"
                    )))
                }
                (None, None) => {
                    return Err(Error::Invalid(format!(
                        "span {i} has neither token_id nor embedding"
                    )))
                }
                _ => {}
            }
            if !(span.duration > 0.0) {
                return Err(Error::InvalidDuration(span.duration));
            }
        }
        Ok(())
    }

    pub fn from_sentence(sentence: &StepwiseSentence) -> Self {
        Self {
            origin: sentence.origin(),
            spans: sentence
                .spans()
                .iter()
                .map(|s| SpanDoc {
                    token_id: None,
                    duration: s.duration,
                    embedding: Some(s.embedding.to_vec()),
                })
                .collect(),
        }
    }

    pub fn from_token_ids(ids: &[u32]) -> Self {
        Self {
            origin: 0.0,
            spans: ids
                .iter()
                .map(|&id| SpanDoc {
                    token_id: Some(id),
                    duration: 1.0,
                    embedding: None,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn unit_sentence(n: usize) -> StepwiseSentence {
        StepwiseSentence::from_embeddings(
            (0..n).map(|i| array![i as f32, 1.0]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn from_embeddings_unit_intervals() {
        let s = unit_sentence(3);
        assert_eq!(s.interval(0), (0.0, 1.0));
        assert_eq!(s.interval(1), (1.0, 2.0));
        assert_eq!(s.interval(2), (2.0, 3.0));
        s.audit().unwrap();
    }

    #[test]
    fn from_embeddings_rejects_empty() {
        assert!(matches!(
            StepwiseSentence::from_embeddings(vec![]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn from_embeddings_rejects_ragged() {
        let err = StepwiseSentence::from_embeddings(vec![array![1.0], array![1.0, 2.0]]);
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn shrink_all_halves_total_length() {
        let s = unit_sentence(4);
        let shrunk = s.shrink(SpanSelector::all(4), 0.5).unwrap();
        assert_eq!(shrunk.durations(), vec![0.5; 4]);
        assert_eq!(shrunk.total_length(), 2.0);
    }

    #[test]
    fn shrink_factor_one_is_identity() {
        let s = unit_sentence(4);
        assert_eq!(s.shrink(SpanSelector::all(4), 1.0).unwrap(), s);
    }

    #[test]
    fn shrink_inner_selection() {
        // Independent check: walk the spans and apply the factor by hand.
        let s = unit_sentence(4);
        let sel = SpanSelector::new(1, 2);
        let shrunk = s.shrink(sel, 0.25).unwrap();
        let mut expected = Vec::new();
        for (i, span) in s.spans().iter().enumerate() {
            expected.push(if (1..=2).contains(&i) {
                span.duration * 0.25
            } else {
                span.duration
            });
        }
        assert_eq!(shrunk.durations(), expected);
        assert_eq!(shrunk.durations(), vec![1.0, 0.25, 0.25, 1.0]);
    }

    #[test]
    fn shrink_rejects_bad_factor() {
        let s = unit_sentence(2);
        assert!(s.shrink(SpanSelector::all(2), 0.0).is_err());
        assert!(s.shrink(SpanSelector::all(2), 1.5).is_err());
        assert!(s.shrink(SpanSelector::new(1, 2), 0.5).is_err());
    }

    #[test]
    fn shift_moves_intervals() {
        let s = unit_sentence(2).shift(3.0).unwrap();
        assert_eq!(s.interval(0), (3.0, 4.0));
        assert_eq!(s.interval(1), (4.0, 5.0));
        assert_eq!(unit_sentence(2).shift(0.0).unwrap(), unit_sentence(2));
        assert!(unit_sentence(2).shift(-1.0).is_err());
    }

    #[test]
    fn scale_multiplies_durations_and_origin() {
        let s = unit_sentence(3).shift(1.0).unwrap().scale(2.0).unwrap();
        assert_eq!(s.durations(), vec![2.0; 3]);
        assert_eq!(s.origin(), 2.0);
        assert_eq!(s.total_length(), 6.0);
        assert_eq!(unit_sentence(3).scale(1.0).unwrap(), unit_sentence(3));
        assert!(unit_sentence(3).scale(0.0).is_err());
    }

    #[test]
    fn interpolate_endpoints_and_midpoint() {
        let a = StepwiseSentence::from_embeddings(vec![array![2.0, 0.0]]).unwrap();
        let b = StepwiseSentence::from_embeddings(vec![array![0.0, 2.0]]).unwrap();
        assert_eq!(StepwiseSentence::interpolate(&a, &b, 0.0).unwrap(), a);
        assert_eq!(StepwiseSentence::interpolate(&a, &b, 1.0).unwrap(), b);
        let mid = StepwiseSentence::interpolate(&a, &b, 0.5).unwrap();
        assert_eq!(mid.spans()[0].embedding, array![1.0, 1.0]);
    }

    #[test]
    fn interpolate_rejects_mismatch() {
        let a = unit_sentence(2);
        let b = unit_sentence(3);
        assert!(matches!(
            StepwiseSentence::interpolate(&a, &b, 0.5),
            Err(Error::InterpolationMismatch("span count"))
        ));
    }

    #[test]
    fn positions_prefix_sums() {
        let s = unit_sentence(3);
        assert_eq!(s.positions(), vec![0.0, 1.0, 2.0]);

        let spans = vec![
            TokenSpan::new(array![0.0], 0.5).unwrap(),
            TokenSpan::new(array![0.0], 0.5).unwrap(),
            TokenSpan::new(array![0.0], 1.0).unwrap(),
        ];
        let s = StepwiseSentence::new(spans, 0.0).unwrap();
        // Prefix-sum oracle computed independently.
        let mut oracle = Vec::new();
        let mut acc = 0.0;
        for d in s.durations() {
            oracle.push(acc);
            acc += d;
        }
        assert_eq!(s.positions(), oracle);
        assert_eq!(s.positions(), vec![0.0, 0.5, 1.0]);

        let shifted = unit_sentence(3).shift(3.0).unwrap();
        assert_eq!(shifted.positions(), vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn zero_duration_rejected() {
        assert!(TokenSpan::new(array![1.0], 0.0).is_err());
    }

    #[test]
    fn sentence_doc_validation() {
        let mut doc = SentenceDoc::from_token_ids(&[1, 2]);
        doc.validate().unwrap();
        doc.spans[0].embedding = Some(vec![0.0]);
        assert!(doc.validate().is_err());
        doc.spans[0].embedding = None;
        doc.spans[0].token_id = None;
        assert!(doc.validate().is_err());
    }

    proptest! {
        #[test]
        fn contiguity_after_edits(
            durations in proptest::collection::vec(0.05f64..4.0, 1..12),
            factor in 0.05f64..1.0,
            delta in 0.0f64..8.0,
            c in 0.1f64..4.0,
        ) {
            let spans = durations
                .iter()
                .map(|&d| TokenSpan::new(array![1.0f32, -1.0], d).unwrap())
                .collect::<Vec<_>>();
            let s = StepwiseSentence::new(spans, 0.0).unwrap();
            let sel = SpanSelector::all(s.len());
            for edited in [
                s.shrink(sel, factor).unwrap(),
                s.shift(delta).unwrap(),
                s.scale(c).unwrap(),
            ] {
                edited.audit().unwrap();
                // Interval end of span i equals interval start of span i+1
                // exactly: both are the same prefix sum.
                let positions = edited.positions();
                for i in 0..edited.len() - 1 {
                    prop_assert_eq!(edited.interval(i).1, positions[i + 1]);
                }
            }
        }

        #[test]
        fn shrink_composes(
            f1 in 0.1f64..1.0,
            f2 in 0.1f64..1.0,
            n in 1usize..8,
        ) {
            let s = unit_sentence(n);
            let sel = SpanSelector::all(n);
            let once = s.shrink(sel, f1 * f2).unwrap();
            let twice = s.shrink(sel, f1).unwrap().shrink(sel, f2).unwrap();
            for (a, b) in once.durations().iter().zip(twice.durations()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn interpolate_is_affine(alpha in 0.0f64..1.0) {
            let a = StepwiseSentence::from_embeddings(vec![array![1.0, -3.0], array![0.5, 2.0]]).unwrap();
            let b = StepwiseSentence::from_embeddings(vec![array![-2.0, 4.0], array![1.5, 0.0]]).unwrap();
            let m = StepwiseSentence::interpolate(&a, &b, alpha).unwrap();
            for (i, span) in m.spans().iter().enumerate() {
                for (j, &v) in span.embedding.iter().enumerate() {
                    let ea = a.spans()[i].embedding[j] as f64;
                    let eb = b.spans()[i].embedding[j] as f64;
                    let expect = (1.0 - alpha) * ea + alpha * eb;
                    prop_assert!((v as f64 - expect).abs() <= 1e-6);
                }
            }
        }

        #[test]
        fn positions_strictly_increasing(
            durations in proptest::collection::vec(1e-3f64..5.0, 1..16),
        ) {
            let spans = durations
                .iter()
                .map(|&d| TokenSpan::new(array![0.0f32], d).unwrap())
                .collect::<Vec<_>>();
            let s = StepwiseSentence::new(spans, 0.0).unwrap();
            let p = s.positions();
            for w in p.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
        }
    }
}
