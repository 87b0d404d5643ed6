//! Continuous-time causal attention over stepwise-constant token sentences.
//!
//! A sentence is a sequence of embedding spans, each held constant for a
//! positive duration. Attention over such a sentence has a closed form in
//! which every key is weighted by its span's duration; at unit durations it
//! reduces to ordinary discrete causal attention. This crate provides the
//! attention kernels, a small transformer runtime on top of them, duration
//! sweep experiments with their metrics, and a binary tensor archive format.

pub mod archive;
pub mod attention;
pub mod checks;
pub mod error;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod rope;
pub mod sequence;
pub mod sweep;

pub use archive::TensorArchive;
pub use attention::{
    attention_weight_rows, continuous_attention_quadrature,
    continuous_attention_quadrature_uniform, discrete_causal_attention, masked_attention_path,
    stepwise_cct_attention, stepwise_cct_attention_rotary, stepwise_closed_form_f64,
    AttentionParams, DurationBiasMode,
};
pub use checks::{run_all_checks, CheckConfig, CheckResult};
pub use error::{Error, Result};
pub use metrics::{
    aggregate, interpolation_metrics, peak_report, shrunk_sum_labels, sums_properties,
    unique_relative_peaks, RecordMetrics, Summary,
};
pub use model::{LabelSet, Model, ModelConfig};
pub use rope::RotaryConfig;
pub use sequence::{SentenceDoc, SpanSelector, StepwiseSentence, TokenSpan};
pub use sweep::{
    default_scale_grid, default_shift_grid, default_shrink_grid, interpolation_grid,
    run_interpolation_sweep, run_scale_sweep, run_shift_sweep, run_shrink_sweep, SweepKind,
    SweepOutcome, SweepRecord, SweepRow, SCHEMA_VERSION,
};
