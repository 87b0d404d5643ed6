//! Sweep protocols: run a model forward over a grid of sentence edits and
//! record per-point label probabilities.
//!
//! Grid points are independent, so they are evaluated through
//! [`crate::parallel::map_points`]; rows come back in grid order and are
//! bit-identical regardless of the worker count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{next_token_distribution, LabelSet, Model};
use crate::parallel::map_points;
use crate::sequence::{SpanSelector, StepwiseSentence};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Shrink,
    Interpolate,
    Shift,
    Scale,
}

impl SweepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepKind::Shrink => "shrink",
            SweepKind::Interpolate => "interpolate",
            SweepKind::Shift => "shift",
            SweepKind::Scale => "scale",
        }
    }
}

impl std::str::FromStr for SweepKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shrink" => Ok(SweepKind::Shrink),
            "interpolate" => Ok(SweepKind::Interpolate),
            "shift" => Ok(SweepKind::Shift),
            "scale" => Ok(SweepKind::Scale),
            other => Err(Error::Invalid(format!("unknown sweep kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub label_probs: Vec<f64>,
    pub other: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub format: u32,
    pub sweep_kind: SweepKind,
    pub prompt_id: String,
    pub labels: Vec<String>,
    pub grid: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

impl SweepRecord {
    pub fn validate(&self) -> Result<()> {
        if self.format != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.format,
                expected: SCHEMA_VERSION,
            });
        }
        if self.grid.len() != self.rows.len() {
            return Err(Error::Invalid(format!(
                "{} grid points but {} rows",
                self.grid.len(),
                self.rows.len()
            )));
        }
        for w in self.grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Invalid("sweep grid not strictly increasing".into()));
            }
        }
        for row in &self.rows {
            if row.label_probs.len() != self.labels.len() {
                return Err(Error::Invalid("row width does not match label count".into()));
            }
            for &p in &row.label_probs {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Invalid(format!("label mass {p} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// CSV rendering: `sweep_value,<label columns...>,other`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep_value");
        for label in &self.labels {
            out.push(',');
            out.push_str(label);
        }
        out.push_str(",other\n");
        for row in &self.rows {
            out.push_str(&format!("{}", row.value));
            for p in &row.label_probs {
                out.push_str(&format!(",{p}"));
            }
            out.push_str(&format!(",{}\n", row.other));
        }
        out
    }
}

/// A sweep either produced a record or was skipped with a documented reason
/// (for example mismatched tokenized lengths in interpolation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SweepOutcome {
    Record(SweepRecord),
    Skipped { prompt_id: String, reason: String },
}

/// 19 uniform duration factors 0.1, 0.15, ..., 1.0; the identity point is
/// always the last entry.
pub fn default_shrink_grid() -> Vec<f64> {
    (2..=20).map(|i| i as f64 / 20.0).collect()
}

/// `step_count + 1` uniform interpolation coefficients including both
/// endpoints.
pub fn interpolation_grid(step_count: usize) -> Vec<f64> {
    (0..=step_count)
        .map(|i| i as f64 / step_count as f64)
        .collect()
}

/// Integer shifts 0..=10.
pub fn default_shift_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64).collect()
}

/// Scale factors 0.25, 0.5, ..., 2.0 with the identity included.
pub fn default_scale_grid() -> Vec<f64> {
    (1..=8).map(|i| i as f64 / 4.0).collect()
}

fn evaluate_point(
    model: &Model,
    sentence: &StepwiseSentence,
    labels: &LabelSet,
    value: f64,
) -> Result<SweepRow> {
    let output = model
        .forward_continuous(sentence)
        .map_err(|e| e.at_sweep_point(value))?;
    let table = next_token_distribution(&output.logits, Some(labels));
    Ok(SweepRow {
        value,
        label_probs: table.labels.iter().map(|(_, p)| *p).collect(),
        other: table.other,
    })
}

fn run_points(
    model: &Model,
    labels: &LabelSet,
    kind: SweepKind,
    prompt_id: &str,
    grid: &[f64],
    workers: usize,
    edit: impl Fn(f64) -> Result<StepwiseSentence> + Sync,
) -> Result<SweepRecord> {
    if grid.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    labels.validate(model.config.vocab_size)?;
    let rows = map_points(grid, workers, |&value| {
        let sentence = edit(value).map_err(|e| e.at_sweep_point(value))?;
        evaluate_point(model, &sentence, labels, value)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let record = SweepRecord {
        format: SCHEMA_VERSION,
        sweep_kind: kind,
        prompt_id: prompt_id.to_string(),
        labels: labels.names(),
        grid: grid.to_vec(),
        rows,
    };
    record.validate()?;
    Ok(record)
}

/// Shrink the selected spans by each duration factor in `grid` and record the
/// label distribution of the final-span prediction.
pub fn run_shrink_sweep(
    model: &Model,
    prompt: &StepwiseSentence,
    selector: SpanSelector,
    grid: &[f64],
    labels: &LabelSet,
    prompt_id: &str,
    workers: usize,
) -> Result<SweepRecord> {
    selector.validate(prompt.len())?;
    run_points(model, labels, SweepKind::Shrink, prompt_id, grid, workers, |phi| {
        prompt.shrink(selector, phi)
    })
}

/// Interpolate between two prompts over `step_count + 1` coefficients.
/// Length or duration mismatches are reported as a skipped record, matching
/// the validity filter used for mismatched tokenizations.
pub fn run_interpolation_sweep(
    model: &Model,
    prompt_a: &StepwiseSentence,
    prompt_b: &StepwiseSentence,
    step_count: usize,
    labels: &LabelSet,
    prompt_id: &str,
    workers: usize,
) -> Result<SweepOutcome> {
    if let Err(e) = StepwiseSentence::interpolate(prompt_a, prompt_b, 0.0) {
        if matches!(e, Error::InterpolationMismatch(_)) {
            return Ok(SweepOutcome::Skipped {
                prompt_id: prompt_id.to_string(),
                reason: e.to_string(),
            });
        }
        return Err(e);
    }
    let grid = interpolation_grid(step_count);
    let record = run_points(
        model,
        labels,
        SweepKind::Interpolate,
        prompt_id,
        &grid,
        workers,
        |alpha| StepwiseSentence::interpolate(prompt_a, prompt_b, alpha),
    )?;
    Ok(SweepOutcome::Record(record))
}

/// Shift the prompt's origin by each delta in `grid`.
pub fn run_shift_sweep(
    model: &Model,
    prompt: &StepwiseSentence,
    grid: &[f64],
    labels: &LabelSet,
    prompt_id: &str,
    workers: usize,
) -> Result<SweepRecord> {
    run_points(model, labels, SweepKind::Shift, prompt_id, grid, workers, |delta| {
        prompt.shift(delta)
    })
}

/// Scale every duration (and the origin) by each factor in `grid`.
pub fn run_scale_sweep(
    model: &Model,
    prompt: &StepwiseSentence,
    grid: &[f64],
    labels: &LabelSet,
    prompt_id: &str,
    workers: usize,
) -> Result<SweepRecord> {
    run_points(model, labels, SweepKind::Scale, prompt_id, grid, workers, |c| {
        prompt.scale(c)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BlockStyle, Model, ModelConfig, Positional};
    use crate::rope::RotaryConfig;

    fn tiny_model() -> Model {
        Model::init_random(
            21,
            ModelConfig {
                layer_count: 2,
                head_count: 2,
                d_model: 16,
                d_head: 8,
                vocab_size: 12,
                mlp_hidden: 0,
                block_style: BlockStyle::MinimalAddnorm,
                positional: Positional::Rotary,
                rotary_base: RotaryConfig::DEFAULT_BASE,
                rotary_dim: None,
                tied_unembed: false,
            },
        )
        .unwrap()
    }

    #[test]
    fn default_grids() {
        let grid = default_shrink_grid();
        assert_eq!(grid.len(), 19);
        assert_eq!(grid[0], 0.1);
        assert_eq!(*grid.last().unwrap(), 1.0);
        assert_eq!(interpolation_grid(40).len(), 41);
        assert_eq!(default_shift_grid(), (0..=10).map(|i| i as f64).collect::<Vec<_>>());
        assert!(default_scale_grid().contains(&1.0));
    }

    #[test]
    fn shrink_identity_point_equals_baseline() {
        let model = tiny_model();
        let prompt = model.embed_tokens(&[1, 2, 2, 2, 2, 3]).unwrap();
        let labels = LabelSet::digits();
        let record = run_shrink_sweep(
            &model,
            &prompt,
            SpanSelector::new(1, 4),
            &default_shrink_grid(),
            &labels,
            "p0",
            1,
        )
        .unwrap();
        assert_eq!(record.rows.len(), 19);

        let baseline = model.forward_continuous(&prompt).unwrap();
        let table = next_token_distribution(&baseline.logits, Some(&labels));
        let last = record.rows.last().unwrap();
        assert_eq!(last.value, 1.0);
        for ((_, p), q) in table.labels.iter().zip(&last.label_probs) {
            assert_eq!(p, q);
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let model = tiny_model();
        let prompt = model.embed_tokens(&[0, 4, 4, 4]).unwrap();
        let record = run_shrink_sweep(
            &model,
            &prompt,
            SpanSelector::new(1, 3),
            &default_shrink_grid(),
            &LabelSet::digits(),
            "p1",
            1,
        )
        .unwrap();
        for row in &record.rows {
            let total: f64 = row.label_probs.iter().sum::<f64>() + row.other;
            assert!((total - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn results_identical_across_worker_counts() {
        let model = tiny_model();
        let prompt = model.embed_tokens(&[1, 5, 5, 5, 2]).unwrap();
        let labels = LabelSet::digits();
        let sequential = run_shrink_sweep(
            &model,
            &prompt,
            SpanSelector::new(1, 3),
            &default_shrink_grid(),
            &labels,
            "p2",
            1,
        )
        .unwrap();
        for workers in [0, 2, 4] {
            let parallel = run_shrink_sweep(
                &model,
                &prompt,
                SpanSelector::new(1, 3),
                &default_shrink_grid(),
                &labels,
                "p2",
                workers,
            )
            .unwrap();
            assert_eq!(sequential, parallel);
        }
    }

    #[test]
    fn interpolation_endpoints_and_skip() {
        let model = tiny_model();
        let a = model.embed_tokens(&[1, 2, 3]).unwrap();
        let b = model.embed_tokens(&[4, 5, 6]).unwrap();
        let labels = LabelSet::digits();
        let outcome = run_interpolation_sweep(&model, &a, &b, 10, &labels, "pi", 1).unwrap();
        let record = match outcome {
            SweepOutcome::Record(r) => r,
            SweepOutcome::Skipped { .. } => panic!("should not skip"),
        };
        let base_a = next_token_distribution(
            &model.forward_continuous(&a).unwrap().logits,
            Some(&labels),
        );
        let base_b = next_token_distribution(
            &model.forward_continuous(&b).unwrap().logits,
            Some(&labels),
        );
        for ((_, p), q) in base_a.labels.iter().zip(&record.rows[0].label_probs) {
            assert_eq!(p, q);
        }
        for ((_, p), q) in base_b.labels.iter().zip(&record.rows.last().unwrap().label_probs) {
            assert_eq!(p, q);
        }

        let mismatched = model.embed_tokens(&[1, 2]).unwrap();
        let outcome = run_interpolation_sweep(&model, &a, &mismatched, 10, &labels, "pj", 1).unwrap();
        assert!(matches!(outcome, SweepOutcome::Skipped { .. }));
    }

    #[test]
    fn shift_rows_equal_and_scale_rows_differ() {
        let model = tiny_model();
        let prompt = model.embed_tokens(&[3, 1, 4, 1, 5]).unwrap();
        let labels = LabelSet::digits();
        let shift = run_shift_sweep(&model, &prompt, &default_shift_grid(), &labels, "ps", 1)
            .unwrap();
        let base = &shift.rows[0];
        for row in &shift.rows {
            for (p, q) in base.label_probs.iter().zip(&row.label_probs) {
                assert!((p - q).abs() <= 1e-4);
            }
        }

        let scale = run_scale_sweep(&model, &prompt, &default_scale_grid(), &labels, "pc", 1)
            .unwrap();
        let identity = scale.rows.iter().find(|r| r.value == 1.0).unwrap();
        let half = scale.rows.iter().find(|r| r.value == 0.5).unwrap();
        let max_dev = identity
            .label_probs
            .iter()
            .zip(&half.label_probs)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0f64, f64::max);
        assert!(max_dev > 0.0, "scaling should change the distribution");
    }

    #[test]
    fn csv_shape() {
        let model = tiny_model();
        let prompt = model.embed_tokens(&[2, 2, 2, 2]).unwrap();
        let record = run_shrink_sweep(
            &model,
            &prompt,
            SpanSelector::all(4),
            &default_shrink_grid(),
            &LabelSet::digits(),
            "pcsv",
            1,
        )
        .unwrap();
        let csv = record.to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 20);
        assert!(lines[0].starts_with("sweep_value,0,1,"));
        assert!(lines[0].ends_with(",other"));
    }

    #[test]
    fn schema_version_enforced() {
        let model = tiny_model();
        let prompt = model.embed_tokens(&[1, 2]).unwrap();
        let mut record = run_shrink_sweep(
            &model,
            &prompt,
            SpanSelector::all(2),
            &default_shrink_grid(),
            &LabelSet::digits(),
            "pv",
            1,
        )
        .unwrap();
        record.format = 2;
        assert!(matches!(
            record.validate(),
            Err(Error::SchemaVersion { .. })
        ));
    }
}
