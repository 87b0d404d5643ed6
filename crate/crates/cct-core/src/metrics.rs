//! Quantitative metrics over sweep records: unique relative peaks, sums
//! properties, interpolation range/derivative metrics, and the weighted
//! aggregate summary.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sweep::{SweepKind, SweepRecord, SCHEMA_VERSION};

pub const M_MAX_THRESHOLD: f64 = 0.05;
const AMPLITUDE_GUARD: f64 = 1e-9;

/// Labels that are the argmax among the numeric labels at one or more grid
/// points, with counts normalized by the expected peak count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    /// First-appearance order.
    pub unique_relative_peaks: Vec<String>,
    pub expected_count: usize,
    /// All unique peaks over `n`.
    pub normalized_frequency: f64,
    /// Only peaks in `1..=n` counted.
    pub expected_only_frequency: f64,
    /// `1/n`: a duration-insensitive model would show one constant peak.
    pub counterfactual_frequency: f64,
}

/// Argmax label per grid point restricted to `numeric_labels`, deduplicated
/// in first-appearance order. Ties break toward the lower label index in the
/// record's label order.
pub fn unique_relative_peaks(record: &SweepRecord, numeric_labels: &[String]) -> Result<Vec<String>> {
    if numeric_labels.is_empty() {
        return Err(Error::Empty("numeric label set"));
    }
    if record.rows.is_empty() {
        return Err(Error::Empty("sweep record rows"));
    }
    let indices: Vec<usize> = record
        .labels
        .iter()
        .enumerate()
        .filter(|(_, name)| numeric_labels.contains(name))
        .map(|(i, _)| i)
        .collect();
    if indices.is_empty() {
        return Err(Error::Invalid(
            "record contains none of the numeric labels".into(),
        ));
    }
    let mut peaks: Vec<String> = Vec::new();
    for row in &record.rows {
        let mut best = indices[0];
        for &i in &indices[1..] {
            // Strict comparison keeps the lowest index on ties.
            if row.label_probs[i] > row.label_probs[best] {
                best = i;
            }
        }
        let name = &record.labels[best];
        if !peaks.contains(name) {
            peaks.push(name.clone());
        }
    }
    Ok(peaks)
}

pub fn counterfactual_frequency(expected_count: usize) -> Result<f64> {
    if expected_count == 0 {
        return Err(Error::Invalid("expected peak count must be positive".into()));
    }
    Ok(1.0 / expected_count as f64)
}

/// Count of peaks in the expected set `1..=n`.
fn expected_only_count(peaks: &[String], n: usize) -> usize {
    peaks
        .iter()
        .filter(|name| {
            name.parse::<usize>()
                .map(|v| (1..=n).contains(&v))
                .unwrap_or(false)
        })
        .count()
}

pub fn peak_report(
    record: &SweepRecord,
    numeric_labels: &[String],
    expected_count: usize,
) -> Result<PeakReport> {
    let peaks = unique_relative_peaks(record, numeric_labels)?;
    let counterfactual = counterfactual_frequency(expected_count)?;
    let n = expected_count as f64;
    Ok(PeakReport {
        normalized_frequency: peaks.len() as f64 / n,
        expected_only_frequency: expected_only_count(&peaks, expected_count) as f64 / n,
        counterfactual_frequency: counterfactual,
        unique_relative_peaks: peaks,
        expected_count,
    })
}

/// Nested sums properties; the constructor enforces P3 => P2 => P1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SumsProperties {
    pub p1: bool,
    pub p2: bool,
    pub p3: bool,
}

impl SumsProperties {
    pub fn new(p1: bool, p2: bool, p3: bool) -> Self {
        let p2 = p2 && p1;
        let p3 = p3 && p2;
        Self { p1, p2, p3 }
    }
}

/// A shrink sweep over a two-number sum prompt, labeled with the original
/// first digit and the shrunk-number digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumRecord {
    /// First digit of the unmodified sum.
    pub original_label: u8,
    /// First digits of the sums with the shrunk number collapsed to each of
    /// its digits.
    pub shrunk_labels: BTreeSet<u8>,
    pub record: SweepRecord,
}

fn leading_digit(mut n: u64) -> u8 {
    while n >= 10 {
        n /= 10;
    }
    n as u8
}

/// Label a sum where one operand keeps its duration and the other is shrunk:
/// the original label is the first digit of `kept + shrunk`, and the shrunk
/// labels are the first digits of `kept + digit` for each decimal digit of
/// the shrunk operand.
pub fn shrunk_sum_labels(kept: u64, shrunk: u64) -> (u8, BTreeSet<u8>) {
    let original = leading_digit(kept + shrunk);
    let mut shrunk_labels = BTreeSet::new();
    for digit in shrunk.to_string().bytes().map(|b| (b - b'0') as u64) {
        shrunk_labels.insert(leading_digit(kept + digit));
    }
    (original, shrunk_labels)
}

/// Evaluate P1..P3 over a sums record. Only digit labels "0".."9" present in
/// the record participate; the original label never counts as shrunk.
pub fn sums_properties(sum_record: &SumRecord) -> Result<SumsProperties> {
    let record = &sum_record.record;
    let numeric: Vec<(usize, u8)> = record
        .labels
        .iter()
        .enumerate()
        .filter_map(|(i, name)| name.parse::<u8>().ok().map(|v| (i, v)))
        .collect();
    if numeric.is_empty() {
        return Err(Error::Invalid("record has no numeric labels".into()));
    }
    let original_idx = numeric
        .iter()
        .find(|(_, v)| *v == sum_record.original_label)
        .map(|(i, _)| *i)
        .ok_or_else(|| Error::Invalid("original label missing from record".into()))?;
    let shrunk: Vec<usize> = numeric
        .iter()
        .filter(|(_, v)| sum_record.shrunk_labels.contains(v) && *v != sum_record.original_label)
        .map(|(i, _)| *i)
        .collect();
    if shrunk.is_empty() {
        return Err(Error::Invalid("no shrunk labels present in record".into()));
    }
    let third: Vec<usize> = numeric
        .iter()
        .map(|(i, _)| *i)
        .filter(|i| *i != original_idx && !shrunk.contains(i))
        .collect();

    let mut p1 = false;
    let mut p2 = false;
    let mut third_ever_top = false;
    for row in &record.rows {
        let shrunk_mass: f64 = shrunk.iter().map(|&i| row.label_probs[i]).sum();
        let original_mass = row.label_probs[original_idx];
        if shrunk_mass > original_mass {
            p1 = true;
            if third.iter().all(|&i| shrunk_mass > row.label_probs[i]) {
                p2 = true;
            }
        }
        // A "third" label is top if it beats the original and every shrunk
        // label individually.
        for &i in &third {
            let v = row.label_probs[i];
            if v > original_mass && shrunk.iter().all(|&j| v > row.label_probs[j]) {
                third_ever_top = true;
            }
        }
    }
    Ok(SumsProperties::new(p1, p2, p2 && !third_ever_top))
}

/// Range excess and smoothness metrics for an interpolation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    /// Per-label excess beyond `[min(f(a), f(b)), max(f(a), f(b))]`.
    pub m_diff: Vec<(String, f64)>,
    pub m_max: f64,
    /// `m_max >= 0.05`.
    pub exceeds_threshold: bool,
    /// Max absolute finite-difference derivative divided by the amplitude;
    /// 0 when the amplitude is below 1e-9.
    pub normalized_max_abs_derivative: f64,
}

pub fn interpolation_metrics(record: &SweepRecord) -> Result<InterpolationReport> {
    if record.rows.len() < 3 {
        return Err(Error::Invalid(
            "interpolation metrics need at least 3 grid points".into(),
        ));
    }
    let mut m_diff = Vec::with_capacity(record.labels.len());
    let mut m_max = 0.0f64;
    let mut norm_deriv = 0.0f64;
    for (li, label) in record.labels.iter().enumerate() {
        let f: Vec<f64> = record.rows.iter().map(|r| r.label_probs[li]).collect();
        let grid = &record.grid;
        let fa = f[0];
        let fb = *f.last().unwrap();
        let lo = fa.min(fb);
        let hi = fa.max(fb);
        let excess = f
            .iter()
            .map(|&v| (lo - v).max(v - hi).max(0.0))
            .fold(0.0f64, f64::max);
        m_max = m_max.max(excess);
        m_diff.push((label.clone(), excess));

        // Central differences on interior points, one-sided at the ends.
        let n = f.len();
        let mut max_abs = (f[1] - f[0]).abs() / (grid[1] - grid[0]);
        max_abs = max_abs.max((f[n - 1] - f[n - 2]).abs() / (grid[n - 1] - grid[n - 2]));
        for i in 1..n - 1 {
            let d = (f[i + 1] - f[i - 1]).abs() / (grid[i + 1] - grid[i - 1]);
            max_abs = max_abs.max(d);
        }
        let amplitude = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - f.iter().cloned().fold(f64::INFINITY, f64::min);
        let normalized = if amplitude < AMPLITUDE_GUARD {
            0.0
        } else {
            max_abs / amplitude
        };
        norm_deriv = norm_deriv.max(normalized);
    }
    Ok(InterpolationReport {
        m_diff,
        m_max,
        exceeds_threshold: m_max >= M_MAX_THRESHOLD,
        normalized_max_abs_derivative: norm_deriv,
    })
}

/// Maximum absolute per-label deviation of any row from the first row; the
/// shift/scale sweeps report this single number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub max_abs_label_deviation: f64,
}

pub fn deviation_from_baseline(record: &SweepRecord) -> Result<DeviationReport> {
    let base = record
        .rows
        .first()
        .ok_or(Error::Empty("sweep record rows"))?;
    let mut max_dev = 0.0f64;
    for row in &record.rows {
        for (p, q) in base.label_probs.iter().zip(&row.label_probs) {
            max_dev = max_dev.max((p - q).abs());
        }
    }
    Ok(DeviationReport {
        max_abs_label_deviation: max_dev,
    })
}

/// Sums section of a per-record metrics document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumsSection {
    pub original_label: u8,
    pub shrunk_labels: Vec<u8>,
    pub p1: bool,
    pub p2: bool,
    pub p3: bool,
}

/// One metrics document per sweep record (or per skipped prompt).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetrics {
    pub format: u32,
    pub sweep_kind: SweepKind,
    pub prompt_id: String,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peaks: Option<PeakReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sums: Option<SumsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpolation: Option<InterpolationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<DeviationReport>,
}

impl RecordMetrics {
    pub fn skipped(kind: SweepKind, prompt_id: &str, reason: &str) -> Self {
        Self {
            format: SCHEMA_VERSION,
            sweep_kind: kind,
            prompt_id: prompt_id.to_string(),
            valid: false,
            skip_reason: Some(reason.to_string()),
            peaks: None,
            sums: None,
            interpolation: None,
            deviation: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.format,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(())
    }
}

/// Valid-record weighted means across a batch of metrics documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format: u32,
    pub record_count: usize,
    pub valid_count: usize,
    pub valid_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_observed_frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_expected_only_frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_counterfactual_frequency: Option<f64>,
    /// Mean of per-record observed / counterfactual ratios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1_frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2_frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p3_frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_m_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction_m_max_above_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_normalized_max_abs_derivative: Option<f64>,
}

impl Summary {
    /// `key,value` rows for the CSV rendering.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push(',');
            out.push_str(&v);
            out.push('\n');
        };
        push("record_count", self.record_count.to_string());
        push("valid_count", self.valid_count.to_string());
        push("valid_rate", format!("{}", self.valid_rate));
        let opt = [
            ("mean_observed_frequency", self.mean_observed_frequency),
            ("mean_expected_only_frequency", self.mean_expected_only_frequency),
            ("mean_counterfactual_frequency", self.mean_counterfactual_frequency),
            ("mean_ratio", self.mean_ratio),
            ("p1_frequency", self.p1_frequency),
            ("p2_frequency", self.p2_frequency),
            ("p3_frequency", self.p3_frequency),
            ("mean_m_max", self.mean_m_max),
            (
                "fraction_m_max_above_threshold",
                self.fraction_m_max_above_threshold,
            ),
            (
                "mean_normalized_max_abs_derivative",
                self.mean_normalized_max_abs_derivative,
            ),
        ];
        for (k, v) in opt {
            if let Some(v) = v {
                push(k, format!("{v}"));
            }
        }
        out
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Deterministic fold in record order after a stable sort by record id, so
/// the result is invariant under permutation of the inputs.
pub fn aggregate(metrics: &[RecordMetrics]) -> Result<Summary> {
    if metrics.is_empty() {
        return Err(Error::Empty("metrics list"));
    }
    for m in metrics {
        m.validate()?;
    }
    let mut sorted: Vec<&RecordMetrics> = metrics.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.prompt_id, a.sweep_kind.as_str()).cmp(&(&b.prompt_id, b.sweep_kind.as_str()))
    });

    let valid_count = sorted.iter().filter(|m| m.valid).count();
    let mut observed = Vec::new();
    let mut expected_only = Vec::new();
    let mut counterfactual = Vec::new();
    let mut ratios = Vec::new();
    let mut p1 = Vec::new();
    let mut p2 = Vec::new();
    let mut p3 = Vec::new();
    let mut m_max = Vec::new();
    let mut above = Vec::new();
    let mut deriv = Vec::new();
    for m in sorted.iter().filter(|m| m.valid) {
        if let Some(p) = &m.peaks {
            observed.push(p.normalized_frequency);
            expected_only.push(p.expected_only_frequency);
            counterfactual.push(p.counterfactual_frequency);
            ratios.push(p.normalized_frequency / p.counterfactual_frequency);
        }
        if let Some(s) = &m.sums {
            p1.push(s.p1 as u8 as f64);
            p2.push(s.p2 as u8 as f64);
            p3.push(s.p3 as u8 as f64);
        }
        if let Some(i) = &m.interpolation {
            m_max.push(i.m_max);
            above.push(i.exceeds_threshold as u8 as f64);
            deriv.push(i.normalized_max_abs_derivative);
        }
    }
    Ok(Summary {
        format: SCHEMA_VERSION,
        record_count: metrics.len(),
        valid_count,
        valid_rate: valid_count as f64 / metrics.len() as f64,
        mean_observed_frequency: mean(&observed),
        mean_expected_only_frequency: mean(&expected_only),
        mean_counterfactual_frequency: mean(&counterfactual),
        mean_ratio: mean(&ratios),
        p1_frequency: mean(&p1),
        p2_frequency: mean(&p2),
        p3_frequency: mean(&p3),
        mean_m_max: mean(&m_max),
        fraction_m_max_above_threshold: mean(&above),
        mean_normalized_max_abs_derivative: mean(&deriv),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{SweepRow, SCHEMA_VERSION};
    use proptest::prelude::*;

    pub(crate) fn record_from_probs(
        labels: &[&str],
        grid: &[f64],
        probs: &[Vec<f64>],
    ) -> SweepRecord {
        let rows = grid
            .iter()
            .zip(probs)
            .map(|(&value, p)| SweepRow {
                value,
                label_probs: p.clone(),
                other: 1.0 - p.iter().sum::<f64>(),
            })
            .collect();
        let record = SweepRecord {
            format: SCHEMA_VERSION,
            sweep_kind: SweepKind::Shrink,
            prompt_id: "r".into(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            grid: grid.to_vec(),
            rows,
        };
        record.validate().unwrap();
        record
    }

    fn one_hot_rows(labels: &[&str], tops: &[usize]) -> Vec<Vec<f64>> {
        tops.iter()
            .map(|&t| {
                let mut row = vec![0.01; labels.len()];
                row[t] = 0.9;
                row
            })
            .collect()
    }

    #[test]
    fn worked_peak_example() {
        // Top sequence 1, 2, 1, 3 over the grid yields peaks {1, 2, 3}.
        let labels = ["1", "2", "3", "4"];
        let probs = one_hot_rows(&labels, &[0, 1, 0, 2]);
        let record = record_from_probs(&labels, &[0.25, 0.5, 0.75, 1.0], &probs);
        let numeric: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        let peaks = unique_relative_peaks(&record, &numeric).unwrap();
        assert_eq!(peaks, vec!["1", "2", "3"]);

        let report = peak_report(&record, &numeric, 4).unwrap();
        assert_eq!(report.normalized_frequency, 0.75);
        assert_eq!(report.expected_only_frequency, 0.75);
        assert_eq!(report.counterfactual_frequency, 0.25);
    }

    #[test]
    fn constant_top_label_gives_singleton() {
        let labels = ["1", "2"];
        let probs = one_hot_rows(&labels, &[1, 1, 1]);
        let record = record_from_probs(&labels, &[0.1, 0.5, 1.0], &probs);
        let numeric: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        assert_eq!(unique_relative_peaks(&record, &numeric).unwrap(), vec!["2"]);
    }

    #[test]
    fn argmax_ties_break_to_lower_index() {
        let labels = ["1", "2"];
        let record = record_from_probs(&labels, &[0.5], &[vec![0.4, 0.4]]);
        let numeric: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        assert_eq!(unique_relative_peaks(&record, &numeric).unwrap(), vec!["1"]);
    }

    #[test]
    fn full_coverage_and_counterfactual() {
        let labels = ["1", "2", "3"];
        let probs = one_hot_rows(&labels, &[0, 1, 2]);
        let record = record_from_probs(&labels, &[0.2, 0.5, 1.0], &probs);
        let numeric: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        let report = peak_report(&record, &numeric, 3).unwrap();
        assert_eq!(report.normalized_frequency, 1.0);
        assert_eq!(counterfactual_frequency(4).unwrap(), 0.25);
        assert!(counterfactual_frequency(0).is_err());
    }

    #[test]
    fn sum_labeling_24_plus_37() {
        let (original, shrunk) = shrunk_sum_labels(24, 37);
        assert_eq!(original, 6);
        assert_eq!(shrunk, BTreeSet::from([2, 3]));
    }

    #[test]
    fn sums_properties_dominant_original() {
        let labels = ["2", "3", "6", "7"];
        let probs = one_hot_rows(&labels, &[2, 2, 2]);
        let record = record_from_probs(&labels, &[0.2, 0.5, 1.0], &probs);
        let sum_record = SumRecord {
            original_label: 6,
            shrunk_labels: BTreeSet::from([2, 3]),
            record,
        };
        let props = sums_properties(&sum_record).unwrap();
        assert_eq!(props, SumsProperties::new(false, false, false));
    }

    #[test]
    fn sums_properties_constructed_extreme() {
        let labels = ["2", "3", "6", "7"];
        // Shrunk mass 0.9 at one point, everything else tiny everywhere.
        let probs = vec![
            vec![0.01, 0.01, 0.04, 0.01],
            vec![0.45, 0.45, 0.04, 0.01],
            vec![0.01, 0.01, 0.04, 0.01],
        ];
        let record = record_from_probs(&labels, &[0.2, 0.5, 1.0], &probs);
        let sum_record = SumRecord {
            original_label: 6,
            shrunk_labels: BTreeSet::from([2, 3]),
            record,
        };
        let props = sums_properties(&sum_record).unwrap();
        assert_eq!(props, SumsProperties { p1: true, p2: true, p3: true });
    }

    #[test]
    fn sums_third_label_top_blocks_p3() {
        let labels = ["2", "3", "6", "7"];
        let probs = vec![
            vec![0.05, 0.05, 0.02, 0.6], // label 7 on top
            vec![0.45, 0.45, 0.04, 0.01],
        ];
        let record = record_from_probs(&labels, &[0.5, 1.0], &probs);
        let sum_record = SumRecord {
            original_label: 6,
            shrunk_labels: BTreeSet::from([2, 3]),
            record,
        };
        let props = sums_properties(&sum_record).unwrap();
        assert!(props.p1 && props.p2 && !props.p3);
    }

    #[test]
    fn interpolation_linear_has_zero_m_max() {
        let labels = ["yes", "no"];
        let grid = [0.0, 0.5, 1.0];
        let probs = vec![vec![0.2, 0.8], vec![0.3, 0.7], vec![0.4, 0.6]];
        let record = record_from_probs(&labels, &grid, &probs);
        let report = interpolation_metrics(&record).unwrap();
        assert_eq!(report.m_max, 0.0);
        assert!(!report.exceeds_threshold);
    }

    #[test]
    fn interpolation_interior_dip() {
        // f(a) = 0.2, f(b) = 0.4, interior minimum 0.1: m_diff = 0.1.
        // Hand enumeration over the grid: only 0.1 lies outside [0.2, 0.4],
        // by exactly 0.2 - 0.1.
        let labels = ["yes"];
        let grid = [0.0, 0.5, 1.0];
        let probs = vec![vec![0.2], vec![0.1], vec![0.4]];
        let record = record_from_probs(&labels, &grid, &probs);
        let report = interpolation_metrics(&record).unwrap();
        let (name, excess) = &report.m_diff[0];
        assert_eq!(name, "yes");
        assert!((excess - 0.1).abs() < 1e-12);
        assert!((report.m_max - 0.1).abs() < 1e-12);
        assert!(report.exceeds_threshold);
    }

    #[test]
    fn constant_probabilities_zero_derivative() {
        let labels = ["yes"];
        let grid = [0.0, 0.5, 1.0];
        let probs = vec![vec![0.3], vec![0.3], vec![0.3]];
        let record = record_from_probs(&labels, &grid, &probs);
        let report = interpolation_metrics(&record).unwrap();
        assert_eq!(report.normalized_max_abs_derivative, 0.0);
    }

    fn peak_metrics(id: &str, normalized: f64, n: usize) -> RecordMetrics {
        RecordMetrics {
            format: SCHEMA_VERSION,
            sweep_kind: SweepKind::Shrink,
            prompt_id: id.into(),
            valid: true,
            skip_reason: None,
            peaks: Some(PeakReport {
                unique_relative_peaks: vec![],
                expected_count: n,
                normalized_frequency: normalized,
                expected_only_frequency: normalized,
                counterfactual_frequency: 1.0 / n as f64,
            }),
            sums: None,
            interpolation: None,
            deviation: None,
        }
    }

    #[test]
    fn aggregate_single_record_passthrough() {
        let m = peak_metrics("a", 0.75, 4);
        let summary = aggregate(std::slice::from_ref(&m)).unwrap();
        assert_eq!(summary.record_count, 1);
        assert_eq!(summary.mean_observed_frequency, Some(0.75));
        assert_eq!(summary.mean_counterfactual_frequency, Some(0.25));
        assert_eq!(summary.mean_ratio, Some(3.0));
    }

    #[test]
    fn aggregate_matches_manual_computation() {
        // Spreadsheet-style oracle over 3 synthetic reports.
        let records = vec![
            peak_metrics("a", 0.5, 4),
            peak_metrics("b", 1.0, 2),
            peak_metrics("c", 0.75, 4),
        ];
        let summary = aggregate(&records).unwrap();
        let expect_obs = (0.5 + 1.0 + 0.75) / 3.0;
        let expect_cf = (0.25 + 0.5 + 0.25) / 3.0;
        let expect_ratio = (0.5 / 0.25 + 1.0 / 0.5 + 0.75 / 0.25) / 3.0;
        assert!((summary.mean_observed_frequency.unwrap() - expect_obs).abs() < 1e-12);
        assert!((summary.mean_counterfactual_frequency.unwrap() - expect_cf).abs() < 1e-12);
        assert!((summary.mean_ratio.unwrap() - expect_ratio).abs() < 1e-12);
    }

    #[test]
    fn aggregate_rejects_schema_mismatch() {
        let mut m = peak_metrics("a", 0.75, 4);
        m.format = 9;
        assert!(matches!(
            aggregate(&[m]),
            Err(Error::SchemaVersion { found: 9, .. })
        ));
    }

    proptest! {
        #[test]
        fn nesting_holds_structurally(p1: bool, p2: bool, p3: bool) {
            let p = SumsProperties::new(p1, p2, p3);
            prop_assert!(!p.p3 || p.p2);
            prop_assert!(!p.p2 || p.p1);
        }

        #[test]
        fn m_max_symmetric_in_endpoints(
            values in proptest::collection::vec(0.0f64..1.0, 3..12),
        ) {
            let labels = ["yes"];
            let n = values.len();
            let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let probs: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
            let record = record_from_probs(&labels, &grid, &probs);
            let reversed_probs: Vec<Vec<f64>> =
                values.iter().rev().map(|&v| vec![v]).collect();
            let reversed = record_from_probs(&labels, &grid, &reversed_probs);
            let a = interpolation_metrics(&record).unwrap();
            let b = interpolation_metrics(&reversed).unwrap();
            prop_assert!((a.m_max - b.m_max).abs() <= 1e-12);
        }

        #[test]
        fn aggregate_permutation_invariant(seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let records = vec![
                peak_metrics("a", 0.5, 4),
                peak_metrics("b", 1.0, 2),
                peak_metrics("c", 0.75, 4),
                peak_metrics("d", 0.25, 8),
            ];
            let base = aggregate(&records).unwrap();
            let mut shuffled = records.clone();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            shuffled.shuffle(&mut rng);
            prop_assert_eq!(aggregate(&shuffled).unwrap(), base);
        }
    }
}
