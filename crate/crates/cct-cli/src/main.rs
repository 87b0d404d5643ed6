//! `cct`: diagnostics, duration sweeps, and metric aggregation for
//! duration-weighted causal attention models.
//!
//! Logs go to stderr; data goes to files (or stdout for `check`), so outputs
//! stay machine-consumable. Every command is a pure function of its inputs
//! and seed: identical invocations produce byte-identical outputs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cct_core::metrics::{deviation_from_baseline, RecordMetrics};
use cct_core::model::{Model, ModelConfig};
use cct_core::sweep::{
    default_scale_grid, default_shift_grid, default_shrink_grid, run_interpolation_sweep,
    run_scale_sweep, run_shift_sweep, run_shrink_sweep, SweepKind, SweepOutcome, SweepRecord,
};
use cct_core::{
    aggregate, interpolation_metrics, peak_report, run_all_checks, CheckConfig, LabelSet,
    SentenceDoc, SpanSelector, StepwiseSentence, TensorArchive,
};

#[derive(Parser)]
#[command(name = "cct", version, about = "Duration-weighted attention harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the oracle and invariant suite on self-generated seeded models.
    Check(CheckArgs),
    /// Run a duration sweep and write CSV, record JSON, and metrics JSON.
    Sweep(SweepArgs),
    /// Combine per-record metrics files into summary.json and summary.csv.
    Aggregate(AggregateArgs),
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 7, env = "CCT_SEED")]
    seed: u64,
    /// Seeded models used for the scale-sensitivity check.
    #[arg(long, default_value_t = 20)]
    scale_trials: usize,
    /// Test hook: corrupt the masked path's durations so path equivalence
    /// must fail.
    #[arg(long, hide = true)]
    corrupt_duration_bias: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Tensor archive with model weights; omit to initialize from the seed.
    #[arg(long, env = "CCT_MODEL")]
    model: Option<PathBuf>,
    /// Model configuration JSON.
    #[arg(long, env = "CCT_CONFIG")]
    config: PathBuf,
    /// Prompt sentence JSON; pass twice for interpolation endpoints.
    #[arg(long, required = true, num_args = 1..=2)]
    prompt: Vec<PathBuf>,
    /// shrink | interpolate | shift | scale
    #[arg(long)]
    sweep: String,
    /// Comma-separated sweep values; defaults to the documented grid.
    #[arg(long)]
    grid: Option<String>,
    /// Interpolation step count (grid has steps + 1 points).
    #[arg(long, default_value_t = 40)]
    steps: usize,
    /// Inclusive span range "start:end" shrunk by the shrink sweep;
    /// defaults to all spans.
    #[arg(long)]
    selector: Option<String>,
    /// Label set, e.g. "yes=3;no=7" or "digits".
    #[arg(long, default_value = "digits", env = "CCT_LABELS")]
    labels: String,
    /// Output directory.
    #[arg(long, env = "CCT_OUT")]
    out: PathBuf,
    /// Record identifier used in file names and metrics.
    #[arg(long, default_value = "prompt")]
    prompt_id: String,
    #[arg(long, default_value_t = 7, env = "CCT_SEED")]
    seed: u64,
    /// 1 = sequential, 0 = one worker per core.
    #[arg(long, default_value_t = 1, env = "CCT_WORKERS")]
    workers: usize,
    /// Expected unique-peak count for the peaks metric; defaults to the
    /// number of numeric labels.
    #[arg(long)]
    expected_peaks: Option<usize>,
}

#[derive(Args)]
struct AggregateArgs {
    /// Metrics JSON files produced by `cct sweep`.
    #[arg(required = true)]
    metrics: Vec<PathBuf>,
    #[arg(long, env = "CCT_OUT")]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Check(args) => cmd_check(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Aggregate(args) => cmd_aggregate(args),
    }
}

fn cmd_check(args: CheckArgs) -> Result<i32> {
    let cfg = CheckConfig {
        seed: args.seed,
        scale_trials: args.scale_trials,
        corrupt_duration_bias: args.corrupt_duration_bias,
    };
    let results = run_all_checks(&cfg)?;
    let mut failed = 0;
    for result in &results {
        println!("{}", result.render());
        if !result.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", results.len());
        return Ok(1);
    }
    eprintln!("all {} checks passed", results.len());
    Ok(0)
}

fn load_model(args: &SweepArgs) -> Result<Model> {
    let config = ModelConfig::load(&args.config)
        .with_context(|| format!("loading model config {}", args.config.display()))?;
    match &args.model {
        Some(path) => {
            let bytes = std::fs::read(path)
                .with_context(|| format!("reading model archive {}", path.display()))?;
            let archive = TensorArchive::from_bytes(&bytes)?;
            Ok(Model::from_archive(&archive, config)?)
        }
        None => {
            eprintln!("no --model given; initializing random weights from seed {}", args.seed);
            Ok(Model::init_random(args.seed, config)?)
        }
    }
}

fn load_prompt(model: &Model, path: &Path) -> Result<StepwiseSentence> {
    let doc: SentenceDoc = serde_json::from_slice(
        &std::fs::read(path).with_context(|| format!("reading prompt {}", path.display()))?,
    )
    .with_context(|| format!("parsing prompt {}", path.display()))?;
    Ok(model.resolve_doc(&doc)?)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("invalid grid value {v:?}"))
        })
        .collect()
}

fn parse_selector(spec: &str) -> Result<SpanSelector> {
    let (start, end) = spec
        .split_once(':')
        .context("selector must be start:end (inclusive span indices)")?;
    Ok(SpanSelector::new(start.trim().parse()?, end.trim().parse()?))
}

fn parse_labels(spec: &str) -> Result<LabelSet> {
    if spec == "digits" {
        Ok(LabelSet::digits())
    } else {
        Ok(LabelSet::parse_inline(spec)?)
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<i32> {
    let kind: SweepKind = args.sweep.parse()?;
    let model = load_model(&args)?;
    let labels = parse_labels(&args.labels)?;
    if kind == SweepKind::Interpolate {
        if args.prompt.len() != 2 {
            bail!("interpolation needs two --prompt files");
        }
    } else if args.prompt.len() != 1 {
        bail!("{} takes exactly one --prompt file", kind.as_str());
    }
    let prompt = load_prompt(&model, &args.prompt[0])?;
    let grid = match (&args.grid, kind) {
        (Some(spec), _) => parse_grid(spec)?,
        (None, SweepKind::Shrink) => default_shrink_grid(),
        (None, SweepKind::Shift) => default_shift_grid(),
        (None, SweepKind::Scale) => default_scale_grid(),
        (None, SweepKind::Interpolate) => Vec::new(), // built from --steps
    };

    let outcome = match kind {
        SweepKind::Shrink => {
            let selector = match &args.selector {
                Some(spec) => parse_selector(spec)?,
                None => SpanSelector::all(prompt.len()),
            };
            SweepOutcome::Record(run_shrink_sweep(
                &model,
                &prompt,
                selector,
                &grid,
                &labels,
                &args.prompt_id,
                args.workers,
            )?)
        }
        SweepKind::Interpolate => {
            let prompt_b = load_prompt(&model, &args.prompt[1])?;
            run_interpolation_sweep(
                &model,
                &prompt,
                &prompt_b,
                args.steps,
                &labels,
                &args.prompt_id,
                args.workers,
            )?
        }
        SweepKind::Shift => SweepOutcome::Record(run_shift_sweep(
            &model,
            &prompt,
            &grid,
            &labels,
            &args.prompt_id,
            args.workers,
        )?),
        SweepKind::Scale => SweepOutcome::Record(run_scale_sweep(
            &model,
            &prompt,
            &grid,
            &labels,
            &args.prompt_id,
            args.workers,
        )?),
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let stem = format!("{}.{}", args.prompt_id, kind.as_str());
    match outcome {
        SweepOutcome::Record(record) => {
            let metrics = record_metrics(&record, kind, &args)?;
            write_outputs(&args.out, &stem, Some(&record), &metrics)?;
            eprintln!(
                "wrote {stem}.csv, {stem}.record.json, {stem}.metrics.json in {}",
                args.out.display()
            );
        }
        SweepOutcome::Skipped { prompt_id, reason } => {
            eprintln!("record {prompt_id} skipped: {reason}");
            let metrics = RecordMetrics::skipped(kind, &prompt_id, &reason);
            write_outputs(&args.out, &stem, None, &metrics)?;
        }
    }
    Ok(0)
}

fn record_metrics(record: &SweepRecord, kind: SweepKind, args: &SweepArgs) -> Result<RecordMetrics> {
    let mut metrics = RecordMetrics {
        format: record.format,
        sweep_kind: kind,
        prompt_id: record.prompt_id.clone(),
        valid: true,
        skip_reason: None,
        peaks: None,
        sums: None,
        interpolation: None,
        deviation: None,
    };
    match kind {
        SweepKind::Shrink => {
            let numeric: Vec<String> = record
                .labels
                .iter()
                .filter(|name| name.parse::<usize>().is_ok())
                .cloned()
                .collect();
            if !numeric.is_empty() {
                let expected = args.expected_peaks.unwrap_or(numeric.len());
                metrics.peaks = Some(peak_report(record, &numeric, expected)?);
            }
        }
        SweepKind::Interpolate => metrics.interpolation = Some(interpolation_metrics(record)?),
        SweepKind::Shift | SweepKind::Scale => {
            metrics.deviation = Some(deviation_from_baseline(record)?)
        }
    }
    Ok(metrics)
}

fn write_outputs(
    out: &Path,
    stem: &str,
    record: Option<&SweepRecord>,
    metrics: &RecordMetrics,
) -> Result<()> {
    if let Some(record) = record {
        std::fs::write(out.join(format!("{stem}.csv")), record.to_csv())?;
        let mut json = serde_json::to_vec_pretty(record)?;
        json.push(b'\n');
        std::fs::write(out.join(format!("{stem}.record.json")), json)?;
    }
    let mut json = serde_json::to_vec_pretty(metrics)?;
    json.push(b'\n');
    std::fs::write(out.join(format!("{stem}.metrics.json")), json)?;
    Ok(())
}

fn cmd_aggregate(args: AggregateArgs) -> Result<i32> {
    let mut records = Vec::with_capacity(args.metrics.len());
    for path in &args.metrics {
        let doc: RecordMetrics = serde_json::from_slice(
            &std::fs::read(path).with_context(|| format!("reading {}", path.display()))?,
        )
        .with_context(|| format!("parsing {}", path.display()))?;
        records.push(doc);
    }
    let summary = aggregate(&records)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let mut json = serde_json::to_vec_pretty(&summary)?;
    json.push(b'\n');
    std::fs::write(args.out.join("summary.json"), json)?;
    std::fs::write(args.out.join("summary.csv"), summary.to_csv())?;
    eprintln!(
        "aggregated {} metrics files into {}",
        records.len(),
        args.out.display()
    );
    Ok(0)
}
