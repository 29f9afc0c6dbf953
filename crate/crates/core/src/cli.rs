//! Command-line surface.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use bigdecimal::BigDecimal;
use clap::{Args, Parser, Subcommand};

use crate::backend::{BackendConfig, BackendKind, FailureMix, BACKEND_URL_ENV, DEFAULT_REQUEST_TIMEOUT_MS};
use crate::datasetgen::{self, AreaConversion, DEFAULT_ENTRY_COUNT};
use crate::domain::{DatasetVersion, Strategy};
use crate::error::{Error, Result};
use crate::harness::{self, CellKey, CellSummary, ExperimentGrid, GridBackend, GridOptions};
use crate::sandbox::{Sandbox, SandboxConfig, SandboxLimits};
use crate::stats::{self, ComparisonResult};
use crate::strategies::{ModuleCache, PipelineOptions, PromptTemplate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "llm-interop", version, about = "LLM-driven data interoperability: conversion, evaluation and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic field-boundary dataset version.
    GenDataset(GenDatasetArgs),
    /// Run a strategy over datasets and record every attempt.
    Run(RunArgs),
    /// Summarize recorded attempts per cell.
    Analyze(AnalyzeArgs),
    /// Compare two cells (or runs) with the two-proportion z-test.
    Compare(CompareArgs),
    /// Failure-cause histogram over recorded attempts.
    Failures(FailuresArgs),
    /// Check a dataset's expected outputs against the reference converter.
    ValidateDataset(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[arg(long, default_value_t = DEFAULT_ENTRY_COUNT)]
    pub count: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_parser = DatasetVersion::from_str)]
    pub version: DatasetVersion,
    #[arg(long)]
    pub out: PathBuf,
    /// Compute acres through a float round trip (produces a broken corpus).
    #[arg(long)]
    pub lossy_area: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Dataset directory; repeat for several versions.
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "oracle", value_parser = BackendKind::from_str)]
    pub backend_kind: BackendKind,
    #[arg(long, env = BACKEND_URL_ENV)]
    pub backend_url: Option<String>,
    #[arg(long, default_value = "oracle")]
    pub model: String,
    /// Strategy; comma separated for several.
    #[arg(long, default_value = "direct", value_delimiter = ',', value_parser = Strategy::from_str)]
    pub strategy: Vec<Strategy>,
    #[arg(long, default_value_t = 3)]
    pub runs: u32,
    #[arg(long, default_value_t = 0.9)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noisy backend: probability of corrupting a response.
    #[arg(long)]
    pub error_rate: Option<f64>,
    /// Noisy backend: `mode=weight,...` over truncate, wrong-value, empty,
    /// length-stop, transport.
    #[arg(long, value_parser = FailureMix::from_str)]
    pub failure_mix: Option<FailureMix>,
    /// Absolute tolerance for numeric comparison; exact when absent.
    #[arg(long, value_parser = parse_tolerance)]
    pub num_tolerance: Option<BigDecimal>,
    #[arg(long)]
    pub prompt_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Scripted backend: directory of `<prompt-sha256>.txt` responses.
    #[arg(long)]
    pub response_dir: Option<PathBuf>,
    /// Runner command for generated modules (default from INTEROP_RUNNER).
    #[arg(long)]
    pub runner: Option<String>,
    #[arg(long, default_value_t = 30_000)]
    pub sandbox_timeout_ms: u64,
    #[arg(long, default_value_t = DEFAULT_REQUEST_TIMEOUT_MS)]
    pub request_timeout_ms: u64,
    /// Concurrent requests per http endpoint.
    #[arg(long, default_value_t = 1)]
    pub max_in_flight: usize,
    /// Reuse validated conversion modules across attempts.
    #[arg(long)]
    pub cache: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// Write all attempt records to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the per-cell summaries to this CSV file.
    #[arg(long)]
    pub summary_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// `version:model:strategy`, optionally `#run` for a single run.
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    pub beta: f64,
    #[arg(long)]
    pub no_correction: bool,
}

#[derive(Debug, Args)]
pub struct FailuresArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, value_parser = Strategy::from_str)]
    pub strategy: Option<Strategy>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
}

fn parse_tolerance(s: &str) -> std::result::Result<BigDecimal, String> {
    let t = BigDecimal::from_str(s).map_err(|e| e.to_string())?;
    if t < BigDecimal::from(0) {
        return Err("tolerance must be non-negative".into());
    }
    Ok(t)
}

/// Parses arguments and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let _ = write!(err, "{e}");
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::GenDataset(a) => gen_dataset(a, out),
        Command::Run(a) => run_grid(a, out, err),
        Command::Analyze(a) => analyze(a, out),
        Command::Compare(a) => compare(a, out, err),
        Command::Failures(a) => failures(a, out),
        Command::ValidateDataset(a) => validate(a, out),
    }
}

fn io_out(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn gen_dataset(a: GenDatasetArgs, out: &mut dyn Write) -> Result<i32> {
    let conversion = if a.lossy_area {
        AreaConversion::LossyDoubleConversion
    } else {
        AreaConversion::Exact
    };
    let boundaries = datasetgen::synthesize_boundaries(a.count + 1, a.seed)?;
    let (entries, target) = boundaries.split_at(a.count);
    let manifest =
        datasetgen::generate_dataset_with(entries, &target[0], a.version, &a.out, conversion)?;
    writeln!(
        out,
        "wrote {} entries ({}) to {}",
        manifest.entries.len(),
        manifest.version,
        a.out.display()
    )
    .map_err(io_out)?;
    Ok(EXIT_OK)
}

fn run_grid(a: RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let datasets = a
        .dataset
        .iter()
        .map(|d| datasetgen::load_dataset(d))
        .collect::<Result<Vec<_>>>()?;
    let mut config = BackendConfig {
        kind: a.backend_kind,
        base_url: a.backend_url.clone(),
        model_tag: a.model.clone(),
        temperature: a.temperature,
        request_timeout_ms: a.request_timeout_ms,
        seed: a.seed,
        response_dir: a.response_dir.clone(),
        max_in_flight: a.max_in_flight,
        ..BackendConfig::default()
    };
    match (a.error_rate, &a.failure_mix) {
        (rate, Some(mix)) => {
            config.failure_mix = mix.clone();
            config.error_rate = rate.unwrap_or(1.0);
        }
        (Some(rate), None) => config.error_rate = rate,
        (None, None) => {}
    }
    config.validate()?;

    let mut options = GridOptions {
        jobs: a.jobs,
        pipeline: PipelineOptions {
            tolerance: a.num_tolerance.clone(),
        },
        ..GridOptions::default()
    };
    if let Some(dir) = &a.prompt_dir {
        for &s in &a.strategy {
            let t = PromptTemplate::load(dir, s)?;
            match s {
                Strategy::Direct => options.direct_template = Some(t),
                Strategy::Codegen => options.codegen_template = Some(t),
            }
        }
    }
    if a.strategy.contains(&Strategy::Codegen) {
        let mut sc = SandboxConfig {
            limits: SandboxLimits {
                wall_timeout_ms: a.sandbox_timeout_ms,
                ..SandboxLimits::default()
            },
            ..SandboxConfig::default()
        };
        if let Some(runner) = &a.runner {
            sc.runner = runner.split_whitespace().map(String::from).collect();
        }
        if a.jobs > 0 {
            sc.max_concurrency = a.jobs;
        }
        options.executor = Some(Arc::new(Sandbox::new(sc)));
    }
    if a.cache {
        options.cache = Some(Arc::new(ModuleCache::new()));
    }

    let grid = ExperimentGrid {
        datasets,
        strategies: a.strategy.clone(),
        backends: vec![GridBackend::from_config(config)],
        runs: a.runs,
        results_dir: a.out.clone(),
    };
    for cell in harness::run_grid(&grid, &options)? {
        writeln!(
            err,
            "{}: attempted {}, skipped {}, backend calls {}",
            cell.key, cell.attempted, cell.skipped, cell.backend_calls
        )
        .map_err(io_out)?;
    }
    write_summaries(&harness::summarize(&a.out)?, out)?;
    Ok(EXIT_OK)
}

fn write_summaries(summaries: &[CellSummary], out: &mut dyn Write) -> Result<()> {
    writeln!(out, "cell\tn\tc\tpass1_per_run\taverage_pass1\tcomplete").map_err(io_out)?;
    for s in summaries {
        let (n, c) = s.runs.iter().fold((0, 0), |(n, c), r| (n + r.n, c + r.c));
        let per_run = s
            .per_run_pass_at_1()
            .iter()
            .map(|p| format!("{p:.7}"))
            .collect::<Vec<_>>()
            .join(",");
        let avg = s.average_pass_at_1.map_or("-".to_string(), |a| format!("{a:.7}"));
        writeln!(out, "{}\t{n}\t{c}\t{per_run}\t{avg}\t{}", s.key, s.complete).map_err(io_out)?;
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs, out: &mut dyn Write) -> Result<i32> {
    let summaries = harness::summarize(&a.results)?;
    write_summaries(&summaries, out)?;
    if let Some(path) = &a.csv {
        harness::export_records_csv(&harness::load_records(&a.results)?, path)?;
    }
    if let Some(path) = &a.summary_csv {
        harness::export_summaries_csv(&summaries, path)?;
    }
    Ok(EXIT_OK)
}

/// A `version:model:strategy[#run]` operand of `compare`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellRef {
    pub cell: CellKey,
    pub run: Option<u32>,
}

impl FromStr for CellRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (cell, run) = match s.rsplit_once('#') {
            Some((cell, run)) => (
                cell,
                Some(run.parse().map_err(|_| Error::invalid(format!("bad run in {s:?}")))?),
            ),
            None => (s, None),
        };
        Ok(Self {
            cell: cell.parse()?,
            run,
        })
    }
}

impl std::fmt::Display for CellRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.run {
            Some(r) => write!(f, "{}#{r}", self.cell),
            None => write!(f, "{}", self.cell),
        }
    }
}

/// Formats one TSV row of the `compare` output.
pub fn comparison_row(label: &str, r: &ComparisonResult) -> String {
    format!(
        "{label}\t{:.4}\t{}\t{:.4}\t{:.4}\t{}",
        r.z,
        stats::format_p_value(r.p_value),
        r.h,
        r.power,
        r.reject_null()
    )
}

pub const COMPARE_HEADER: &str = "comparison\tz\tp_value\th\tpower\treject_H0";

fn compare(a: CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let left: CellRef = a.a.parse()?;
    let right: CellRef = a.b.parse()?;
    let summaries: BTreeMap<CellKey, CellSummary> = harness::summarize(&a.results)?
        .into_iter()
        .map(|s| (s.key.clone(), s))
        .collect();
    let find = |r: &CellRef| {
        summaries
            .get(&r.cell)
            .ok_or_else(|| Error::invalid(format!("no records for cell {}", r.cell)))
    };
    let (sa, sb) = (find(&left)?, find(&right)?);
    let corrected = !a.no_correction;
    let result = match (left.run, right.run) {
        (None, None) => harness::compare_cells(sa, sb, a.alpha, corrected)?,
        (ra, rb) => harness::compare_runs(
            sa,
            ra.unwrap_or(1),
            sb,
            rb.unwrap_or(1),
            a.alpha,
            corrected,
        )?,
    };
    writeln!(out, "{COMPARE_HEADER}").map_err(io_out)?;
    writeln!(out, "{}", comparison_row(&format!("{left} vs {right}"), &result)).map_err(io_out)?;
    if !result.sufficient_power(a.beta) {
        writeln!(err, "note: power {:.3} is below 1 - beta = {:.2}", result.power, 1.0 - a.beta)
            .map_err(io_out)?;
    }
    Ok(EXIT_OK)
}

fn failures(a: FailuresArgs, out: &mut dyn Write) -> Result<i32> {
    let records = harness::load_records(&a.results)?;
    let report = harness::failure_report(&records, a.strategy);
    writeln!(out, "cause\tcount\tpercent").map_err(io_out)?;
    for row in &report.rows {
        writeln!(out, "{}\t{}\t{:.1}", row.cause.code(), row.count, row.percent).map_err(io_out)?;
    }
    writeln!(out, "N\t{}\t", report.total).map_err(io_out)?;
    Ok(EXIT_OK)
}

fn validate(a: ValidateArgs, out: &mut dyn Write) -> Result<i32> {
    let manifest = datasetgen::load_dataset(&a.dataset)?;
    let report = datasetgen::validate_dataset(&manifest);
    for f in report.failures() {
        writeln!(out, "FAIL\t{}\t{}", f.prefix, f.detail).map_err(io_out)?;
    }
    writeln!(
        out,
        "{}: {}/{} entries valid",
        report.version,
        report.passed(),
        report.checks.len()
    )
    .map_err(io_out)?;
    Ok(if report.all_passed() { EXIT_OK } else { EXIT_FAILURE })
}

/// Entry point used by the binary.
pub fn main_exit_code() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
