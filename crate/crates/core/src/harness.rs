//! Experiment grids: running cells, persisting attempt records, summaries,
//! failure reports, CSV export and cell comparisons.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendConfig, CompletionBackend};
use crate::datasetgen::DatasetManifest;
use crate::domain::{AttemptRecord, ConversionTask, DatasetVersion, FailureCause, RecordKey, Strategy};
use crate::error::{Error, Result};
use crate::sandbox::ModuleExecutor;
use crate::stats::{self, ComparisonResult, Proportion};
use crate::strategies::{self, ModuleCache, PipelineOptions, PromptTemplate};

pub const RECORDS_EXT: &str = "jsonl";
pub const META_SUFFIX: &str = ".meta.json";

pub const RECORDS_CSV_HEADER: [&str; 10] = [
    "dataset_version",
    "entry_id",
    "model_tag",
    "strategy",
    "run",
    "success",
    "failure_cause",
    "detail",
    "duration_ms",
    "cache_hit",
];

/// Identifies one cell of the grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub dataset_version: DatasetVersion,
    pub model_tag: String,
    pub strategy: Strategy,
}

impl CellKey {
    pub fn new(dataset_version: DatasetVersion, model_tag: impl Into<String>, strategy: Strategy) -> Self {
        Self {
            dataset_version,
            model_tag: model_tag.into(),
            strategy,
        }
    }

    /// File stem `<version>__<model>__<strategy>`; characters outside
    /// `[A-Za-z0-9._-]` in the model tag are percent-encoded.
    pub fn file_stem(&self) -> String {
        let mut model = String::new();
        for b in self.model_tag.bytes() {
            if b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-') {
                model.push(b as char);
            } else {
                model.push_str(&format!("%{b:02X}"));
            }
        }
        format!(
            "{}__{}__{}",
            self.dataset_version,
            model,
            self.strategy.as_str().to_lowercase()
        )
    }

    pub fn records_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.{RECORDS_EXT}", self.file_stem()))
    }

    pub fn meta_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}{META_SUFFIX}", self.file_stem()))
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}",
            self.dataset_version,
            self.model_tag,
            self.strategy.as_str().to_lowercase()
        )
    }
}

/// Parses `version:model:strategy`; the model tag may itself contain `:`.
impl FromStr for CellKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("cell {s:?} is not version:model:strategy"));
        let (version, rest) = s.split_once(':').ok_or_else(bad)?;
        let (model, strategy) = rest.rsplit_once(':').ok_or_else(bad)?;
        if model.is_empty() {
            return Err(bad());
        }
        Ok(Self::new(version.parse()?, model, strategy.parse()?))
    }
}

/// Per-cell metadata written next to the records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellMeta {
    pub dataset_version: DatasetVersion,
    pub model_tag: String,
    pub strategy: Strategy,
    pub runs: u32,
    pub entries: usize,
    pub prompt_version: String,
}

impl CellMeta {
    pub fn key(&self) -> CellKey {
        CellKey::new(self.dataset_version, self.model_tag.clone(), self.strategy)
    }
}

pub type BackendFactory =
    Arc<dyn Fn(&DatasetManifest, Strategy) -> Result<Arc<dyn CompletionBackend>> + Send + Sync>;

/// A model under test: its tag and how to obtain a backend per cell.
#[derive(Clone)]
pub struct GridBackend {
    pub model_tag: String,
    pub factory: BackendFactory,
}

impl GridBackend {
    pub fn from_config(config: BackendConfig) -> Self {
        let model_tag = config.model_tag.clone();
        Self {
            model_tag,
            factory: Arc::new(move |manifest, strategy| config.build(manifest, strategy)),
        }
    }

    pub fn custom(
        model_tag: impl Into<String>,
        factory: impl Fn(&DatasetManifest, Strategy) -> Result<Arc<dyn CompletionBackend>>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        Self {
            model_tag: model_tag.into(),
            factory: Arc::new(factory),
        }
    }
}

impl fmt::Debug for GridBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridBackend")
            .field("model_tag", &self.model_tag)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub datasets: Vec<DatasetManifest>,
    pub strategies: Vec<Strategy>,
    pub backends: Vec<GridBackend>,
    pub runs: u32,
    pub results_dir: PathBuf,
}

impl ExperimentGrid {
    pub fn total_attempts(&self) -> usize {
        let entries: usize = self.datasets.iter().map(|d| d.entries.len()).sum();
        entries * self.strategies.len() * self.backends.len() * self.runs as usize
    }
}

/// Execution settings shared by every cell.
#[derive(Clone, Default)]
pub struct GridOptions {
    /// Worker threads for attempts within a cell; 0 uses the rayon default.
    pub jobs: usize,
    pub pipeline: PipelineOptions,
    /// Templates override; the built-in ones are used when absent.
    pub direct_template: Option<PromptTemplate>,
    pub codegen_template: Option<PromptTemplate>,
    /// Required for CODEGEN cells.
    pub executor: Option<Arc<dyn ModuleExecutor>>,
    /// Shares validated modules across attempts. Off by default so every
    /// attempt is independent.
    pub cache: Option<Arc<ModuleCache>>,
}

impl GridOptions {
    pub fn template(&self, strategy: Strategy) -> PromptTemplate {
        let custom = match strategy {
            Strategy::Direct => &self.direct_template,
            Strategy::Codegen => &self.codegen_template,
        };
        custom.clone().unwrap_or_else(|| PromptTemplate::builtin(strategy))
    }
}

/// What happened while running one cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellRun {
    pub key: CellKey,
    pub attempted: usize,
    pub skipped: usize,
    pub backend_calls: u64,
}

/// Runs every cell of the grid, cells in sequence, attempts within a cell in
/// parallel. Existing records are kept and their keys skipped.
pub fn run_grid(grid: &ExperimentGrid, options: &GridOptions) -> Result<Vec<CellRun>> {
    if grid.runs < 1 {
        return Err(Error::invalid("runs must be at least 1"));
    }
    let mut out = Vec::new();
    for backend in &grid.backends {
        for manifest in &grid.datasets {
            for &strategy in &grid.strategies {
                let instance = (backend.factory)(manifest, strategy)?;
                out.push(run_cell(
                    manifest,
                    strategy,
                    &backend.model_tag,
                    instance.as_ref(),
                    grid.runs,
                    &grid.results_dir,
                    options,
                )?);
            }
        }
    }
    Ok(out)
}

/// Runs a single cell against an already constructed backend.
pub fn run_cell(
    manifest: &DatasetManifest,
    strategy: Strategy,
    model_tag: &str,
    backend: &dyn CompletionBackend,
    runs: u32,
    results_dir: &Path,
    options: &GridOptions,
) -> Result<CellRun> {
    if strategy == Strategy::Codegen && options.executor.is_none() {
        return Err(Error::invalid("CODEGEN cells need a module executor"));
    }
    fs::create_dir_all(results_dir).map_err(|e| Error::io(results_dir, e))?;
    let key = CellKey::new(manifest.version, model_tag, strategy);
    let template = options.template(strategy);
    let meta = CellMeta {
        dataset_version: manifest.version,
        model_tag: model_tag.to_string(),
        strategy,
        runs,
        entries: manifest.entries.len(),
        prompt_version: template.version_tag.clone(),
    };
    let meta_path = key.meta_path(results_dir);
    let meta_json = serde_json::to_string_pretty(&meta)? + "\n";
    fs::write(&meta_path, meta_json).map_err(|e| Error::io(&meta_path, e))?;

    let records_path = key.records_path(results_dir);
    let done: HashSet<RecordKey> = recover_records(&records_path)?
        .into_iter()
        .map(|r| r.key())
        .collect();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&records_path)
        .map_err(|e| Error::io(&records_path, e))?;
    let writer = Mutex::new(BufWriter::new(file));

    let pending: Vec<(u32, usize)> = (1..=runs)
        .flat_map(|run| (0..manifest.entries.len()).map(move |i| (run, i)))
        .filter(|&(run, i)| {
            !done.contains(&RecordKey {
                dataset_version: manifest.version,
                model_tag: model_tag.to_string(),
                strategy,
                entry_id: manifest.entries[i].prefix.clone(),
                run_index: run,
            })
        })
        .collect();
    let skipped = (runs as usize * manifest.entries.len()) - pending.len();
    let backend_calls = AtomicU64::new(0);

    let attempt = |&(run, i): &(u32, usize)| -> Result<()> {
        let entry = &manifest.entries[i];
        let task = ConversionTask::harness(
            entry.prefix.clone(),
            entry.input_text.clone(),
            manifest.target_text.clone(),
            entry.expected_text.clone(),
        )?;
        let call_index = Some(u64::from(run));
        let outcome = match strategy {
            Strategy::Direct => {
                strategies::convert_direct(&task, backend, &template, &options.pipeline, call_index)
            }
            Strategy::Codegen => strategies::convert_codegen(
                &task,
                backend,
                &template,
                options.executor.as_deref().expect("checked above"),
                options.cache.as_deref(),
                &options.pipeline,
                call_index,
            ),
        };
        backend_calls.fetch_add(u64::from(outcome.backend_calls), Ordering::Relaxed);
        let record = outcome.to_record(manifest.version, &entry.prefix, model_tag, run);
        let line = serde_json::to_string(&record)? + "\n";
        let mut w = writer.lock().expect("record writer poisoned");
        w.write_all(line.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&records_path, e))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| pending.par_iter().try_for_each(attempt))?;

    Ok(CellRun {
        key,
        attempted: pending.len(),
        skipped,
        backend_calls: backend_calls.into_inner(),
    })
}

/// Reads a records file for resumption, dropping a torn final line left by
/// an interrupted write.
fn recover_records(path: &Path) -> Result<Vec<AttemptRecord>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let (records, torn_at) = parse_records(&text, path)?;
    if let Some(len) = torn_at {
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        f.set_len(len as u64).map_err(|e| Error::io(path, e))?;
    }
    Ok(records)
}

/// Parses JSON lines. Returns the byte length to keep when the final line is
/// an unterminated fragment.
fn parse_records(text: &str, path: &Path) -> Result<(Vec<AttemptRecord>, Option<usize>)> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<AttemptRecord>(line) {
            Ok(r) => {
                if !r.is_consistent() {
                    return Err(Error::Dataset(format!(
                        "{}: inconsistent record at byte {start}",
                        path.display()
                    )));
                }
                if !seen.insert(r.key()) {
                    return Err(Error::Dataset(format!(
                        "{}: duplicate record for {} run {}",
                        path.display(),
                        r.entry_id,
                        r.run_index
                    )));
                }
                records.push(r);
            }
            Err(_) if !line.ends_with('\n') => return Ok((records, Some(start))),
            Err(e) => {
                return Err(Error::Dataset(format!(
                    "{}: bad record at byte {start}: {e}",
                    path.display()
                )))
            }
        }
    }
    Ok((records, None))
}

/// Every record under `dir`, sorted by key.
pub fn load_records(dir: &Path) -> Result<Vec<AttemptRecord>> {
    let mut records = Vec::new();
    for path in files_with_suffix(dir, &format!(".{RECORDS_EXT}"))? {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        records.extend(parse_records(&text, &path)?.0);
    }
    records.sort_by_key(AttemptRecord::key);
    if let Some(w) = records.windows(2).find(|w| w[0].key() == w[1].key()) {
        return Err(Error::Dataset(format!(
            "duplicate record for {} run {} across files",
            w[0].entry_id, w[0].run_index
        )));
    }
    Ok(records)
}

fn load_metas(dir: &Path) -> Result<BTreeMap<CellKey, CellMeta>> {
    let mut out = BTreeMap::new();
    for path in files_with_suffix(dir, META_SUFFIX)? {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: CellMeta = serde_json::from_str(&text)?;
        out.insert(meta.key(), meta);
    }
    Ok(out)
}

fn files_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let matches = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(suffix));
        if matches && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Successes and trials of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunCount {
    pub run_index: u32,
    pub n: u64,
    pub c: u64,
}

impl RunCount {
    pub fn pass_at_1(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.c as f64 / self.n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub key: CellKey,
    pub runs: Vec<RunCount>,
    /// Set only for complete cells.
    pub average_pass_at_1: Option<f64>,
    pub complete: bool,
    pub histogram: BTreeMap<FailureCause, u64>,
}

impl CellSummary {
    pub fn per_run_pass_at_1(&self) -> Vec<f64> {
        self.runs.iter().map(RunCount::pass_at_1).collect()
    }

    /// Pooled successes over trials across all runs.
    pub fn pooled(&self) -> Result<Proportion> {
        let (c, n) = self
            .runs
            .iter()
            .fold((0, 0), |(c, n), r| (c + r.c, n + r.n));
        Proportion::new(c, n)
    }

    pub fn run(&self, run_index: u32) -> Option<&RunCount> {
        self.runs.iter().find(|r| r.run_index == run_index)
    }
}

/// Summaries of every cell with records or metadata under `dir`.
pub fn summarize(dir: &Path) -> Result<Vec<CellSummary>> {
    let records = load_records(dir)?;
    let metas = load_metas(dir)?;
    Ok(summarize_records(&records, &metas))
}

/// Summaries from an in-memory record set. A cell is complete when every
/// run `1..=runs` holds one record per entry; without metadata the runs seen
/// and the largest per-run count stand in for the expected shape.
pub fn summarize_records(
    records: &[AttemptRecord],
    metas: &BTreeMap<CellKey, CellMeta>,
) -> Vec<CellSummary> {
    let mut cells: BTreeMap<CellKey, Vec<&AttemptRecord>> =
        metas.keys().map(|k| (k.clone(), Vec::new())).collect();
    for r in records {
        cells
            .entry(CellKey::new(r.dataset_version, r.model_tag.clone(), r.strategy))
            .or_default()
            .push(r);
    }
    cells
        .into_iter()
        .map(|(key, recs)| {
            let mut per_run: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
            let mut histogram = BTreeMap::new();
            for r in &recs {
                let slot = per_run.entry(r.run_index).or_default();
                slot.0 += 1;
                if r.success {
                    slot.1 += 1;
                }
                if let Some(cause) = r.failure_cause {
                    *histogram.entry(cause).or_insert(0u64) += 1;
                }
            }
            let (expected_runs, expected_n) = match metas.get(&key) {
                Some(m) => (m.runs, m.entries as u64),
                None => (
                    per_run.keys().copied().max().unwrap_or(0),
                    per_run.values().map(|v| v.0).max().unwrap_or(0),
                ),
            };
            let runs: Vec<RunCount> = (1..=expected_runs)
                .map(|run_index| {
                    let (n, c) = per_run.get(&run_index).copied().unwrap_or((0, 0));
                    RunCount { run_index, n, c }
                })
                .collect();
            let complete = expected_n > 0
                && !runs.is_empty()
                && runs.iter().all(|r| r.n == expected_n)
                && per_run.keys().all(|r| (1..=expected_runs).contains(r));
            let average_pass_at_1 = complete.then(|| {
                runs.iter().map(RunCount::pass_at_1).sum::<f64>() / runs.len() as f64
            });
            CellSummary {
                key,
                runs,
                average_pass_at_1,
                complete,
                histogram,
            }
        })
        .collect()
}

/// One row of a failure report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureShare {
    pub cause: FailureCause,
    pub count: u64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureReport {
    pub total: u64,
    pub rows: Vec<FailureShare>,
}

/// Failure causes over failed attempts, most frequent first.
pub fn failure_report(records: &[AttemptRecord], strategy: Option<Strategy>) -> FailureReport {
    let mut counts: BTreeMap<FailureCause, u64> = BTreeMap::new();
    for r in records {
        if strategy.is_some_and(|s| s != r.strategy) {
            continue;
        }
        if let Some(cause) = r.failure_cause {
            *counts.entry(cause).or_default() += 1;
        }
    }
    let total: u64 = counts.values().sum();
    let mut rows: Vec<FailureShare> = counts
        .into_iter()
        .map(|(cause, count)| FailureShare {
            cause,
            count,
            percent: 100.0 * count as f64 / total as f64,
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then(a.cause.cmp(&b.cause)));
    FailureReport { total, rows }
}

/// Writes attempt records with the fixed column layout, sorted by cell,
/// entry and run.
pub fn export_records_csv(records: &[AttemptRecord], path: &Path) -> Result<()> {
    let mut sorted: Vec<&AttemptRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.key());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RECORDS_CSV_HEADER)?;
    for r in sorted {
        w.write_record([
            r.dataset_version.as_str(),
            &r.entry_id,
            &r.model_tag,
            r.strategy.as_str(),
            &r.run_index.to_string(),
            if r.success { "SUCCESS" } else { "FAILURE" },
            r.failure_cause.map_or("", FailureCause::code),
            &r.detail,
            &r.duration_ms.to_string(),
            if r.cache_hit { "true" } else { "false" },
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const SUMMARY_CSV_HEADER: [&str; 9] = [
    "dataset_version",
    "model_tag",
    "strategy",
    "runs",
    "n",
    "c",
    "pass1_per_run",
    "average_pass1",
    "complete",
];

pub fn export_summaries_csv(summaries: &[CellSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_CSV_HEADER)?;
    for s in summaries {
        let pooled = s.runs.iter().fold((0, 0), |(n, c), r| (n + r.n, c + r.c));
        let per_run = s
            .per_run_pass_at_1()
            .iter()
            .map(|p| format!("{p:.7}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            s.key.dataset_version.as_str(),
            &s.key.model_tag,
            s.key.strategy.as_str(),
            &s.runs.len().to_string(),
            &pooled.0.to_string(),
            &pooled.1.to_string(),
            &per_run,
            &s.average_pass_at_1.map_or(String::new(), |a| format!("{a:.7}")),
            if s.complete { "true" } else { "false" },
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn require_complete(s: &CellSummary) -> Result<()> {
    if s.complete {
        Ok(())
    } else {
        Err(Error::invalid(format!("cell {} is incomplete", s.key)))
    }
}

/// Compares two complete cells on pooled counts.
pub fn compare_cells(
    a: &CellSummary,
    b: &CellSummary,
    alpha: f64,
    corrected: bool,
) -> Result<ComparisonResult> {
    require_complete(a)?;
    require_complete(b)?;
    stats::compare_proportions(a.pooled()?, b.pooled()?, alpha, corrected)
}

/// Compares single runs, within one cell or across cells.
pub fn compare_runs(
    a: &CellSummary,
    run_a: u32,
    b: &CellSummary,
    run_b: u32,
    alpha: f64,
    corrected: bool,
) -> Result<ComparisonResult> {
    require_complete(a)?;
    require_complete(b)?;
    let pick = |s: &CellSummary, run: u32| {
        s.run(run)
            .ok_or_else(|| Error::invalid(format!("cell {} has no run {run}", s.key)))
            .and_then(|r| Proportion::new(r.c, r.n))
    };
    stats::compare_proportions(pick(a, run_a)?, pick(b, run_b)?, alpha, corrected)
}

/// The distinct cell keys present in a record set.
pub fn cell_keys(records: &[AttemptRecord]) -> BTreeSet<CellKey> {
    records
        .iter()
        .map(|r| CellKey::new(r.dataset_version, r.model_tag.clone(), r.strategy))
        .collect()
}

/// Writes a records file; used for fixtures and for merging result sets.
pub fn write_records(path: &Path, records: &[AttemptRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r)? + "\n";
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(run: u32, entry: &str, ok: bool) -> AttemptRecord {
        AttemptRecord {
            dataset_version: DatasetVersion::V1,
            entry_id: entry.into(),
            model_tag: "m".into(),
            strategy: Strategy::Direct,
            run_index: run,
            success: ok,
            failure_cause: (!ok).then_some(FailureCause::DataMismatch),
            detail: if ok { String::new() } else { "features[0]".into() },
            duration_ms: 1,
            cache_hit: false,
        }
    }

    fn counts(c: &[u64], n: u64) -> Vec<AttemptRecord> {
        let mut out = Vec::new();
        for (run, &ok) in c.iter().enumerate() {
            for i in 0..n {
                out.push(record(run as u32 + 1, &format!("{i:03}"), i < ok));
            }
        }
        out
    }

    #[test]
    fn cell_key_round_trip() {
        let k: CellKey = "v3:qwen2.5-coder:32b:codegen".parse().unwrap();
        assert_eq!(k.model_tag, "qwen2.5-coder:32b");
        assert_eq!(k.strategy, Strategy::Codegen);
        assert_eq!(k.to_string(), "v3:qwen2.5-coder:32b:codegen");
        assert_eq!(k.file_stem(), "v3__qwen2.5-coder%3A32b__codegen");
        assert!("v1:direct".parse::<CellKey>().is_err());
        assert!("v9:m:direct".parse::<CellKey>().is_err());
    }

    #[test]
    fn average_of_runs() {
        let s = &summarize_records(&counts(&[222, 221, 221], 222), &BTreeMap::new())[0];
        assert!(s.complete);
        assert!((s.average_pass_at_1.unwrap() - 0.996_996_996_996_997).abs() < 1e-12);
        assert_eq!(s.pooled().unwrap(), Proportion { c: 664, n: 666 });
        let s = &summarize_records(&counts(&[198, 203, 195], 222), &BTreeMap::new())[0];
        assert!((s.average_pass_at_1.unwrap() - 0.894_894_9).abs() < 1e-7);
        let s = &summarize_records(&counts(&[0, 0, 0], 222), &BTreeMap::new())[0];
        assert_eq!(s.average_pass_at_1, Some(0.0));
        assert_eq!(s.histogram[&FailureCause::DataMismatch], 666);
    }

    #[test]
    fn incomplete_cells_have_no_average() {
        let mut recs = counts(&[3, 3], 3);
        recs.pop();
        let s = &summarize_records(&recs, &BTreeMap::new())[0];
        assert!(!s.complete);
        assert_eq!(s.average_pass_at_1, None);
        assert!(compare_cells(s, s, 0.05, true).is_err());
    }

    #[test]
    fn failure_report_orders_by_count() {
        let mut recs = counts(&[1], 4);
        recs[1].failure_cause = Some(FailureCause::EmptyData);
        let r = failure_report(&recs, None);
        assert_eq!(r.total, 3);
        assert_eq!(r.rows[0].cause, FailureCause::DataMismatch);
        assert_eq!(r.rows[0].count, 2);
        assert!(failure_report(&counts(&[4], 4), None).rows.is_empty());
        assert_eq!(failure_report(&recs, Some(Strategy::Codegen)).total, 0);
    }

    #[test]
    fn torn_final_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let good = serde_json::to_string(&record(1, "a", true)).unwrap() + "\n";
        fs::write(&path, format!("{good}{{\"dataset_ver")).unwrap();
        let recs = recover_records(&path).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(fs::read_to_string(&path).unwrap(), good);
        fs::write(&path, format!("garbage\n{good}")).unwrap();
        assert!(recover_records(&path).is_err());
    }
}
