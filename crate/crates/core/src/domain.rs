//! Shared domain types: conversion tasks, attempt records, the failure
//! taxonomy and run configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of characters kept in [`AttemptRecord::detail`].
pub const DETAIL_LIMIT: usize = 2000;

/// The four dataset versions, ordered by task complexity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetVersion {
    #[serde(rename = "v1")]
    V1,
    #[serde(rename = "v2")]
    V2,
    #[serde(rename = "v3")]
    V3,
    #[serde(rename = "v4")]
    V4,
}

impl DatasetVersion {
    pub const ALL: [DatasetVersion; 4] = [Self::V1, Self::V2, Self::V3, Self::V4];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::V1 => "v1",
            Self::V2 => "v2",
            Self::V3 => "v3",
            Self::V4 => "v4",
        }
    }
}

impl fmt::Display for DatasetVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetVersion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "v1" | "1" => Ok(Self::V1),
            "v2" | "2" => Ok(Self::V2),
            "v3" | "3" => Ok(Self::V3),
            "v4" | "4" => Ok(Self::V4),
            other => Err(Error::invalid(format!("unknown dataset version {other:?}"))),
        }
    }
}

/// Conversion strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    /// The model emits the converted document itself.
    Direct,
    /// The model emits a conversion module that is executed in the sandbox.
    Codegen,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Direct => "DIRECT",
            Self::Codegen => "CODEGEN",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(Self::Direct),
            "codegen" => Ok(Self::Codegen),
            other => Err(Error::invalid(format!("unknown strategy {other:?}"))),
        }
    }
}

/// One interoperability job.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversionTask {
    pub entry_id: String,
    /// Document in the unknown source representation.
    pub input_text: String,
    /// Example document in the known target representation.
    pub target_example: String,
    /// Ground truth. Present in harness mode, absent in gateway mode.
    pub expected_text: Option<String>,
}

impl ConversionTask {
    /// A gateway-mode task (no ground truth).
    pub fn gateway(
        entry_id: impl Into<String>,
        input_text: impl Into<String>,
        target_example: impl Into<String>,
    ) -> Result<Self> {
        Self::build(entry_id.into(), input_text.into(), target_example.into(), None)
    }

    /// A harness-mode task carrying the expected output.
    pub fn harness(
        entry_id: impl Into<String>,
        input_text: impl Into<String>,
        target_example: impl Into<String>,
        expected_text: impl Into<String>,
    ) -> Result<Self> {
        Self::build(
            entry_id.into(),
            input_text.into(),
            target_example.into(),
            Some(expected_text.into()),
        )
    }

    fn build(
        entry_id: String,
        input_text: String,
        target_example: String,
        expected_text: Option<String>,
    ) -> Result<Self> {
        if input_text.is_empty() {
            return Err(Error::invalid("conversion task input_text is empty"));
        }
        if target_example.is_empty() {
            return Err(Error::invalid("conversion task target_example is empty"));
        }
        Ok(Self {
            entry_id,
            input_text,
            target_example,
            expected_text,
        })
    }

    pub fn is_harness_mode(&self) -> bool {
        self.expected_text.is_some()
    }
}

/// Why an attempt failed. Every failed attempt carries exactly one cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureCause {
    #[serde(rename = "LLM_RUNTIME")]
    LlmRuntimeError,
    #[serde(rename = "LLM_LENGTH_STOP")]
    LlmLengthStop,
    #[serde(rename = "HTTP_TIMEOUT")]
    HttpTimeout,
    #[serde(rename = "JSON_SYNTAX")]
    JsonSyntaxError,
    #[serde(rename = "DATA_MISMATCH")]
    DataMismatch,
    #[serde(rename = "CODE_COMPILE")]
    CodeCompilationError,
    #[serde(rename = "CODE_EXECUTE")]
    CodeExecutionError,
    #[serde(rename = "EMPTY_DATA")]
    EmptyData,
}

impl FailureCause {
    pub const ALL: [FailureCause; 8] = [
        Self::LlmRuntimeError,
        Self::LlmLengthStop,
        Self::HttpTimeout,
        Self::JsonSyntaxError,
        Self::DataMismatch,
        Self::CodeCompilationError,
        Self::CodeExecutionError,
        Self::EmptyData,
    ];

    /// Causes reachable from the DIRECT pipeline.
    pub const DIRECT: [FailureCause; 6] = [
        Self::LlmRuntimeError,
        Self::LlmLengthStop,
        Self::HttpTimeout,
        Self::JsonSyntaxError,
        Self::DataMismatch,
        Self::EmptyData,
    ];

    /// The CSV label.
    pub fn code(self) -> &'static str {
        match self {
            Self::LlmRuntimeError => "LLM_RUNTIME",
            Self::LlmLengthStop => "LLM_LENGTH_STOP",
            Self::HttpTimeout => "HTTP_TIMEOUT",
            Self::JsonSyntaxError => "JSON_SYNTAX",
            Self::DataMismatch => "DATA_MISMATCH",
            Self::CodeCompilationError => "CODE_COMPILE",
            Self::CodeExecutionError => "CODE_EXECUTE",
            Self::EmptyData => "EMPTY_DATA",
        }
    }

    /// Human-readable description used in failure reports.
    pub fn describe(self) -> &'static str {
        match self {
            Self::LlmRuntimeError => "Runtime exception when calling the LLM",
            Self::LlmLengthStop => "LLM exception (completion stopped abnormally: length)",
            Self::HttpTimeout => "HTTP timeout",
            Self::JsonSyntaxError => "JSON syntax exception",
            Self::DataMismatch => "JSON data mismatches expected",
            Self::CodeCompilationError => "Code compilation exception",
            Self::CodeExecutionError => "Code execution exception",
            Self::EmptyData => "Data is empty",
        }
    }
}

impl fmt::Display for FailureCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FailureCause {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.code() == s)
            .ok_or_else(|| Error::invalid(format!("unknown failure cause {s:?}")))
    }
}

/// Stage of a conversion pipeline at which an error surfaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PipelineStage {
    LlmCall,
    Extraction,
    Compile,
    Execute,
    Parse,
    Compare,
}

/// An unclassified error as reported by a backend, the sandbox or a checker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawError {
    /// The backend stopped generation with the given reason.
    StopReason(String),
    /// Connection-level failure.
    Transport(String),
    /// A deadline was exceeded.
    Timeout(String),
    /// The stage produced nothing but whitespace.
    Empty,
    /// Any other error message.
    Message(String),
}

impl RawError {
    fn message(&self) -> String {
        match self {
            Self::StopReason(r) => format!("Completion stopped abnormally: {r}"),
            Self::Transport(m) | Self::Timeout(m) | Self::Message(m) => m.clone(),
            Self::Empty => "Data is empty".to_string(),
        }
    }
}

/// Maps a stage/error pair onto the failure taxonomy. Total.
pub fn classify_failure(stage: PipelineStage, raw: &RawError) -> FailureCause {
    use FailureCause as C;
    use PipelineStage as S;
    match (stage, raw) {
        (S::LlmCall, RawError::StopReason(r)) if r.eq_ignore_ascii_case("length") => {
            C::LlmLengthStop
        }
        (S::LlmCall, RawError::Timeout(_)) => C::HttpTimeout,
        (S::LlmCall, _) => C::LlmRuntimeError,
        (_, RawError::Empty) => C::EmptyData,
        (S::Extraction, _) | (S::Compile, _) => C::CodeCompilationError,
        (S::Execute, _) => C::CodeExecutionError,
        (S::Parse, _) => C::JsonSyntaxError,
        (S::Compare, _) => C::DataMismatch,
    }
}

/// A classified pipeline failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub cause: FailureCause,
    pub detail: String,
}

impl Failure {
    pub fn new(cause: FailureCause, detail: impl Into<String>) -> Self {
        Self {
            cause,
            detail: truncate_detail(&detail.into()),
        }
    }

    /// Classifies `raw` at `stage`, keeping its message as detail.
    pub fn classify(stage: PipelineStage, raw: RawError) -> Self {
        let cause = classify_failure(stage, &raw);
        Self::new(cause, raw.message())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.cause, self.detail)
    }
}

pub(crate) fn truncate_detail(s: &str) -> String {
    s.chars().take(DETAIL_LIMIT).collect()
}

/// Outcome of one conversion attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub dataset_version: DatasetVersion,
    pub entry_id: String,
    pub model_tag: String,
    pub strategy: Strategy,
    pub run_index: u32,
    pub success: bool,
    pub failure_cause: Option<FailureCause>,
    pub detail: String,
    pub duration_ms: u64,
    pub cache_hit: bool,
}

impl AttemptRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            dataset_version: self.dataset_version,
            entry_id: self.entry_id.clone(),
            model_tag: self.model_tag.clone(),
            strategy: self.strategy,
            run_index: self.run_index,
        }
    }

    /// Checks `success ⟺ failure_cause.is_none()` and `run_index ≥ 1`.
    pub fn is_consistent(&self) -> bool {
        self.success == self.failure_cause.is_none() && self.run_index >= 1
    }
}

/// Uniqueness key of an attempt within one experiment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey {
    pub dataset_version: DatasetVersion,
    pub model_tag: String,
    pub strategy: Strategy,
    pub entry_id: String,
    pub run_index: u32,
}

/// Experiment-wide parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub runs: u32,
    pub temperature: f64,
    /// The k in pass@k.
    pub k: u32,
    pub alpha: f64,
    /// Type II error rate; `1 - beta` is the power considered sufficient.
    pub beta: f64,
    pub sandbox_timeout_ms: u64,
    /// Relative reference to the backend configuration in use.
    pub backend: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            runs: 3,
            temperature: 0.9,
            k: 1,
            alpha: 0.05,
            beta: 0.2,
            sandbox_timeout_ms: 30_000,
            backend: String::new(),
        }
    }
}

impl RunConfig {
    /// Validates the configuration; `samples_per_entry` bounds `k`.
    pub fn validate(&self, samples_per_entry: u32) -> Result<()> {
        if self.runs < 1 {
            return Err(Error::invalid("runs must be at least 1"));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::invalid("temperature must be non-negative"));
        }
        let max_k = self.runs.saturating_mul(samples_per_entry.max(1));
        if self.k < 1 || self.k > max_k {
            return Err(Error::invalid(format!("k must lie in [1, {max_k}]")));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha must lie in (0, 1)"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("beta must lie in (0, 1)"));
        }
        if self.sandbox_timeout_ms == 0 {
            return Err(Error::invalid("sandbox timeout must be positive"));
        }
        Ok(())
    }
}
