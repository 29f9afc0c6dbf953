//! Completion backends.
//!
//! Every backend answers one prompt at a time with no shared conversation
//! state. [`HttpBackend`] talks to an Ollama-compatible `/api/generate`
//! endpoint; the other kinds are deterministic stand-ins used for tests and
//! desk-scale evaluation:
//!
//! - [`ScriptedBackend`] replays canned responses keyed by prompt hash.
//! - [`OracleBackend`] answers correctly for every entry of a dataset.
//! - [`NoisyBackend`] wraps another backend and corrupts a seeded fraction
//!   of its answers, logging each injected corruption.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasetgen::DatasetManifest;
use crate::domain::{RawError, Strategy};
use crate::error::{Error, Result};
use crate::geoconv::{convert_provider_text, ProviderBoundaryDoc};
use crate::sync::Semaphore;

/// Environment variable that may supply the HTTP base URL.
pub const BACKEND_URL_ENV: &str = "INTEROP_BACKEND_URL";

pub const DEFAULT_REQUEST_TIMEOUT_MS: u64 = 120_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    Done,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResult {
    pub text: String,
    pub stop_reason: StopReason,
    pub latency_ms: u64,
}

/// Backend error before classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompletionError {
    /// Connection dropped, refused or the response was unreadable.
    Transport(String),
    /// The request deadline passed.
    Timeout(String),
    /// The backend reported an error.
    Runtime(String),
}

impl CompletionError {
    pub fn into_raw(self) -> RawError {
        match self {
            Self::Transport(m) => RawError::Transport(m),
            Self::Timeout(m) => RawError::Timeout(m),
            Self::Runtime(m) => RawError::Message(m),
        }
    }
}

impl fmt::Display for CompletionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Transport(m) => write!(f, "transport error: {m}"),
            Self::Timeout(m) => write!(f, "timeout: {m}"),
            Self::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

/// One single-shot completion request.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    /// Position of this call in a repeated experiment (the run index). When
    /// absent, seeded backends count occurrences of the prompt instead.
    pub call_index: Option<u64>,
}

impl<'a> CompletionRequest<'a> {
    pub fn new(prompt: &'a str) -> Self {
        Self {
            prompt,
            call_index: None,
        }
    }

    pub fn with_call_index(prompt: &'a str, call_index: u64) -> Self {
        Self {
            prompt,
            call_index: Some(call_index),
        }
    }
}

pub type CompletionOutcome = std::result::Result<CompletionResult, CompletionError>;

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: CompletionRequest<'_>) -> CompletionOutcome;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Arc<T> {
    fn complete(&self, request: CompletionRequest<'_>) -> CompletionOutcome {
        (**self).complete(request)
    }
}

/// Hex SHA-256 of a prompt; the key for scripted responses.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Scripted,
    Oracle,
    Noisy,
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "http" => Ok(Self::Http),
            "scripted" => Ok(Self::Scripted),
            "oracle" => Ok(Self::Oracle),
            "noisy" => Ok(Self::Noisy),
            other => Err(Error::invalid(format!("unknown backend kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub model_tag: String,
    pub temperature: f64,
    pub request_timeout_ms: u64,
    /// Noisy kind: seed, corruption rate and mix. Wraps the oracle.
    pub seed: u64,
    pub error_rate: f64,
    pub failure_mix: FailureMix,
    /// Scripted kind: directory of `<prompt-hash>.txt` responses.
    pub response_dir: Option<PathBuf>,
    /// Concurrent in-flight requests per endpoint (http kind).
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Oracle,
            base_url: None,
            model_tag: "oracle".into(),
            temperature: 0.9,
            request_timeout_ms: DEFAULT_REQUEST_TIMEOUT_MS,
            seed: 0,
            error_rate: 0.0,
            failure_mix: FailureMix::default(),
            response_dir: None,
            max_in_flight: 1,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) {
            return Err(Error::invalid("temperature must be non-negative"));
        }
        match self.kind {
            BackendKind::Http => {
                if self.base_url.as_deref().is_none_or(str::is_empty) {
                    return Err(Error::invalid(format!(
                        "http backend needs a base URL (flag or {BACKEND_URL_ENV})"
                    )));
                }
                if self.model_tag.is_empty() {
                    return Err(Error::invalid("http backend needs a model tag"));
                }
            }
            BackendKind::Scripted if self.response_dir.is_none() => {
                return Err(Error::invalid("scripted backend needs a response directory"));
            }
            BackendKind::Noisy if !(0.0..=1.0).contains(&self.error_rate) => {
                return Err(Error::invalid("error rate must lie in [0, 1]"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Builds the backend for one dataset/strategy cell.
    pub fn build(
        &self,
        manifest: &DatasetManifest,
        strategy: Strategy,
    ) -> Result<Arc<dyn CompletionBackend>> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Http => Arc::new(HttpBackend::new(self)?),
            BackendKind::Scripted => Arc::new(ScriptedBackend::from_dir(
                self.response_dir.as_deref().expect("validated"),
            )?),
            BackendKind::Oracle => Arc::new(OracleBackend::new(manifest, strategy)),
            BackendKind::Noisy => Arc::new(NoisyBackend::new(
                OracleBackend::new(manifest, strategy),
                self.error_rate,
                self.seed,
                self.failure_mix.clone(),
            )?),
        })
    }
}

// ---------------------------------------------------------------------------
// HTTP (Ollama generate endpoint)

#[derive(Debug, Serialize)]
struct GenerateRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    stream: bool,
    options: GenerateOptions,
}

#[derive(Debug, Serialize)]
struct GenerateOptions {
    temperature: f64,
}

#[derive(Debug, Deserialize)]
struct GenerateResponse {
    #[serde(default)]
    response: String,
    #[serde(default)]
    done_reason: Option<String>,
    #[serde(default)]
    error: Option<String>,
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    temperature: f64,
    in_flight: Semaphore,
}

impl HttpBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self> {
        let base = cfg
            .base_url
            .clone()
            .filter(|u| !u.is_empty())
            .ok_or_else(|| Error::invalid("http backend needs a base URL"))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.request_timeout_ms))
            .build()
            .map_err(|e| Error::invalid(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint: format!("{}/api/generate", base.trim_end_matches('/')),
            model: cfg.model_tag.clone(),
            temperature: cfg.temperature,
            in_flight: Semaphore::new(cfg.max_in_flight),
        })
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: CompletionRequest<'_>) -> CompletionOutcome {
        let _permit = self.in_flight.acquire();
        let body = GenerateRequest {
            model: &self.model,
            prompt: request.prompt,
            stream: false,
            options: GenerateOptions {
                temperature: self.temperature,
            },
        };
        let started = Instant::now();
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                CompletionError::Timeout(e.to_string())
            } else {
                CompletionError::Transport(e.to_string())
            }
        };
        let resp = self.client.post(&self.endpoint).json(&body).send().map_err(classify)?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(classify)?;
        let latency_ms = started.elapsed().as_millis() as u64;
        let parsed: Option<GenerateResponse> = serde_json::from_slice(&bytes).ok();
        if !status.is_success() {
            let msg = parsed
                .and_then(|p| p.error)
                .unwrap_or_else(|| String::from_utf8_lossy(&bytes).into_owned());
            return Err(CompletionError::Runtime(format!("HTTP {status}: {msg}")));
        }
        let parsed = parsed.ok_or_else(|| {
            CompletionError::Transport(format!(
                "unreadable response body: {}",
                String::from_utf8_lossy(&bytes)
            ))
        })?;
        if let Some(err) = parsed.error {
            return Err(CompletionError::Runtime(err));
        }
        let stop_reason = match parsed.done_reason.as_deref() {
            Some("length") => StopReason::Length,
            Some("error") => StopReason::Error,
            _ => StopReason::Done,
        };
        Ok(CompletionResult {
            text: parsed.response,
            stop_reason,
            latency_ms,
        })
    }
}

// ---------------------------------------------------------------------------
// Scripted

/// Replays responses keyed by [`prompt_hash`].
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    responses: HashMap<String, String>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_response(mut self, prompt: &str, response: impl Into<String>) -> Self {
        self.responses.insert(prompt_hash(prompt), response.into());
        self
    }

    /// Loads every `<hash>.txt` file in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut responses = HashMap::new();
        for item in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = item.map_err(|e| Error::io(dir, e))?.path();
            let Some(hash) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".txt"))
            else {
                continue;
            };
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            responses.insert(hash.to_string(), text);
        }
        Ok(Self { responses })
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, request: CompletionRequest<'_>) -> CompletionOutcome {
        let hash = prompt_hash(request.prompt);
        self.responses
            .get(&hash)
            .map(|text| CompletionResult {
                text: text.clone(),
                stop_reason: StopReason::Done,
                latency_ms: 0,
            })
            .ok_or_else(|| CompletionError::Runtime(format!("no scripted response for {hash}")))
    }
}

// ---------------------------------------------------------------------------
// Oracle

/// Correct conversion module for the sandbox runner, `{VERSION}` replaced by
/// the dataset version. Uses only the Python standard library.
const ORACLE_MODULE: &str = r#"import json
from decimal import Decimal, localcontext

VERSION = "{VERSION}"
ACRES_PER_HECTARE = Decimal("2.471053814671653")


def _dump(value):
    if isinstance(value, dict):
        return "{" + ", ".join(json.dumps(k) + ": " + _dump(v) for k, v in value.items()) + "}"
    if isinstance(value, list):
        return "[" + ", ".join(_dump(v) for v in value) + "]"
    if isinstance(value, Decimal):
        return str(value)
    return json.dumps(value)


def _ring(ring):
    return [[p["lon"], p["lat"]] for p in ring["points"]]


def convert(text):
    doc = json.loads(text, parse_float=Decimal, parse_int=Decimal)
    features = []
    for boundary in doc["values"]:
        polygons = [[_ring(r) for r in poly["rings"]] for poly in boundary["multipolygons"] if poly["rings"]]
        if len(polygons) == 1:
            geometry = {"type": "Polygon", "coordinates": polygons[0]}
        else:
            geometry = {"type": "MultiPolygon", "coordinates": polygons}
        area = boundary["area"]["valueAsDouble"]
        props = {}
        if VERSION != "v1":
            props["id"] = boundary["id"]
        if VERSION == "v3":
            props["area_ha"] = area
        if VERSION == "v4":
            with localcontext() as ctx:
                ctx.prec = 200
                props["area_acres"] = area * ACRES_PER_HECTARE
        features.append({"type": "Feature", "properties": props, "geometry": geometry})
    return _dump({"type": "FeatureCollection", "features": features})
"#;

/// Source of the known-correct conversion module for `version`.
pub fn oracle_module_source(version: crate::domain::DatasetVersion) -> String {
    ORACLE_MODULE.replace("{VERSION}", version.as_str())
}

/// Answers every prompt that embeds one of the manifest's inputs correctly.
pub struct OracleBackend {
    version: crate::domain::DatasetVersion,
    strategy: Strategy,
    /// Boundary id → input texts carrying it.
    inputs: HashMap<String, Vec<String>>,
}

impl OracleBackend {
    pub fn new(manifest: &DatasetManifest, strategy: Strategy) -> Self {
        let mut inputs: HashMap<String, Vec<String>> = HashMap::new();
        for e in &manifest.entries {
            if let Ok(doc) = ProviderBoundaryDoc::parse(&e.input_text) {
                for b in &doc.values {
                    inputs.entry(b.id.clone()).or_default().push(e.input_text.clone());
                }
            }
        }
        Self {
            version: manifest.version,
            strategy,
            inputs,
        }
    }

    fn embedded_input<'a>(&'a self, prompt: &str) -> Option<&'a str> {
        let mut rest = prompt;
        while let Some(pos) = rest.find("\"id\"") {
            rest = &rest[pos + 4..];
            let Some(open) = rest.find('"') else { break };
            let after = &rest[open + 1..];
            let Some(close) = after.find('"') else { break };
            if let Some(candidates) = self.inputs.get(&after[..close]) {
                if let Some(found) = candidates.iter().find(|c| prompt.contains(c.trim())) {
                    return Some(found);
                }
            }
        }
        None
    }
}

impl CompletionBackend for OracleBackend {
    fn complete(&self, request: CompletionRequest<'_>) -> CompletionOutcome {
        let input = self.embedded_input(request.prompt).ok_or_else(|| {
            CompletionError::Runtime("prompt embeds no known dataset input".into())
        })?;
        let text = match self.strategy {
            Strategy::Direct => convert_provider_text(input, self.version)
                .map_err(|e| CompletionError::Runtime(e.to_string()))?,
            Strategy::Codegen => format!(
                "Here is the conversion module.\n\n```python\n{}```\n",
                oracle_module_source(self.version)
            ),
        };
        Ok(CompletionResult {
            text,
            stop_reason: StopReason::Done,
            latency_ms: 0,
        })
    }
}

// ---------------------------------------------------------------------------
// Noisy

/// How a response is corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionMode {
    /// Cut the text in half; yields a JSON syntax failure.
    Truncate,
    /// Alter the first numeric value; yields a data mismatch.
    WrongValue,
    /// Return an empty document.
    Empty,
    /// Report an abnormal `length` stop.
    LengthStop,
    /// Fail with a transport error.
    TransportError,
}

impl CorruptionMode {
    pub const ALL: [CorruptionMode; 5] = [
        Self::Truncate,
        Self::WrongValue,
        Self::Empty,
        Self::LengthStop,
        Self::TransportError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Truncate => "truncate",
            Self::WrongValue => "wrong-value",
            Self::Empty => "empty",
            Self::LengthStop => "length-stop",
            Self::TransportError => "transport-error",
        }
    }
}

impl FromStr for CorruptionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "truncate" => Ok(Self::Truncate),
            "wrong-value" | "wrong" => Ok(Self::WrongValue),
            "empty" => Ok(Self::Empty),
            "length-stop" | "length" => Ok(Self::LengthStop),
            "transport-error" | "transport" => Ok(Self::TransportError),
            other => Err(Error::invalid(format!("unknown corruption mode {other:?}"))),
        }
    }
}

/// Relative weights of the corruption modes.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureMix {
    weights: Vec<(CorruptionMode, f64)>,
}

impl Default for FailureMix {
    /// Equal weights over all modes.
    fn default() -> Self {
        Self {
            weights: CorruptionMode::ALL.iter().map(|m| (*m, 1.0)).collect(),
        }
    }
}

impl FailureMix {
    pub fn new(weights: impl IntoIterator<Item = (CorruptionMode, f64)>) -> Result<Self> {
        let weights: Vec<_> = weights.into_iter().filter(|(_, w)| *w != 0.0).collect();
        if weights.iter().any(|(_, w)| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("failure mix weights must be positive"));
        }
        if weights.is_empty() {
            return Err(Error::invalid("failure mix is empty"));
        }
        Ok(Self { weights })
    }

    /// Absolute per-call corruption probabilities; returns the total rate
    /// and the normalized mix.
    pub fn from_rates(rates: &[(CorruptionMode, f64)]) -> Result<(f64, Self)> {
        let total: f64 = rates.iter().map(|(_, r)| r).sum();
        if !(0.0..=1.0).contains(&total) {
            return Err(Error::invalid(format!("corruption rates sum to {total}")));
        }
        Ok((total, Self::new(rates.iter().copied())?))
    }

    fn pick(&self, u: f64) -> CorruptionMode {
        let total: f64 = self.weights.iter().map(|(_, w)| w).sum();
        let mut acc = 0.0;
        for (mode, w) in &self.weights {
            acc += w / total;
            if u < acc {
                return *mode;
            }
        }
        self.weights.last().expect("non-empty").0
    }
}

impl FromStr for FailureMix {
    type Err = Error;

    /// Parses `mode=weight,mode=weight`.
    fn from_str(s: &str) -> Result<Self> {
        let weights = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|part| {
                let (mode, w) = part
                    .split_once('=')
                    .ok_or_else(|| Error::invalid(format!("expected mode=weight, got {part:?}")))?;
                let w: f64 = w
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad weight in {part:?}")))?;
                Ok((mode.parse()?, w))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights)
    }
}

/// One injected corruption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionEvent {
    pub prompt_hash: String,
    pub call_index: u64,
    pub mode: CorruptionMode,
}

pub struct NoisyBackend<B> {
    inner: B,
    error_rate: f64,
    seed: u64,
    mix: FailureMix,
    occurrences: Mutex<HashMap<String, u64>>,
    log: Mutex<Vec<CorruptionEvent>>,
}

impl<B: CompletionBackend> NoisyBackend<B> {
    pub fn new(inner: B, error_rate: f64, seed: u64, mix: FailureMix) -> Result<Self> {
        if !(0.0..=1.0).contains(&error_rate) {
            return Err(Error::invalid("error rate must lie in [0, 1]"));
        }
        Ok(Self {
            inner,
            error_rate,
            seed,
            mix,
            occurrences: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
        })
    }

    /// Corruptions injected so far, in call order.
    pub fn corruption_log(&self) -> Vec<CorruptionEvent> {
        self.log.lock().expect("log poisoned").clone()
    }

    /// The corruption (if any) for a prompt at a call index.
    pub fn decide(&self, hash: &str, call_index: u64) -> Option<CorruptionMode> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(hash.as_bytes());
        h.update(call_index.to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let roll: f64 = rng.random();
        (roll < self.error_rate).then(|| self.mix.pick(rng.random()))
    }
}

fn half(text: &str) -> String {
    let cut = text.char_indices().nth(text.chars().count() / 2).map_or(0, |(i, _)| i);
    text[..cut].to_string()
}

fn alter_first_number(text: &str) -> String {
    if let Ok(mut value) = serde_json::from_str::<serde_json::Value>(text) {
        if bump_first_number(&mut value) {
            return serde_json::to_string_pretty(&value).expect("value serializes");
        }
    }
    match text.char_indices().find(|(_, c)| c.is_ascii_digit()) {
        Some((i, c)) => {
            let replacement = if c == '9' { '1' } else { (c as u8 + 1) as char };
            format!("{}{}{}", &text[..i], replacement, &text[i + 1..])
        }
        None => format!("{text}0"),
    }
}

fn bump_first_number(v: &mut serde_json::Value) -> bool {
    use serde_json::Value;
    match v {
        Value::Number(n) => {
            let big = bigdecimal::BigDecimal::from_str(&n.to_string()).expect("json number");
            let bumped = (big + bigdecimal::BigDecimal::from(1)).to_plain_string();
            *n = serde_json::Number::from_str(&bumped).expect("decimal is a json number");
            true
        }
        Value::Array(items) => items.iter_mut().any(bump_first_number),
        Value::Object(map) => map.values_mut().any(bump_first_number),
        _ => false,
    }
}

impl<B: CompletionBackend> CompletionBackend for NoisyBackend<B> {
    fn complete(&self, request: CompletionRequest<'_>) -> CompletionOutcome {
        let hash = prompt_hash(request.prompt);
        let call_index = match request.call_index {
            Some(i) => i,
            None => {
                let mut occ = self.occurrences.lock().expect("occurrences poisoned");
                let slot = occ.entry(hash.clone()).or_insert(0);
                let i = *slot;
                *slot += 1;
                i
            }
        };
        let mode = self.decide(&hash, call_index);
        let mut result = self.inner.complete(request)?;
        let Some(mode) = mode else {
            return Ok(result);
        };
        self.log.lock().expect("log poisoned").push(CorruptionEvent {
            prompt_hash: hash,
            call_index,
            mode,
        });
        match mode {
            CorruptionMode::Truncate => result.text = half(&result.text),
            CorruptionMode::WrongValue => result.text = alter_first_number(&result.text),
            CorruptionMode::Empty => result.text.clear(),
            CorruptionMode::LengthStop => {
                result.text = half(&result.text);
                result.stop_reason = StopReason::Length;
            }
            CorruptionMode::TransportError => {
                return Err(CompletionError::Transport(
                    "connection reset by peer (injected)".into(),
                ))
            }
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_lookup() {
        let b = ScriptedBackend::new().with_response("p", "X");
        let r = b.complete(CompletionRequest::new("p")).unwrap();
        assert_eq!(r.text, "X");
        assert_eq!(r.stop_reason, StopReason::Done);
        assert!(matches!(
            b.complete(CompletionRequest::new("q")),
            Err(CompletionError::Runtime(_))
        ));
    }

    #[test]
    fn failure_mix_parsing() {
        let mix: FailureMix = "truncate=2,wrong-value=1".parse().unwrap();
        assert_eq!(mix.pick(0.0), CorruptionMode::Truncate);
        assert_eq!(mix.pick(0.66), CorruptionMode::Truncate);
        assert_eq!(mix.pick(0.67), CorruptionMode::WrongValue);
        assert!("bogus=1".parse::<FailureMix>().is_err());
        assert!("truncate=-1".parse::<FailureMix>().is_err());
        let (rate, _) = FailureMix::from_rates(&[
            (CorruptionMode::Truncate, 0.1),
            (CorruptionMode::Empty, 0.1),
        ])
        .unwrap();
        assert!((rate - 0.2).abs() < 1e-12);
    }

    #[test]
    fn wrong_value_changes_the_first_number() {
        let out = alter_first_number(r#"{"a": "x", "b": [10.5, 2]}"#);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["b"][0].to_string(), "11.5");
        assert_eq!(alter_first_number("def f(): return 9"), "def f(): return 1");
    }

    #[test]
    fn truncation_splits_on_char_boundary() {
        assert_eq!(half("abcd"), "ab");
        assert_eq!(half("ééé"), "é");
    }

    #[test]
    fn config_validation() {
        let mut cfg = BackendConfig {
            kind: BackendKind::Http,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.base_url = Some("http://localhost:11434".into());
        cfg.validate().unwrap();
        cfg.temperature = -1.0;
        assert!(cfg.validate().is_err());
        let cfg = BackendConfig {
            kind: BackendKind::Scripted,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn oracle_module_is_versioned() {
        let src = oracle_module_source(crate::domain::DatasetVersion::V4);
        assert!(src.contains("VERSION = \"v4\""));
        assert!(src.contains("def convert(text):"));
    }
}
