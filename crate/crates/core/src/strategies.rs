//! Prompt construction, response extraction and the DIRECT / CODEGEN
//! conversion pipelines.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use bigdecimal::BigDecimal;
use sha2::{Digest, Sha256};

use crate::backend::{CompletionBackend, CompletionRequest, StopReason};
use crate::domain::{
    AttemptRecord, ConversionTask, DatasetVersion, Failure, FailureCause, PipelineStage, RawError,
    Strategy,
};
use crate::equivalence::{self, CanonicalDoc};
use crate::error::{Error, Result};
use crate::sandbox::ModuleExecutor;

pub const INPUT_PLACEHOLDER: &str = "{INPUT}";
pub const TARGET_PLACEHOLDER: &str = "{TARGET_EXAMPLE}";

const DIRECT_TEMPLATE: &str = "\
You are a data conversion service. Convert the input document into the \
representation shown by the target example.
Keep every value exactly as written in the input unless the target \
representation requires a unit conversion. Include only the properties that \
appear in the target example.
Output only the converted document, no explanation.

Target example:
{TARGET_EXAMPLE}

Input document:
{INPUT}
";

const CODEGEN_TEMPLATE: &str = "\
Write a Python module that converts documents like the input document below \
into the representation shown by the target example.
Define a function named `convert` taking the raw input text (a string) and \
returning the converted text, using only the Python standard library. Keep \
every value exactly as written in the input unless the target \
representation requires a unit conversion. Include only the properties that \
appear in the target example.
Reply with the complete module in a single fenced code block.

Target example:
{TARGET_EXAMPLE}

Input document:
{INPUT}
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub strategy: Strategy,
    pub body: String,
    pub version_tag: String,
}

impl PromptTemplate {
    pub fn new(
        strategy: Strategy,
        body: impl Into<String>,
        version_tag: impl Into<String>,
    ) -> Result<Self> {
        let body = body.into();
        for ph in [INPUT_PLACEHOLDER, TARGET_PLACEHOLDER] {
            let n = body.matches(ph).count();
            if n != 1 {
                return Err(Error::invalid(format!(
                    "template must contain {ph} exactly once, found {n}"
                )));
            }
        }
        Ok(Self {
            strategy,
            body,
            version_tag: version_tag.into(),
        })
    }

    /// The shipped template for `strategy`.
    pub fn builtin(strategy: Strategy) -> Self {
        let (body, tag) = match strategy {
            Strategy::Direct => (DIRECT_TEMPLATE, "direct-v1"),
            Strategy::Codegen => (CODEGEN_TEMPLATE, "codegen-v1"),
        };
        Self::new(strategy, body, tag).expect("builtin templates are valid")
    }

    /// Loads `direct.txt` or `codegen.txt` from `dir`. The version tag is
    /// derived from the file content.
    pub fn load(dir: &Path, strategy: Strategy) -> Result<Self> {
        let path = dir.join(match strategy {
            Strategy::Direct => "direct.txt",
            Strategy::Codegen => "codegen.txt",
        });
        let body = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        let tag = format!("{}-{}", strategy.as_str().to_lowercase(), &digest[..12]);
        Self::new(strategy, body, tag)
    }
}

/// Substitutes both placeholders in one pass over the template.
pub fn build_prompt(template: &PromptTemplate, task: &ConversionTask) -> String {
    let body = &template.body;
    let mut spots = [
        (body.find(INPUT_PLACEHOLDER), INPUT_PLACEHOLDER, task.input_text.as_str()),
        (body.find(TARGET_PLACEHOLDER), TARGET_PLACEHOLDER, task.target_example.as_str()),
    ];
    spots.sort_by_key(|(pos, _, _)| *pos);
    let mut out = String::with_capacity(
        body.len() + task.input_text.len() + task.target_example.len(),
    );
    let mut cursor = 0;
    for (pos, placeholder, value) in spots {
        let pos = pos.expect("template invariant");
        out.push_str(&body[cursor..pos]);
        out.push_str(value);
        cursor = pos + placeholder.len();
    }
    out.push_str(&body[cursor..]);
    out
}

/// Fenced code blocks as `(label, content)`, in order. An unterminated final
/// fence runs to the end of the text.
fn fenced_blocks(text: &str) -> Vec<(&str, String)> {
    let mut blocks = Vec::new();
    let mut open: Option<(&str, Vec<&str>)> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        match (&mut open, trimmed.strip_prefix("```")) {
            (None, Some(label)) => open = Some((label.trim(), Vec::new())),
            (Some(_), Some(_)) => {
                let (label, lines) = open.take().expect("open fence");
                blocks.push((label, lines.join("\n")));
            }
            (Some((_, lines)), None) => lines.push(line),
            (None, None) => {}
        }
    }
    if let Some((label, lines)) = open {
        blocks.push((label, lines.join("\n")));
    }
    blocks
}

/// Byte range of the first `{` and its balanced closing brace, honoring
/// string literals.
fn balanced_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Pulls a JSON document out of a model response: the first fenced block if
/// it parses, else the first balanced `{...}`, else the trimmed response.
pub fn extract_json(response: &str) -> String {
    if let Some((_, block)) = fenced_blocks(response).into_iter().next() {
        if serde_json::from_str::<serde::de::IgnoredAny>(&block).is_ok() {
            return block.trim().to_string();
        }
    }
    if let Some(obj) = balanced_object(response) {
        return obj.to_string();
    }
    response.trim().to_string()
}

/// Pulls generated code out of a response: the first fenced block, or the
/// whole response when there are no fences.
pub fn extract_code(response: &str) -> std::result::Result<String, Failure> {
    let code = match fenced_blocks(response).into_iter().next() {
        Some((_, block)) => block,
        None => response.to_string(),
    };
    if code.trim().is_empty() {
        return Err(Failure::classify(
            PipelineStage::Extraction,
            RawError::Message("no code found".into()),
        ));
    }
    Ok(format!("{}\n", code.trim_end()))
}

fn collect_paths(v: &serde_json::Value, path: &mut String, out: &mut BTreeSet<String>) {
    use serde_json::Value;
    let label = match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(a) if a.is_empty() => "array",
        Value::Object(o) if o.is_empty() => "object",
        Value::Array(items) => {
            let len = path.len();
            path.push_str("[]");
            for item in items {
                collect_paths(item, path, out);
            }
            path.truncate(len);
            return;
        }
        Value::Object(map) => {
            for (k, child) in map {
                let len = path.len();
                path.push('.');
                path.push_str(k);
                collect_paths(child, path, out);
                path.truncate(len);
            }
            return;
        }
    };
    out.insert(format!("{path}:{label}"));
}

/// Sorted `path:type` set of a JSON document, arrays collapsed to `[]`.
pub fn schema_paths(text: &str) -> Option<BTreeSet<String>> {
    let value: serde_json::Value = serde_json::from_str(text).ok()?;
    let mut out = BTreeSet::new();
    collect_paths(&value, &mut "$".to_string(), &mut out);
    Some(out)
}

fn structural_signature(text: &str) -> String {
    match schema_paths(text) {
        Some(paths) => paths.into_iter().collect::<Vec<_>>().join("\n"),
        None => {
            let head: String = text
                .chars()
                .filter(|c| !c.is_alphanumeric() && !c.is_whitespace())
                .take(64)
                .collect();
            format!("raw:{head}")
        }
    }
}

/// Cache key for conversion modules: a hash over the path/type structure of
/// the input and the target example together with the prompt version tag.
/// Values never influence it.
pub fn fingerprint_schema(doc_text: &str, target_text: &str, version_tag: &str) -> String {
    let mut h = Sha256::new();
    h.update(b"input\n");
    h.update(structural_signature(doc_text).as_bytes());
    h.update(b"\ntarget\n");
    h.update(structural_signature(target_text).as_bytes());
    h.update(b"\ntemplate\n");
    h.update(version_tag.as_bytes());
    hex::encode(&h.finalize()[..16])
}

/// LLM-generated conversion code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversionModule {
    pub fingerprint: String,
    pub source_code: String,
    pub created_from: String,
    /// Set only after an end-to-end execution passed its check.
    pub validated: bool,
}

/// Validated conversion modules keyed by schema fingerprint.
#[derive(Debug, Default)]
pub struct ModuleCache {
    modules: RwLock<HashMap<String, Arc<ConversionModule>>>,
    generating: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ModuleCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, fingerprint: &str) -> Option<Arc<ConversionModule>> {
        self.modules.read().expect("cache poisoned").get(fingerprint).cloned()
    }

    /// Stores a validated module unless one is already cached for its
    /// fingerprint; returns the module that ends up cached.
    pub fn insert_validated(&self, module: ConversionModule) -> Arc<ConversionModule> {
        debug_assert!(module.validated);
        self.modules
            .write()
            .expect("cache poisoned")
            .entry(module.fingerprint.clone())
            .or_insert_with(|| Arc::new(module))
            .clone()
    }

    /// Lock serializing module generation for one fingerprint, so concurrent
    /// misses produce one backend call instead of many.
    fn generation_slot(&self, fingerprint: &str) -> Arc<Mutex<()>> {
        self.generating
            .lock()
            .expect("cache poisoned")
            .entry(fingerprint.to_string())
            .or_default()
            .clone()
    }

    pub fn len(&self) -> usize {
        self.modules.read().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    /// Absolute numeric tolerance for the expected-output comparison.
    pub tolerance: Option<BigDecimal>,
}

/// Result of one pipeline execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttemptOutcome {
    pub strategy: Strategy,
    /// Converted document on success.
    pub result: std::result::Result<String, Failure>,
    pub duration_ms: u64,
    pub cache_hit: bool,
    pub backend_calls: u32,
}

impl AttemptOutcome {
    pub fn is_success(&self) -> bool {
        self.result.is_ok()
    }

    pub fn failure_cause(&self) -> Option<FailureCause> {
        self.result.as_ref().err().map(|f| f.cause)
    }

    pub fn to_record(
        &self,
        dataset_version: DatasetVersion,
        entry_id: &str,
        model_tag: &str,
        run_index: u32,
    ) -> AttemptRecord {
        let (success, failure_cause, detail) = match &self.result {
            Ok(_) => (true, None, String::new()),
            Err(f) => (false, Some(f.cause), f.detail.clone()),
        };
        AttemptRecord {
            dataset_version,
            entry_id: entry_id.to_string(),
            model_tag: model_tag.to_string(),
            strategy: self.strategy,
            run_index,
            success,
            failure_cause,
            detail,
            duration_ms: self.duration_ms,
            cache_hit: self.cache_hit,
        }
    }
}

fn call_backend(
    backend: &dyn CompletionBackend,
    prompt: &str,
    call_index: Option<u64>,
) -> std::result::Result<String, Failure> {
    let request = CompletionRequest {
        prompt,
        call_index,
    };
    let result = backend
        .complete(request)
        .map_err(|e| Failure::classify(PipelineStage::LlmCall, e.into_raw()))?;
    match result.stop_reason {
        StopReason::Done => Ok(result.text),
        StopReason::Length => Err(Failure::classify(
            PipelineStage::LlmCall,
            RawError::StopReason("length".into()),
        )),
        StopReason::Error => Err(Failure::classify(
            PipelineStage::LlmCall,
            RawError::StopReason("error".into()),
        )),
    }
}

/// Parses extracted output and, in harness mode, compares it with the
/// expected document.
fn check_output(
    extracted: String,
    task: &ConversionTask,
    options: &PipelineOptions,
) -> std::result::Result<String, Failure> {
    if extracted.trim().is_empty() {
        return Err(Failure::classify(PipelineStage::Parse, RawError::Empty));
    }
    let produced = equivalence::canonicalize(&extracted)
        .map_err(|e| Failure::classify(PipelineStage::Parse, RawError::Message(e.to_string())))?;
    if let Some(expected) = &task.expected_text {
        compare_expected(&produced, expected, options)?;
    }
    Ok(extracted)
}

fn compare_expected(
    produced: &CanonicalDoc,
    expected: &str,
    options: &PipelineOptions,
) -> std::result::Result<(), Failure> {
    let expected = equivalence::canonicalize(expected).map_err(|e| {
        Failure::classify(
            PipelineStage::Compare,
            RawError::Message(format!("expected document unparseable: {e}")),
        )
    })?;
    equivalence::equivalent(produced, &expected, options.tolerance.as_ref()).map_err(|diff| {
        Failure::classify(PipelineStage::Compare, RawError::Message(diff.to_string()))
    })
}

/// DIRECT: the model returns the converted document itself.
pub fn convert_direct(
    task: &ConversionTask,
    backend: &dyn CompletionBackend,
    template: &PromptTemplate,
    options: &PipelineOptions,
    call_index: Option<u64>,
) -> AttemptOutcome {
    let started = Instant::now();
    let prompt = build_prompt(template, task);
    let result = call_backend(backend, &prompt, call_index)
        .and_then(|response| check_output(extract_json(&response), task, options));
    AttemptOutcome {
        strategy: Strategy::Direct,
        result,
        duration_ms: started.elapsed().as_millis() as u64,
        cache_hit: false,
        backend_calls: 1,
    }
}

/// Gateway-mode acceptance of a generated module's output: its path set must
/// match the target example's.
fn gateway_check(output: &str, target_example: &str) -> std::result::Result<(), Failure> {
    match (schema_paths(output), schema_paths(target_example)) {
        (Some(a), Some(b)) if a == b => Ok(()),
        (Some(a), Some(b)) => {
            let missing = b.difference(&a).next().or_else(|| a.difference(&b).next());
            Err(Failure::classify(
                PipelineStage::Compare,
                RawError::Message(format!(
                    "output structure differs from target example at {}",
                    missing.map_or("?", String::as_str)
                )),
            ))
        }
        _ => Err(Failure::classify(
            PipelineStage::Compare,
            RawError::Message("target example is not JSON".into()),
        )),
    }
}

/// CODEGEN: the model returns a conversion module that is compile-checked,
/// executed on the input, and cached by schema fingerprint once it passes.
pub fn convert_codegen(
    task: &ConversionTask,
    backend: &dyn CompletionBackend,
    template: &PromptTemplate,
    executor: &dyn ModuleExecutor,
    cache: Option<&ModuleCache>,
    options: &PipelineOptions,
    call_index: Option<u64>,
) -> AttemptOutcome {
    let started = Instant::now();
    let fingerprint =
        fingerprint_schema(&task.input_text, &task.target_example, &template.version_tag);
    let finish = |result, cache_hit, backend_calls| AttemptOutcome {
        strategy: Strategy::Codegen,
        result,
        duration_ms: started.elapsed().as_millis() as u64,
        cache_hit,
        backend_calls,
    };
    let run_module = |source: &str| -> std::result::Result<String, Failure> {
        let output = executor.execute(source, &task.input_text).into_output()?;
        let extracted = check_output(extract_json(&output), task, options)?;
        if task.expected_text.is_none() {
            gateway_check(&extracted, &task.target_example)?;
        }
        Ok(extracted)
    };

    if let Some(m) = cache.and_then(|c| c.get(&fingerprint)) {
        return finish(run_module(&m.source_code), true, 0);
    }
    let slot = cache.map(|c| c.generation_slot(&fingerprint));
    let _generating = slot.as_ref().map(|s| s.lock().unwrap_or_else(|e| e.into_inner()));
    if let Some(m) = cache.and_then(|c| c.get(&fingerprint)) {
        return finish(run_module(&m.source_code), true, 0);
    }

    let prompt = build_prompt(template, task);
    let result = call_backend(backend, &prompt, call_index)
        .and_then(|response| extract_code(&response))
        .and_then(|source| {
            executor
                .compile_check(&source)
                .map_err(|msg| Failure::classify(PipelineStage::Compile, RawError::Message(msg)))?;
            let extracted = run_module(&source)?;
            if let Some(cache) = cache {
                cache.insert_validated(ConversionModule {
                    fingerprint: fingerprint.clone(),
                    source_code: source,
                    created_from: task.entry_id.clone(),
                    validated: true,
                });
            }
            Ok(extracted)
        });
    finish(result, false, 1)
}
