//! Sends one DIRECT prompt to an Ollama-compatible endpoint.
//!
//! INTEROP_BACKEND_URL=http://localhost:11434 cargo run --example ollama_client -- qwen2.5-coder:32b

use llm_interop::backend::{BackendConfig, BackendKind, HttpBackend, BACKEND_URL_ENV};
use llm_interop::datasetgen::{build_manifest, synthesize_boundaries, AreaConversion};
use llm_interop::domain::{ConversionTask, DatasetVersion, Strategy};
use llm_interop::strategies::{convert_direct, PipelineOptions, PromptTemplate};

fn main() -> llm_interop::Result<()> {
    let Ok(url) = std::env::var(BACKEND_URL_ENV) else {
        eprintln!("set {BACKEND_URL_ENV} to an Ollama base URL");
        return Ok(());
    };
    let model = std::env::args().nth(1).unwrap_or_else(|| "llama3:8b".into());
    let backend = HttpBackend::new(&BackendConfig {
        kind: BackendKind::Http,
        base_url: Some(url),
        model_tag: model,
        temperature: 0.9,
        ..BackendConfig::default()
    })?;
    let boundaries = synthesize_boundaries(2, 3)?;
    let m = build_manifest(&boundaries[..1], &boundaries[1], DatasetVersion::V2, AreaConversion::Exact)?;
    let e = &m.entries[0];
    let task = ConversionTask::harness(&e.prefix, &e.input_text, &m.target_text, &e.expected_text)?;
    let outcome = convert_direct(&task, &backend, &PromptTemplate::builtin(Strategy::Direct), &PipelineOptions::default(), None);
    match outcome.result {
        Ok(text) => println!("success in {} ms\n{text}", outcome.duration_ms),
        Err(f) => println!("{}: {}", f.cause.code(), f.detail),
    }
    Ok(())
}
