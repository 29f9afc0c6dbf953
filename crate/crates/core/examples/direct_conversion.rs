//! One DIRECT conversion through a scripted backend, then a second one with
//! a response that drops a field.

use llm_interop::backend::ScriptedBackend;
use llm_interop::datasetgen::{build_manifest, synthesize_boundaries, AreaConversion};
use llm_interop::domain::{ConversionTask, DatasetVersion, Strategy};
use llm_interop::strategies::{build_prompt, convert_direct, PipelineOptions, PromptTemplate};

fn main() -> llm_interop::Result<()> {
    let boundaries = synthesize_boundaries(2, 7)?;
    let m = build_manifest(&boundaries[..1], &boundaries[1], DatasetVersion::V3, AreaConversion::Exact)?;
    let entry = &m.entries[0];
    let task = ConversionTask::harness(&entry.prefix, &entry.input_text, &m.target_text, &entry.expected_text)?;
    let template = PromptTemplate::builtin(Strategy::Direct);
    let prompt = build_prompt(&template, &task);
    println!("prompt is {} bytes, template {}", prompt.len(), template.version_tag);

    let reply = format!("Here is the converted document:\n```json\n{}```\n", entry.expected_text);
    let backend = ScriptedBackend::new().with_response(&prompt, reply);
    let ok = convert_direct(&task, &backend, &template, &PipelineOptions::default(), None);
    println!("faithful reply: success = {}", ok.is_success());

    let broken = entry.expected_text.replacen("\"area_ha\"", "\"area\"", 1);
    let backend = ScriptedBackend::new().with_response(&prompt, broken);
    let bad = convert_direct(&task, &backend, &template, &PipelineOptions::default(), None);
    if let Err(f) = &bad.result {
        println!("renamed field: {} ({})", f.cause.code(), f.detail);
    }
    Ok(())
}
