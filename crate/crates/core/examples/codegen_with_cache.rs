//! CODEGEN over one dataset version with the module cache: the first entry
//! generates and validates a module, the rest reuse it.
//!
//! Needs python3 and a runner; defaults to the test fixture runner.
//! cargo run --example codegen_with_cache -- [runner.py]

use std::sync::Arc;

use llm_interop::backend::OracleBackend;
use llm_interop::datasetgen::{build_manifest, synthesize_boundaries, AreaConversion};
use llm_interop::domain::{DatasetVersion, Strategy};
use llm_interop::harness::{self, GridOptions};
use llm_interop::sandbox::{find_on_path, Sandbox, SandboxConfig};
use llm_interop::strategies::ModuleCache;

fn main() -> llm_interop::Result<()> {
    let Some(python) = find_on_path("python3") else {
        eprintln!("python3 not found");
        return Ok(());
    };
    let runner = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/runner.py").to_string());
    let sandbox = Sandbox::new(SandboxConfig {
        runner: vec![python.to_string_lossy().into_owned(), runner],
        ..SandboxConfig::default()
    });

    let boundaries = synthesize_boundaries(21, 42)?;
    let m = build_manifest(&boundaries[..20], &boundaries[20], DatasetVersion::V4, AreaConversion::Exact)?;
    let cache = Arc::new(ModuleCache::new());
    let options = GridOptions {
        executor: Some(Arc::new(sandbox)),
        cache: Some(cache.clone()),
        ..GridOptions::default()
    };
    let out = tempfile::tempdir().expect("tempdir");
    let backend = OracleBackend::new(&m, Strategy::Codegen);
    let run = harness::run_cell(&m, Strategy::Codegen, "oracle", &backend, 1, out.path(), &options)?;
    let records = harness::load_records(out.path())?;
    println!(
        "{}: {} attempts, {} backend calls, {} cache hits, {} successes, {} cached modules",
        run.key,
        run.attempted,
        run.backend_calls,
        records.iter().filter(|r| r.cache_hit).count(),
        records.iter().filter(|r| r.success).count(),
        cache.len()
    );
    Ok(())
}
