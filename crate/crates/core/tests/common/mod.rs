#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use llm_interop::datasetgen::{self, AreaConversion, DatasetManifest};
use llm_interop::domain::DatasetVersion;
use llm_interop::sandbox::{find_on_path, Sandbox, SandboxConfig, SandboxLimits};

pub const SEED: u64 = 42;
pub const ENTRIES: usize = 222;

pub fn manifest(version: DatasetVersion) -> DatasetManifest {
    manifest_with(version, AreaConversion::Exact)
}

pub fn manifest_with(version: DatasetVersion, conversion: AreaConversion) -> DatasetManifest {
    static BOUNDARIES: OnceLock<Vec<llm_interop::geoconv::FieldBoundary>> = OnceLock::new();
    let all = BOUNDARIES
        .get_or_init(|| datasetgen::synthesize_boundaries(ENTRIES + 1, SEED).unwrap());
    datasetgen::build_manifest(&all[..ENTRIES], &all[ENTRIES], version, conversion).unwrap()
}

pub fn runner_script() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/runner.py")
}

/// A sandbox backed by the fixture runner, or `None` without python3.
pub fn python_sandbox(timeout_ms: u64) -> Option<Sandbox> {
    let python = find_on_path("python3")?;
    let python = python.to_string_lossy().into_owned();
    Some(Sandbox::new(SandboxConfig {
        runner: vec![python.clone(), "-S".into(), runner_script().to_string_lossy().into_owned()],
        compile_check: Some(vec![python, "-S".into(), "-m".into(), "py_compile".into()]),
        limits: SandboxLimits {
            wall_timeout_ms: timeout_ms,
            ..SandboxLimits::default()
        },
        ..SandboxConfig::default()
    }))
}
