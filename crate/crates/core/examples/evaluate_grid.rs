//! Runs the oracle and a noisy backend over v1..v4 with DIRECT and prints
//! per-cell pass@1 and the failure histogram.

use llm_interop::backend::{BackendConfig, BackendKind};
use llm_interop::datasetgen::{build_manifest, synthesize_boundaries, AreaConversion};
use llm_interop::domain::{DatasetVersion, Strategy};
use llm_interop::harness::{self, ExperimentGrid, GridBackend, GridOptions};

fn main() -> llm_interop::Result<()> {
    let boundaries = synthesize_boundaries(51, 42)?;
    let (corpus, target) = boundaries.split_at(50);
    let datasets = DatasetVersion::ALL
        .iter()
        .map(|&v| build_manifest(corpus, &target[0], v, AreaConversion::Exact))
        .collect::<llm_interop::Result<Vec<_>>>()?;
    let out = tempfile::tempdir().expect("tempdir");
    let noisy = BackendConfig {
        kind: BackendKind::Noisy,
        model_tag: "noisy".into(),
        error_rate: 0.2,
        seed: 1,
        ..BackendConfig::default()
    };
    let grid = ExperimentGrid {
        datasets,
        strategies: vec![Strategy::Direct],
        backends: vec![GridBackend::from_config(BackendConfig::default()), GridBackend::from_config(noisy)],
        runs: 3,
        results_dir: out.path().to_path_buf(),
    };
    harness::run_grid(&grid, &GridOptions::default())?;
    for s in harness::summarize(out.path())? {
        println!("{}\tpass@1 {:.4}\t{:?}", s.key, s.average_pass_at_1.unwrap_or(f64::NAN), s.histogram);
    }
    let report = harness::failure_report(&harness::load_records(out.path())?, None);
    for row in report.rows {
        println!("{}\t{}\t{:.1}%", row.cause.code(), row.count, row.percent);
    }
    Ok(())
}
