//! Writes all four dataset versions and validates them.
//!
//! cargo run --example generate_dataset -- [out_dir] [count]

use std::path::PathBuf;

use llm_interop::datasetgen::{generate_synthetic, validate_dataset};
use llm_interop::domain::DatasetVersion;

fn main() -> llm_interop::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("interop-datasets"));
    let count = args.next().and_then(|c| c.parse().ok()).unwrap_or(222);
    for v in DatasetVersion::ALL {
        let dir = out.join(v.as_str());
        let manifest = generate_synthetic(count, 42, v, &dir)?;
        let report = validate_dataset(&manifest);
        println!("{v}: {} entries in {}, {}/{} valid", manifest.entries.len(), dir.display(), report.passed(), report.checks.len());
    }
    Ok(())
}
