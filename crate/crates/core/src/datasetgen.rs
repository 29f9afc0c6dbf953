//! Synthesis, on-disk layout, loading and validation of the v1–v4 corpora.
//!
//! A dataset directory is flat: `<PREFIX>.input.txt` (provider document),
//! `<PREFIX>.expected.txt` (GeoJSON for the dataset's version) for each
//! entry, plus one `target.txt` example that is not scored.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::domain::DatasetVersion;
use crate::equivalence;
use crate::error::{Error, Result};
use crate::geoconv::{
    boundary_to_provider, provider_to_geo_reference, provider_to_geo_with, ring_area_ha, Dec,
    FieldBoundary, GeoFeatureDoc, Position, ProviderBoundaryDoc,
};

pub const INPUT_SUFFIX: &str = ".input.txt";
pub const EXPECTED_SUFFIX: &str = ".expected.txt";
pub const TARGET_FILE: &str = "target.txt";

/// Entry count of the published corpus.
pub const DEFAULT_ENTRY_COUNT: usize = 222;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    pub prefix: String,
    pub input_text: String,
    pub expected_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub version: DatasetVersion,
    /// Sorted by prefix.
    pub entries: Vec<DatasetEntry>,
    pub target_text: String,
}

impl DatasetManifest {
    pub fn entry(&self, prefix: &str) -> Option<&DatasetEntry> {
        self.entries
            .binary_search_by(|e| e.prefix.as_str().cmp(prefix))
            .ok()
            .map(|i| &self.entries[i])
    }
}

const SOURCE_TYPES: [&str; 3] = ["HandDrawn", "Imported", "Sensor"];
const METRES_PER_DEGREE: f64 = 111_320.0;

/// Deterministic synthetic field boundaries: irregular, roughly convex
/// polygons of 5–30 vertices in a central-European agricultural box
/// (lat 47–55, lon 6–15).
pub fn synthesize_boundaries(count: usize, seed: u64) -> Result<Vec<FieldBoundary>> {
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| synthesize_one(&mut rng, i)).collect()
}

fn synthesize_one(rng: &mut ChaCha8Rng, index: usize) -> Result<FieldBoundary> {
    let id = uuid::Builder::from_random_bytes(rng.random()).into_uuid().to_string();
    let epoch = DateTime::<Utc>::from_timestamp(1_451_606_400, 0).expect("2016-01-01");
    let created = epoch + Duration::seconds(rng.random_range(0..4 * 365 * 86_400));
    let modified = created + Duration::milliseconds(rng.random_range(0..365 * 86_400_000i64));
    let source_type = SOURCE_TYPES[rng.random_range(0..SOURCE_TYPES.len())];

    let center_lat: f64 = rng.random_range(47.0..55.0);
    let center_lon: f64 = rng.random_range(6.0..15.0);
    loop {
        let vertices: usize = rng.random_range(5..=30);
        let radius: f64 = rng.random_range(40.0..400.0);
        let step = std::f64::consts::TAU / vertices as f64;
        let mut ring: Vec<Position> = (0..vertices)
            .map(|k| {
                let theta = step * (k as f64 + rng.random_range(-0.3..0.3));
                let r = radius * rng.random_range(0.75..1.25);
                let lat = center_lat + r * theta.sin() / METRES_PER_DEGREE;
                let lon = center_lon
                    + r * theta.cos() / (METRES_PER_DEGREE * center_lat.to_radians().cos());
                Position::new(coordinate(lon), coordinate(lat))
            })
            .collect();
        let mut distinct = ring.clone();
        distinct.sort_by(|a, b| (a.lon.as_str(), a.lat.as_str()).cmp(&(b.lon.as_str(), b.lat.as_str())));
        distinct.dedup();
        if distinct.len() != ring.len() {
            continue;
        }
        ring.push(ring[0].clone());
        let area = ring_area_ha(&ring)?;
        let boundary = FieldBoundary {
            id,
            name: format!("Field_{:03}", index + 1),
            source_type: source_type.to_string(),
            created_time: created.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            modified_time: modified.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string(),
            rings: vec![ring],
            area_ha: Dec::from_f64(area)?,
        };
        boundary.validate()?;
        return Ok(boundary);
    }
}

/// Six decimal places (~0.1 m), trailing zeros trimmed.
fn coordinate(x: f64) -> Dec {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.parse().expect("formatted float is a number")
}

/// How expected areas are converted to acres when writing a v4 corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum AreaConversion {
    /// One exact multiplication.
    #[default]
    Exact,
    /// ha → m² → acres in binary floating point. Loses precision; only
    /// useful to produce corpora the validator must reject.
    LossyDoubleConversion,
}

fn lossy_double_conversion(ha: &Dec) -> Result<Dec> {
    let square_metres = ha.to_f64() * 10_000.0;
    Dec::from_f64(square_metres / 4046.856_422_4)
}

fn entry_prefix(index: usize, width: usize, id: &str) -> String {
    let fragment: String = id.chars().take(8).collect();
    format!("{index:0width$}-{fragment}")
}

fn expected_text(
    input: &ProviderBoundaryDoc,
    version: DatasetVersion,
    conversion: AreaConversion,
) -> Result<String> {
    let doc = match conversion {
        AreaConversion::Exact => provider_to_geo_reference(input, version)?,
        AreaConversion::LossyDoubleConversion => {
            provider_to_geo_with(input, version, lossy_double_conversion)?
        }
    };
    Ok(with_newline(doc.to_pretty_json()))
}

fn with_newline(mut s: String) -> String {
    s.push('\n');
    s
}

/// Builds the manifest for `boundaries` without touching the filesystem.
pub fn build_manifest(
    boundaries: &[FieldBoundary],
    target: &FieldBoundary,
    version: DatasetVersion,
    conversion: AreaConversion,
) -> Result<DatasetManifest> {
    let width = boundaries.len().saturating_sub(1).to_string().len().max(3);
    let entries = boundaries
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let provider = boundary_to_provider(b);
            Ok(DatasetEntry {
                prefix: entry_prefix(i, width, &b.id),
                input_text: with_newline(provider.to_pretty_json()),
                expected_text: expected_text(&provider, version, conversion)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let target_text = expected_text(&boundary_to_provider(target), version, AreaConversion::Exact)?;
    if entries.iter().any(|e| e.expected_text == target_text) {
        return Err(Error::Dataset("target example duplicates a corpus entry".into()));
    }
    let mut manifest = DatasetManifest {
        version,
        entries,
        target_text,
    };
    manifest.entries.sort_by(|a, b| a.prefix.cmp(&b.prefix));
    Ok(manifest)
}

/// Writes `manifest` into `out_dir` (created if needed).
pub fn write_manifest(manifest: &DatasetManifest, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: String, text: &str| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    };
    manifest.entries.par_iter().try_for_each(|e| {
        write(format!("{}{INPUT_SUFFIX}", e.prefix), &e.input_text)?;
        write(format!("{}{EXPECTED_SUFFIX}", e.prefix), &e.expected_text)
    })?;
    write(TARGET_FILE.to_string(), &manifest.target_text)
}

/// Generates a dataset version from `boundaries` and writes it to `out_dir`.
/// `target` is the unscored example written to `target.txt`.
pub fn generate_dataset(
    boundaries: &[FieldBoundary],
    target: &FieldBoundary,
    version: DatasetVersion,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    generate_dataset_with(boundaries, target, version, out_dir, AreaConversion::Exact)
}

pub fn generate_dataset_with(
    boundaries: &[FieldBoundary],
    target: &FieldBoundary,
    version: DatasetVersion,
    out_dir: &Path,
    conversion: AreaConversion,
) -> Result<DatasetManifest> {
    let manifest = build_manifest(boundaries, target, version, conversion)?;
    write_manifest(&manifest, out_dir)?;
    Ok(manifest)
}

/// Synthesizes `count` entries plus one extra boundary used as the target
/// example, and writes the dataset.
pub fn generate_synthetic(
    count: usize,
    seed: u64,
    version: DatasetVersion,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let mut boundaries = synthesize_boundaries(count + 1, seed)?;
    let target = boundaries.pop().expect("count + 1 boundaries");
    generate_dataset(&boundaries, &target, version, out_dir)
}

/// Loads a dataset directory. The version is inferred from `target.txt`.
pub fn load_dataset(dir: &Path) -> Result<DatasetManifest> {
    let read = |path: PathBuf| fs::read_to_string(&path).map_err(|e| Error::io(path, e));

    let mut inputs = BTreeMap::new();
    let mut expected = BTreeMap::new();
    let listing = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for item in listing {
        let item = item.map_err(|e| Error::io(dir, e))?;
        let name = item.file_name().to_string_lossy().into_owned();
        if let Some(prefix) = name.strip_suffix(INPUT_SUFFIX) {
            inputs.insert(prefix.to_string(), item.path());
        } else if let Some(prefix) = name.strip_suffix(EXPECTED_SUFFIX) {
            expected.insert(prefix.to_string(), item.path());
        }
    }
    if let Some(orphan) = inputs
        .keys()
        .find(|p| !expected.contains_key(*p))
        .or_else(|| expected.keys().find(|p| !inputs.contains_key(*p)))
    {
        return Err(Error::OrphanEntry(orphan.clone()));
    }

    let target_text = read(dir.join(TARGET_FILE))?;
    let version = GeoFeatureDoc::parse(&target_text)
        .map_err(|e| Error::Dataset(format!("unparseable {TARGET_FILE}: {e}")))?
        .version()
        .ok_or_else(|| Error::Dataset(format!("{TARGET_FILE} has an unknown property set")))?;

    let entries = inputs
        .into_iter()
        .map(|(prefix, input_path)| {
            let expected_path = expected.remove(&prefix).expect("paired above");
            Ok(DatasetEntry {
                input_text: read(input_path)?,
                expected_text: read(expected_path)?,
                prefix,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetManifest {
        version,
        entries,
        target_text,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryCheck {
    pub prefix: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub version: DatasetVersion,
    pub checks: Vec<EntryCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> usize {
        self.checks.iter().filter(|c| c.passed).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = &EntryCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Re-derives every expected file from its input with the reference
/// converter and compares exactly.
pub fn validate_dataset(manifest: &DatasetManifest) -> ValidationReport {
    let checks = manifest
        .entries
        .par_iter()
        .map(|e| {
            let outcome = ProviderBoundaryDoc::parse(&e.input_text)
                .and_then(|doc| provider_to_geo_reference(&doc, manifest.version))
                .and_then(|reference| {
                    equivalence::texts_equivalent(&reference.to_pretty_json(), &e.expected_text, None)
                });
            let (passed, detail) = match outcome {
                Ok(Ok(())) => (true, String::new()),
                Ok(Err(diff)) => (false, format!("expected differs from reference at {diff}")),
                Err(err) => (false, err.to_string()),
            };
            EntryCheck {
                prefix: e.prefix.clone(),
                passed,
                detail,
            }
        })
        .collect();
    ValidationReport {
        version: manifest.version,
        checks,
    }
}
