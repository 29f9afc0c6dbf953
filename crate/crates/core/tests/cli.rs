use std::path::Path;
use std::process::Command;

use llm_interop::cli::{self, CellRef, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("llm-interop").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, version: &str, count: &str) -> std::path::PathBuf {
    let out = dir.join(version);
    let (code, _, err) = run(&["gen-dataset", "--count", count, "--seed", "42", "--version", version, "--out", p(&out)]);
    assert_eq!(code, EXIT_OK, "{err}");
    out
}

#[test]
fn end_to_end_dispatch() {
    let dir = tempfile::tempdir().unwrap();
    let v1 = gen(dir.path(), "v1", "20");
    let v4 = gen(dir.path(), "v4", "20");
    assert_eq!(std::fs::read_dir(&v4).unwrap().count(), 41);

    let (code, out, _) = run(&["validate-dataset", "--dataset", p(&v4)]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("v4: 20/20 entries valid"), "{out}");

    let results = dir.path().join("results");
    let (code, out, err) = run(&[
        "run", "--dataset", p(&v1), "--dataset", p(&v4), "--strategy", "direct",
        "--backend-kind", "oracle", "--model", "oracle", "--runs", "3",
        "--temperature", "0.9", "--out", p(&results),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("v1:oracle:direct\t60\t60\t"), "{out}");
    assert!(err.contains("attempted 60"), "{err}");

    let (code, out, _) = run(&["compare", "--results", p(&results), "--a", "v1:oracle:direct", "--b", "v4:oracle:direct"]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "comparison\tz\tp_value\th\tpower\treject_H0");
    assert!(lines[1].starts_with("v1:oracle:direct vs v4:oracle:direct\t0.0000\t1\t0.0000\t"), "{}", lines[1]);
    assert!(lines[1].ends_with("\tfalse"));

    let (code, out, _) = run(&["compare", "--results", p(&results), "--a", "v1:oracle:direct#1", "--b", "v1:oracle:direct#3"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("v1:oracle:direct#1 vs v1:oracle:direct#3"));

    let csv_path = dir.path().join("records.csv");
    let (code, out, _) = run(&["analyze", "--results", p(&results), "--csv", p(&csv_path)]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("1.0000000\ttrue"));
    assert_eq!(std::fs::read_to_string(&csv_path).unwrap().lines().count(), 121);

    let (code, out, _) = run(&["failures", "--results", p(&results)]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out, "cause\tcount\tpercent\nN\t0\t\n");
}

#[test]
fn noisy_runs_are_reproducible_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let v2 = gen(dir.path(), "v2", "30");
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let results = dir.path().join(name);
        let (code, out, err) = run(&[
            "run", "--dataset", p(&v2), "--backend-kind", "noisy", "--model", "noisy",
            "--seed", "7", "--error-rate", "0.5", "--failure-mix", "truncate=1,wrong-value=1",
            "--jobs", "4", "--out", p(&results),
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
        let (_, failures, _) = run(&["failures", "--results", p(&results), "--strategy", "direct"]);
        outputs.push((out, failures));
    }
    assert_eq!(outputs[0], outputs[1]);
    let failures = &outputs[0].1;
    assert!(failures.contains("JSON_SYNTAX") && failures.contains("DATA_MISMATCH"), "{failures}");
    assert!(!failures.contains("EMPTY_DATA"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["bogus"]).0, EXIT_USAGE);
    assert_eq!(run(&["run", "--unknown-flag"]).0, EXIT_USAGE);
    assert_eq!(run(&["gen-dataset", "--version", "v7", "--out", "x"]).0, EXIT_USAGE);
    assert_eq!(run(&["run", "--dataset", "d", "--out", "o", "--strategy", "fewshot"]).0, EXIT_USAGE);
    assert_eq!(run(&["run", "--dataset", "d", "--out", "o", "--num-tolerance", "-1"]).0, EXIT_USAGE);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, EXIT_OK);
    for sub in ["gen-dataset", "run", "analyze", "compare", "failures", "validate-dataset"] {
        assert!(out.contains(sub), "{sub}");
    }
}

#[test]
fn execution_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_eq!(run(&["validate-dataset", "--dataset", p(&missing)]).0, EXIT_FAILURE);
    assert_eq!(run(&["analyze", "--results", p(&missing)]).0, EXIT_FAILURE);
    let v1 = gen(dir.path(), "v1", "3");
    let (code, _, err) = run(&[
        "run", "--dataset", p(&v1), "--backend-kind", "http", "--out", p(&dir.path().join("r")),
    ]);
    if std::env::var_os("INTEROP_BACKEND_URL").is_none() {
        assert_eq!(code, EXIT_FAILURE);
        assert!(err.contains("INTEROP_BACKEND_URL"), "{err}");
    }
    let (code, _, err) = run(&["compare", "--results", p(&dir.path().join("r")), "--a", "v1:x:direct", "--b", "v2:x:direct"]);
    assert_eq!(code, EXIT_FAILURE, "{err}");
}

#[test]
fn lossy_corpus_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let (code, _, _) = run(&["gen-dataset", "--count", "30", "--version", "v4", "--lossy-area", "--out", p(&out)]);
    assert_eq!(code, EXIT_OK);
    let (code, out, _) = run(&["validate-dataset", "--dataset", p(&out)]);
    assert_eq!(code, EXIT_FAILURE);
    assert!(out.contains("FAIL\t"));
}

#[test]
fn cell_references() {
    let r: CellRef = "v3:qwen2.5-coder:32b:codegen#2".parse().unwrap();
    assert_eq!(r.cell.model_tag, "qwen2.5-coder:32b");
    assert_eq!(r.run, Some(2));
    assert_eq!(r.to_string(), "v3:qwen2.5-coder:32b:codegen#2");
    assert!("v3:m:codegen#x".parse::<CellRef>().is_err());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_llm-interop");
    let status = Command::new(bin).arg("--no-such-flag").output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(bin)
        .args(["gen-dataset", "--count", "2", "--version", "v1", "--out"])
        .arg(dir.path().join("d"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let out = Command::new(bin)
        .args(["validate-dataset", "--dataset"])
        .arg(dir.path().join("missing"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_FAILURE));
}
