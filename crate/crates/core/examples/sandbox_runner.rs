//! Executes a few modules through the sandbox and prints their statuses.
//!
//! cargo run --example sandbox_runner -- [runner.py]

use llm_interop::sandbox::{find_on_path, ModuleExecutor, Sandbox, SandboxConfig, SandboxLimits};

fn main() {
    let Some(python) = find_on_path("python3") else {
        eprintln!("python3 not found");
        return;
    };
    let runner = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/runner.py").to_string());
    let sandbox = Sandbox::new(SandboxConfig {
        runner: vec![python.to_string_lossy().into_owned(), runner],
        limits: SandboxLimits { wall_timeout_ms: 1_000, ..SandboxLimits::default() },
        ..SandboxConfig::default()
    });
    let modules = [
        ("upper", "def convert(t):\n    return t.upper()\n"),
        ("syntax", "def convert(t:\n    return t\n"),
        ("raises", "def convert(t):\n    raise KeyError('area')\n"),
        ("loops", "def convert(t):\n    while True: pass\n"),
        ("missing", "def transform(t):\n    return t\n"),
    ];
    for (name, source) in modules {
        let r = sandbox.execute(source, "field");
        println!("{name:8} {:?} {:?} ({} ms)", r.status, r.stdout, r.duration_ms);
    }
    println!("compile check: {:?}", sandbox.compile_check(modules[1].1).map_err(|e| e.lines().last().unwrap_or("").to_string()));
}
