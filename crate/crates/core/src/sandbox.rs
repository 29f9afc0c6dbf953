//! Process-level execution of generated conversion modules.
//!
//! Each execution gets a fresh temporary directory holding the module file.
//! The runner is started as `<runner...> <module-path>` in its own process
//! group with the input document on stdin; the converted document is read
//! from stdout. The wall-clock limit is enforced by killing the whole process
//! group. There is no syscall filtering or resource accounting beyond that.
//!
//! Runner exit codes:
//!
//! | code | meaning                               | [`ExecStatus`]     |
//! |------|---------------------------------------|--------------------|
//! | 0    | converted document on stdout          | `Ok`               |
//! | 3    | module failed to compile or load      | `CompileError`     |
//! | 4    | exception raised inside `convert`     | `RuntimeError`     |
//! | 5    | module defines no `convert` function  | `MissingConvert`   |

use std::fs;
use std::io::{Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::domain::{Failure, FailureCause, PipelineStage, RawError};
use crate::sync::Semaphore;

/// Variable naming the runner command line (whitespace separated).
pub const RUNNER_ENV: &str = "INTEROP_RUNNER";
pub const DEFAULT_RUNNER: &str = "interop-runner";

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPILE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;
pub const EXIT_MISSING_CONVERT: i32 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SandboxLimits {
    pub wall_timeout_ms: u64,
    pub max_output_bytes: usize,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self {
            wall_timeout_ms: 30_000,
            max_output_bytes: 10 * 1024 * 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    CompileError,
    RuntimeError,
    Timeout,
    OutputOverflow,
    MissingConvert,
}

impl ExecStatus {
    /// Status for a runner exit code. Unknown codes and signals count as
    /// runtime errors.
    pub fn from_exit_code(code: Option<i32>) -> Self {
        match code {
            Some(EXIT_OK) => Self::Ok,
            Some(EXIT_COMPILE) => Self::CompileError,
            Some(EXIT_RUNTIME) => Self::RuntimeError,
            Some(EXIT_MISSING_CONVERT) => Self::MissingConvert,
            _ => Self::RuntimeError,
        }
    }

    /// The runner exit code this status stands for, if any.
    pub fn exit_code(self) -> Option<i32> {
        match self {
            Self::Ok => Some(EXIT_OK),
            Self::CompileError => Some(EXIT_COMPILE),
            Self::RuntimeError => Some(EXIT_RUNTIME),
            Self::MissingConvert => Some(EXIT_MISSING_CONVERT),
            Self::Timeout | Self::OutputOverflow => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionResult {
    pub status: ExecStatus,
    pub stdout: String,
    pub stderr: String,
    pub duration_ms: u64,
}

impl ExecutionResult {
    /// Converts a non-`Ok` status into a classified failure, and an `Ok`
    /// status with blank output into `EmptyData`.
    pub fn into_output(self) -> Result<String, Failure> {
        let detail = || {
            let stderr = self.stderr.trim();
            if stderr.is_empty() {
                format!("{:?}", self.status)
            } else {
                stderr.to_string()
            }
        };
        match self.status {
            ExecStatus::Ok if self.stdout.trim().is_empty() => {
                Err(Failure::classify(PipelineStage::Execute, RawError::Empty))
            }
            ExecStatus::Ok => Ok(self.stdout),
            ExecStatus::CompileError | ExecStatus::MissingConvert => {
                Err(Failure::new(FailureCause::CodeCompilationError, detail()))
            }
            ExecStatus::Timeout => Err(Failure::classify(
                PipelineStage::Execute,
                RawError::Timeout(format!("timed out after {} ms", self.duration_ms)),
            )),
            ExecStatus::RuntimeError | ExecStatus::OutputOverflow => Err(Failure::classify(
                PipelineStage::Execute,
                RawError::Message(detail()),
            )),
        }
    }
}

/// Something that can syntax-check and execute conversion modules.
pub trait ModuleExecutor: Send + Sync {
    /// Syntax-only check. `Err` carries the diagnostic.
    fn compile_check(&self, source: &str) -> Result<(), String>;

    fn execute(&self, source: &str, input: &str) -> ExecutionResult;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SandboxConfig {
    /// Runner program and leading arguments; the module path is appended.
    pub runner: Vec<String>,
    /// Optional syntax-check command; the module path is appended.
    pub compile_check: Option<Vec<String>>,
    /// File name the module is written to.
    pub module_file: String,
    pub env: Vec<(String, String)>,
    pub limits: SandboxLimits,
    pub max_concurrency: usize,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        let runner = std::env::var(RUNNER_ENV)
            .ok()
            .map(|s| s.split_whitespace().map(String::from).collect::<Vec<_>>())
            .filter(|v| !v.is_empty())
            .unwrap_or_else(|| vec![DEFAULT_RUNNER.to_string()]);
        Self {
            runner,
            compile_check: Some(vec!["python3".into(), "-m".into(), "py_compile".into()]),
            module_file: "conversion_module.py".into(),
            env: vec![
                ("PYTHONIOENCODING".into(), "utf-8".into()),
                ("PYTHONUTF8".into(), "1".into()),
                ("PYTHONDONTWRITEBYTECODE".into(), "1".into()),
            ],
            limits: SandboxLimits::default(),
            max_concurrency: thread::available_parallelism().map_or(4, |n| n.get()),
        }
    }
}

pub struct Sandbox {
    config: SandboxConfig,
    permits: Semaphore,
}

impl Sandbox {
    pub fn new(config: SandboxConfig) -> Self {
        let permits = Semaphore::new(config.max_concurrency);
        Self { config, permits }
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    /// Writes `source` to a fresh directory and runs it on `input`.
    pub fn execute_module(&self, source: &str, input: &str) -> ExecutionResult {
        let argv = self.config.runner.clone();
        self.run_in_scratch(source, &argv, input.as_bytes())
    }

    fn run_in_scratch(&self, source: &str, argv: &[String], stdin: &[u8]) -> ExecutionResult {
        let _permit = self.permits.acquire();
        let started = Instant::now();
        let spawn_failure = |msg: String| ExecutionResult {
            status: ExecStatus::RuntimeError,
            stdout: String::new(),
            stderr: msg,
            duration_ms: started.elapsed().as_millis() as u64,
        };
        let Some((program, args)) = argv.split_first() else {
            return spawn_failure("empty runner command".into());
        };
        let scratch = match tempfile::Builder::new().prefix("interop-sandbox-").tempdir() {
            Ok(d) => d,
            Err(e) => return spawn_failure(format!("scratch directory: {e}")),
        };
        let module_path = scratch.path().join(&self.config.module_file);
        if let Err(e) = fs::write(&module_path, source) {
            return spawn_failure(format!("{}: {e}", module_path.display()));
        }
        let mut cmd = Command::new(program);
        cmd.args(args)
            .arg(&module_path)
            .current_dir(scratch.path())
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_default())
            .envs(self.config.env.iter().map(|(k, v)| (k, v)))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        let child = match cmd.spawn() {
            Ok(c) => c,
            Err(e) => return spawn_failure(format!("failed to spawn {program}: {e}")),
        };
        let result = supervise(child, stdin.to_vec(), &self.config.limits, started);
        drop(scratch);
        result
    }
}

impl ModuleExecutor for Sandbox {
    fn compile_check(&self, source: &str) -> Result<(), String> {
        let Some(check) = &self.config.compile_check else {
            return Ok(());
        };
        let r = self.run_in_scratch(source, check, b"");
        match r.status {
            ExecStatus::Ok => Ok(()),
            _ => Err(if r.stderr.trim().is_empty() {
                format!("compile check failed: {:?}", r.status)
            } else {
                r.stderr
            }),
        }
    }

    fn execute(&self, source: &str, input: &str) -> ExecutionResult {
        self.execute_module(source, input)
    }
}

fn kill_group(child: &Child) {
    // SAFETY: plain syscall; the group id is the child's pid.
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
}

fn capped_reader(
    mut pipe: impl Read + Send + 'static,
    cap: usize,
    overflow: Arc<AtomicBool>,
) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match pipe.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                    if n > room {
                        overflow.store(true, Ordering::SeqCst);
                    }
                }
            }
        }
        kept
    })
}

fn supervise(
    mut child: Child,
    stdin: Vec<u8>,
    limits: &SandboxLimits,
    started: Instant,
) -> ExecutionResult {
    let overflow = Arc::new(AtomicBool::new(false));
    let stdout = capped_reader(
        child.stdout.take().expect("piped"),
        limits.max_output_bytes,
        overflow.clone(),
    );
    let stderr = capped_reader(
        child.stderr.take().expect("piped"),
        64 * 1024,
        Arc::new(AtomicBool::new(false)),
    );
    let mut pipe = child.stdin.take().expect("piped");
    let writer = thread::spawn(move || {
        // A module may exit without reading its input.
        let _ = pipe.write_all(&stdin);
    });

    let deadline = started + Duration::from_millis(limits.wall_timeout_ms);
    let mut timed_out = false;
    let mut pause = Duration::from_micros(200);
    let exit = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) => {}
            Err(_) => break None,
        }
        if overflow.load(Ordering::SeqCst) {
            kill_group(&child);
            break child.wait().ok();
        }
        if Instant::now() >= deadline {
            timed_out = true;
            kill_group(&child);
            break child.wait().ok();
        }
        thread::sleep(pause);
        pause = (pause * 2).min(Duration::from_millis(10));
    };
    // Reap stragglers that still hold the pipes open.
    kill_group(&child);
    let _ = writer.join();
    let out = stdout.join().unwrap_or_default();
    let err = stderr.join().unwrap_or_default();

    let status = if timed_out {
        ExecStatus::Timeout
    } else if overflow.load(Ordering::SeqCst) {
        ExecStatus::OutputOverflow
    } else {
        let code = exit.and_then(|s| s.code().or_else(|| s.signal().map(|sig| 128 + sig)));
        ExecStatus::from_exit_code(code)
    };
    ExecutionResult {
        status,
        stdout: String::from_utf8_lossy(&out).into_owned(),
        stderr: String::from_utf8_lossy(&err).into_owned(),
        duration_ms: started.elapsed().as_millis() as u64,
    }
}

/// Path of an executable named `name` on `PATH`, if any.
pub fn find_on_path(name: &str) -> Option<PathBuf> {
    std::env::var_os("PATH").and_then(|paths| {
        std::env::split_paths(&paths)
            .map(|p| p.join(name))
            .find(|p| p.is_file())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh_sandbox(timeout_ms: u64, max_output: usize) -> Sandbox {
        Sandbox::new(SandboxConfig {
            runner: vec!["sh".into()],
            compile_check: Some(vec!["sh".into(), "-n".into()]),
            module_file: "module.sh".into(),
            env: vec![],
            limits: SandboxLimits {
                wall_timeout_ms: timeout_ms,
                max_output_bytes: max_output,
            },
            max_concurrency: 4,
        })
    }

    #[test]
    fn exit_code_mapping_is_bijective_on_defined_codes() {
        for code in [EXIT_OK, EXIT_COMPILE, EXIT_RUNTIME, EXIT_MISSING_CONVERT] {
            assert_eq!(ExecStatus::from_exit_code(Some(code)).exit_code(), Some(code));
        }
        assert_eq!(ExecStatus::from_exit_code(Some(1)), ExecStatus::RuntimeError);
        assert_eq!(ExecStatus::from_exit_code(None), ExecStatus::RuntimeError);
    }

    #[test]
    fn echoes_stdin() {
        let r = sh_sandbox(5_000, 1 << 20).execute_module("cat", "hello");
        assert_eq!(r.status, ExecStatus::Ok);
        assert_eq!(r.stdout, "hello");
    }

    #[test]
    fn runner_exit_codes() {
        let sb = sh_sandbox(5_000, 1 << 20);
        let r = sb.execute_module("echo 'SyntaxError: bad' >&2; exit 3", "");
        assert_eq!(r.status, ExecStatus::CompileError);
        assert!(r.stderr.contains("SyntaxError"));
        assert_eq!(sb.execute_module("exit 4", "").status, ExecStatus::RuntimeError);
        assert_eq!(sb.execute_module("exit 5", "").status, ExecStatus::MissingConvert);
        assert_eq!(sb.execute_module("kill -9 $$", "").status, ExecStatus::RuntimeError);
    }

    #[test]
    fn infinite_loop_times_out() {
        let sb = sh_sandbox(300, 1 << 20);
        let r = sb.execute_module("while :; do :; done", "");
        assert_eq!(r.status, ExecStatus::Timeout);
        assert!(r.duration_ms >= 300 && r.duration_ms < 300 + 2_000, "{}", r.duration_ms);
    }

    #[test]
    fn background_children_are_killed() {
        let sb = sh_sandbox(300, 1 << 20);
        let r = sb.execute_module("sleep 30 & wait", "");
        assert_eq!(r.status, ExecStatus::Timeout);
        assert!(r.duration_ms < 2_300);
    }

    #[test]
    fn runaway_output_overflows() {
        let r = sh_sandbox(5_000, 1024).execute_module("yes", "");
        assert_eq!(r.status, ExecStatus::OutputOverflow);
        assert!(r.stdout.len() <= 1024);
        assert_eq!(
            r.into_output().unwrap_err().cause,
            FailureCause::CodeExecutionError
        );
    }

    #[test]
    fn compile_check_uses_the_check_command() {
        let sb = sh_sandbox(5_000, 1024);
        assert!(sb.compile_check("echo ok").is_ok());
        assert!(sb.compile_check("if then fi (").is_err());
    }

    #[test]
    fn executions_do_not_share_state() {
        let sb = sh_sandbox(5_000, 1024);
        let first = sb.execute_module("ls; touch marker", "");
        let second = sb.execute_module("ls", "");
        assert_eq!(first.stdout.trim(), "module.sh");
        assert_eq!(second.stdout.trim(), "module.sh");
    }

    #[test]
    fn missing_runner_is_a_runtime_error() {
        let sb = Sandbox::new(SandboxConfig {
            runner: vec!["/nonexistent/runner".into()],
            ..SandboxConfig::default()
        });
        let r = sb.execute_module("x", "");
        assert_eq!(r.status, ExecStatus::RuntimeError);
        assert!(r.stderr.contains("failed to spawn"));
    }

    #[test]
    fn blank_output_is_empty_data() {
        let r = sh_sandbox(5_000, 1024).execute_module("echo '  '", "");
        assert_eq!(r.into_output().unwrap_err().cause, FailureCause::EmptyData);
    }
}
