//! Subprocess test runner: one Python process per test, wall-clock timeout,
//! empty environment, scratch working directory and sockets disabled.

use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestStatus {
    Pass,
    Fail,
    Timeout,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub status: TestStatus,
    pub detail: String,
}

impl TestOutcome {
    pub fn passed(&self) -> bool {
        self.status == TestStatus::Pass
    }
}

const RUNNER: &str = r#"
import sys

def _no_network(*args, **kwargs):
    raise OSError("network access is disabled in the sandbox")

import socket
socket.socket = _no_network
socket.create_connection = _no_network
socket.getaddrinfo = _no_network

def _report(line):
    with open(sys.argv[3], "w") as fh:
        fh.write(line)

def _describe(exc):
    msg = str(exc).splitlines()[0] if str(exc) else ""
    return type(exc).__name__ + (": " + msg if msg else "")

with open(sys.argv[1]) as fh:
    source = fh.read()
with open(sys.argv[2]) as fh:
    test = fh.read()

try:
    solution = compile(source, "<solution>", "exec")
    check = compile(test, "<test>", "exec")
except SyntaxError as exc:
    _report("ERROR " + _describe(exc))
    sys.exit(3)

scope = {"__name__": "solution"}
try:
    exec(solution, scope)
except BaseException as exc:
    _report("ERROR " + _describe(exc))
    sys.exit(2)
try:
    exec(check, scope)
except AssertionError as exc:
    _report("FAIL " + _describe(exc))
    sys.exit(1)
except BaseException as exc:
    _report("ERROR " + _describe(exc))
    sys.exit(2)
_report("PASS")
"#;

#[derive(Debug, Clone)]
pub struct Sandbox {
    python: PathBuf,
    timeout: Duration,
}

impl Sandbox {
    /// Verifies that the interpreter starts before returning a sandbox.
    pub fn new(python: impl Into<PathBuf>, timeout: Duration) -> Result<Self, HarnessError> {
        let python = python.into();
        let status = Command::new(&python)
            .args(["-I", "-c", "pass"])
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map_err(|e| HarnessError::SandboxUnavailable(format!("{}: {e}", python.display())))?;
        if !status.success() {
            return Err(HarnessError::SandboxUnavailable(format!("{} exited with {status}", python.display())));
        }
        Ok(Self { python, timeout })
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Runs `code` followed by each test in its own process.
    pub fn run_tests(&self, code: &str, tests: &[String]) -> Result<Vec<TestOutcome>, HarnessError> {
        tests.iter().map(|t| self.run_one(code, t)).collect()
    }

    pub fn run_one(&self, code: &str, test: &str) -> Result<TestOutcome, HarnessError> {
        let dir = tempfile::tempdir().map_err(|e| HarnessError::SandboxUnavailable(e.to_string()))?;
        let write = |name: &str, body: &str| -> Result<PathBuf, HarnessError> {
            let p = dir.path().join(name);
            std::fs::write(&p, body).map_err(|e| HarnessError::io(&p, e))?;
            Ok(p)
        };
        let runner = write("runner.py", RUNNER)?;
        let solution = write("solution.py", code)?;
        let test_file = write("test.py", test)?;
        let report = dir.path().join("result.txt");
        let stdout = std::fs::File::create(dir.path().join("stdout.txt")).map_err(|e| HarnessError::io(dir.path(), e))?;
        let stderr = std::fs::File::create(dir.path().join("stderr.txt")).map_err(|e| HarnessError::io(dir.path(), e))?;

        let started = Instant::now();
        let mut child = Command::new(&self.python)
            .arg("-I")
            .arg(&runner)
            .arg(&solution)
            .arg(&test_file)
            .arg(&report)
            .current_dir(dir.path())
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_default())
            .env("PYTHONHASHSEED", "0")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .stdin(Stdio::null())
            .stdout(stdout)
            .stderr(stderr)
            .spawn()
            .map_err(|e| HarnessError::SandboxUnavailable(format!("{}: {e}", self.python.display())))?;

        let status = match child.wait_timeout(self.timeout).map_err(|e| HarnessError::SandboxUnavailable(e.to_string()))? {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                debug_assert!(started.elapsed() >= self.timeout);
                return Ok(TestOutcome {
                    status: TestStatus::Timeout,
                    detail: format!("exceeded {:.1}s", self.timeout.as_secs_f64()),
                });
            }
        };

        let line = std::fs::read_to_string(&report).unwrap_or_default();
        let (status, detail) = match line.split_once(' ').unwrap_or((line.as_str(), "")) {
            ("PASS", _) => (TestStatus::Pass, String::new()),
            ("FAIL", rest) => (TestStatus::Fail, rest.to_string()),
            ("ERROR", rest) => (TestStatus::Error, rest.to_string()),
            _ => (TestStatus::Error, format!("process exited with {status} without reporting")),
        };
        Ok(TestOutcome { status, detail })
    }
}
