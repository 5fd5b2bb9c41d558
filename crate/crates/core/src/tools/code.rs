use std::io::Read;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ToolResult, PYTHON_CODER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeConfig {
    pub enabled: bool,
    pub timeout: Duration,
    pub python: String,
}

impl Default for CodeConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            timeout: Duration::from_secs(10),
            python: "python3".into(),
        }
    }
}

fn drain(mut pipe: impl Read + Send + 'static) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Runs Python source in an isolated child interpreter under a wall-clock timeout.
///
/// A script that runs to completion is a transport success even when it raises;
/// its stderr is appended to the output. Timeouts, spawn failures and the
/// disabled gate are reported with `transport_ok = false`.
pub fn run_code(source: &str, timeout: Duration, enabled: bool, python: &str) -> ToolResult {
    if !enabled {
        return ToolResult::failure(PYTHON_CODER, "code execution disabled");
    }
    let started = Instant::now();
    let mut child = match Command::new(python)
        .arg("-I")
        .arg("-c")
        .arg(source)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => {
            return ToolResult::failure(PYTHON_CODER, format!("could not start {python}: {e}"))
        }
    };
    let stdout = drain(child.stdout.take().expect("stdout piped"));
    let stderr = drain(child.stderr.take().expect("stderr piped"));

    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if started.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return ToolResult::failure(PYTHON_CODER, format!("wait failed: {e}")),
        }
    };
    let out = stdout.join().unwrap_or_default();
    let err = stderr.join().unwrap_or_default();

    let Some(status) = status else {
        return ToolResult::failure(
            PYTHON_CODER,
            format!("execution timed out after {:.1} s", timeout.as_secs_f64()),
        );
    };
    let mut output = out.trim_end().to_string();
    if !err.trim().is_empty() {
        if !output.is_empty() {
            output.push('\n');
        }
        output.push_str("[stderr] ");
        output.push_str(err.trim_end());
    }
    if !status.success() && output.is_empty() {
        output = format!("process exited with {status}");
    }
    ToolResult::ok(PYTHON_CODER, output)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn python_available() -> bool {
        Command::new("python3").arg("--version").output().is_ok()
    }

    #[test]
    fn prints_output() {
        if !python_available() {
            return;
        }
        let r = run_code("print(42)", Duration::from_secs(10), true, "python3");
        assert!(r.transport_ok);
        assert_eq!(r.raw_output, "42");
    }

    #[test]
    fn infinite_loop_times_out() {
        if !python_available() {
            return;
        }
        let started = Instant::now();
        let r = run_code(
            "while True:\n    pass",
            Duration::from_secs(2),
            true,
            "python3",
        );
        assert!(!r.transport_ok);
        assert!(r.raw_output.contains("timed out"));
        assert!(started.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn disabled_gate() {
        let r = run_code("print(1)", Duration::from_secs(1), false, "python3");
        assert!(!r.transport_ok);
        assert_eq!(r.raw_output, "code execution disabled");
    }

    #[test]
    fn exceptions_are_reported_in_output() {
        if !python_available() {
            return;
        }
        let r = run_code(
            "raise ValueError('boom')",
            Duration::from_secs(10),
            true,
            "python3",
        );
        assert!(r.transport_ok);
        assert!(r.raw_output.contains("ValueError: boom"));
    }
}
