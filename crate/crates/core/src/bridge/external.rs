use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use super::{Backend, BackendJob, BackendResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WireMode {
    /// One JSON line on stdin, one JSON line back on stdout.
    #[default]
    Stdio,
    /// `--job-file <path> --result-file <path>` appended to the command.
    Files,
}

/// Runs each job in a child process speaking the wire protocol.
#[derive(Debug, Clone)]
pub struct ExternalBackend {
    pub program: String,
    pub args: Vec<String>,
    pub mode: WireMode,
    pub timeout: Duration,
}

impl ExternalBackend {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            mode: WireMode::Stdio,
            timeout: Duration::from_secs(3600),
        }
    }

    /// Splits a command line on whitespace. No shell quoting.
    pub fn from_command_line(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty backend command".into()))?;
        Ok(Self::new(program, parts.collect()))
    }

    pub fn with_mode(mut self, mode: WireMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args);
        cmd
    }

    fn spawn_error(&self, e: std::io::Error) -> Error {
        Error::Process(format!("failed to start `{}`: {e}", self.program))
    }

    fn run_stdio(&self, job: &BackendJob) -> Result<BackendResult> {
        let mut child = self
            .command()
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| self.spawn_error(e))?;

        let mut line = serde_json::to_string(job)?;
        line.push('\n');
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let writer = thread::spawn(move || {
            // A backend may exit without reading everything; that shows up as
            // a missing or invalid result, not here.
            let _ = stdin.write_all(line.as_bytes());
        });

        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            let mut buf = String::new();
            let found = loop {
                buf.clear();
                match reader.read_line(&mut buf) {
                    Ok(0) => break None,
                    Ok(_) if buf.trim().is_empty() => continue,
                    Ok(_) => break Some(Ok(buf.trim().to_string())),
                    Err(e) => break Some(Err(e)),
                }
            };
            let _ = tx.send(found);
        });

        let line = match rx.recv_timeout(self.timeout) {
            Ok(found) => found,
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::Timeout(self.timeout));
            }
        };
        let _ = writer.join();
        let status = wait_with_timeout(&mut child, self.timeout)?;
        if !status.success() {
            return Err(Error::Process(format!("exited with {status}{}", stderr_tail(&mut child))));
        }
        let line = match line {
            Some(Ok(line)) => line,
            Some(Err(e)) => return Err(Error::Process(format!("reading stdout: {e}"))),
            None => return Err(Error::Protocol("backend produced no result line".into())),
        };
        serde_json::from_str(&line).map_err(|e| Error::Protocol(format!("malformed result: {e}")))
    }

    fn run_files(&self, job: &BackendJob) -> Result<BackendResult> {
        let dir = tempfile::tempdir().map_err(|e| Error::Process(format!("temp dir: {e}")))?;
        let job_path = dir.path().join("job.json");
        let result_path = dir.path().join("result.json");
        std::fs::write(&job_path, serde_json::to_vec(job)?).map_err(|e| Error::io(&job_path, e))?;

        let mut child = self
            .command()
            .arg("--job-file")
            .arg(&job_path)
            .arg("--result-file")
            .arg(&result_path)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| self.spawn_error(e))?;
        let status = wait_with_timeout(&mut child, self.timeout)?;
        if !status.success() {
            return Err(Error::Process(format!("exited with {status}{}", stderr_tail(&mut child))));
        }
        let text = std::fs::read_to_string(&result_path)
            .map_err(|e| Error::Protocol(format!("no result file: {e}")))?;
        serde_json::from_str(text.trim()).map_err(|e| Error::Protocol(format!("malformed result: {e}")))
    }
}

fn wait_with_timeout(child: &mut Child, timeout: Duration) -> Result<std::process::ExitStatus> {
    let deadline = Instant::now() + timeout;
    loop {
        match child.try_wait() {
            Ok(Some(status)) => return Ok(status),
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::Timeout(timeout));
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(Error::Process(e.to_string())),
        }
    }
}

fn stderr_tail(child: &mut Child) -> String {
    let mut text = String::new();
    if let Some(mut err) = child.stderr.take() {
        let _ = err.read_to_string(&mut text);
    }
    let text = text.trim();
    if text.is_empty() {
        return String::new();
    }
    let tail: Vec<&str> = text.lines().rev().take(5).collect();
    let tail: Vec<&str> = tail.into_iter().rev().collect();
    format!(": {}", tail.join(" | "))
}

impl Backend for ExternalBackend {
    fn name(&self) -> String {
        format!("external:{}", std::iter::once(&self.program).chain(&self.args).cloned().collect::<Vec<_>>().join(" "))
    }

    fn run(&self, job: &BackendJob) -> Result<BackendResult> {
        job.validate()?;
        let result = match self.mode {
            WireMode::Stdio => self.run_stdio(job)?,
            WireMode::Files => self.run_files(job)?,
        };
        result.validate(job)?;
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{build_job, Hyperparams};
    use crate::dataset::{DatasetExample, Gold};
    use crate::registry::TaskSpec;

    fn job() -> BackendJob {
        let ex = |s: &str, g| DatasetExample {
            id: s.into(),
            s1: s.into(),
            s2: None,
            gold: Gold::Class(g),
        };
        let task = TaskSpec::load("sst-2").unwrap();
        build_job(&task, &[ex("a", 0), ex("b", 1)], &[ex("c", 0)], &[ex("d", 1)], Hyperparams::default()).unwrap()
    }

    fn sh(script: &str) -> ExternalBackend {
        ExternalBackend::new("sh", vec!["-c".into(), script.into()]).with_timeout(Duration::from_secs(10))
    }

    #[test]
    fn stdio_round_trip() {
        let b = sh(r#"read line; echo '{"version":1,"probs":{"dev-0":[0.5,0.5],"test-0":[0.5,0.5]}}'"#);
        let r = b.run(&job()).unwrap();
        assert_eq!(r.probs["test-0"], vec![0.5, 0.5]);
    }

    #[test]
    fn missing_id_is_a_protocol_error() {
        let b = sh(r#"read line; echo '{"version":1,"probs":{"dev-0":[0.5,0.5]}}'"#);
        let err = b.run(&job()).unwrap_err();
        assert!(matches!(err, Error::Protocol(ref m) if m.contains("test-0")), "{err}");
    }

    #[test]
    fn bad_probability_is_a_protocol_error() {
        let b = sh(r#"read line; echo '{"version":1,"probs":{"dev-0":[0.5,1.5],"test-0":[0.5,0.5]}}'"#);
        assert!(matches!(b.run(&job()), Err(Error::Protocol(_))));
    }

    #[test]
    fn nonzero_exit() {
        let b = sh("echo boom >&2; exit 3");
        let err = b.run(&job()).unwrap_err().to_string();
        assert!(err.contains("boom"), "{err}");
    }

    #[test]
    fn garbage_output() {
        let b = sh("read line; echo not json");
        assert!(matches!(b.run(&job()), Err(Error::Protocol(_))));
        let b = sh("read line");
        assert!(matches!(b.run(&job()), Err(Error::Protocol(_))));
    }

    #[test]
    fn timeout_kills_the_child() {
        let b = sh("sleep 5").with_timeout(Duration::from_millis(200));
        let start = Instant::now();
        assert!(matches!(b.run(&job()), Err(Error::Timeout(_))));
        assert!(start.elapsed() < Duration::from_secs(4));
    }

    #[test]
    fn file_handoff() {
        let script = r#"
            while [ $# -gt 0 ]; do
              case "$1" in --result-file) out="$2"; shift;; esac; shift
            done
            echo '{"version":1,"probs":{"dev-0":[0.1,0.9],"test-0":[0.7,0.2]}}' > "$out"
        "#;
        let b = ExternalBackend::new("sh", vec!["-c".into(), script.into(), "backend".into()])
            .with_mode(WireMode::Files)
            .with_timeout(Duration::from_secs(10));
        let r = b.run(&job()).unwrap();
        assert_eq!(r.probs["test-0"], vec![0.7, 0.2]);
    }

    #[test]
    fn missing_program() {
        let b = ExternalBackend::new("/nonexistent/backend", vec![]);
        assert!(matches!(b.run(&job()), Err(Error::Process(_))));
    }

    #[test]
    fn command_line_parsing() {
        let b = ExternalBackend::from_command_line("python3 serve.py --model base").unwrap();
        assert_eq!(b.program, "python3");
        assert_eq!(b.args, ["serve.py", "--model", "base"]);
        assert!(ExternalBackend::from_command_line("   ").is_err());
    }
}
