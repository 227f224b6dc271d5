//! Line-delimited JSON protocol to the sandbox runner, plus an in-process
//! scripted runner for offline use.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pysyntax;

pub const STDERR_TAIL_BYTES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    pub code: String,
    pub timeout_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReply {
    /// Exit code, or the negated signal number.
    pub outcome_raw: i64,
    pub wall_s: f64,
    #[serde(default)]
    pub stderr_tail: String,
    /// Set by runners that report their own time-limit kills.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub timed_out: bool,
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("cannot start runner {command:?}: {message}")]
    Spawn { command: String, message: String },
    #[error("runner died: {0}")]
    Died(String),
    #[error("runner protocol error: {0}")]
    Protocol(String),
    #[error("runner gave up after {0} deaths")]
    CrashLoop(usize),
    #[error("cannot load mock runner script {path}: {message}")]
    Script { path: String, message: String },
}

/// Keeps at most the last `max` bytes, cut at a char boundary.
pub fn tail_bytes(s: &str, max: usize) -> &str {
    if s.len() <= max {
        return s;
    }
    let mut start = s.len() - max;
    while !s.is_char_boundary(start) {
        start += 1;
    }
    &s[start..]
}

pub fn encode_request(req: &RunRequest) -> String {
    serde_json::to_string(req).expect("request serializes")
}

/// Parses one reply line. A `{"error": ...}` line is the runner's
/// protocol-error marker.
pub fn decode_reply(line: &str) -> Result<RunReply, RunnerError> {
    let value: serde_json::Value =
        serde_json::from_str(line.trim()).map_err(|e| RunnerError::Protocol(format!("{e}: {line:?}")))?;
    if let Some(err) = value.get("error") {
        return Err(RunnerError::Protocol(err.to_string()));
    }
    let mut reply: RunReply =
        serde_json::from_value(value).map_err(|e| RunnerError::Protocol(format!("{e}: {line:?}")))?;
    reply.stderr_tail = tail_bytes(&reply.stderr_tail, STDERR_TAIL_BYTES).to_string();
    Ok(reply)
}

/// Executes one program.
pub trait Runner: Send + Sync {
    fn run(&self, code: &str, timeout_s: f64) -> Result<RunReply, RunnerError>;

    /// Number of times the runner process itself died.
    fn deaths(&self) -> usize {
        0
    }
}

struct Conn {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for Conn {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Talks to external runner processes over stdio. Up to `slots` processes
/// serve requests concurrently; a process that dies is replaced on the
/// next request.
pub struct ProcessRunner {
    argv: Vec<String>,
    grace: Duration,
    idle: Mutex<Vec<Option<Conn>>>,
    free: Condvar,
    deaths: AtomicUsize,
}

impl ProcessRunner {
    /// `command` is split on whitespace into program and arguments.
    pub fn new(command: &str, slots: usize) -> Result<Self, RunnerError> {
        let argv: Vec<String> = command.split_whitespace().map(str::to_string).collect();
        if argv.is_empty() {
            return Err(RunnerError::Spawn {
                command: command.into(),
                message: "empty command".into(),
            });
        }
        Ok(ProcessRunner {
            argv,
            grace: Duration::from_secs(10),
            idle: Mutex::new((0..slots.max(1)).map(|_| None).collect()),
            free: Condvar::new(),
            deaths: AtomicUsize::new(0),
        })
    }

    fn spawn(&self) -> Result<Conn, RunnerError> {
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| RunnerError::Spawn {
                command: self.argv.join(" "),
                message: e.to_string(),
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Conn { child, stdin, lines: rx })
    }

    fn exchange(&self, conn: &mut Conn, req: &RunRequest) -> Result<RunReply, RunnerError> {
        writeln!(conn.stdin, "{}", encode_request(req))
            .and_then(|_| conn.stdin.flush())
            .map_err(|e| RunnerError::Died(e.to_string()))?;
        let wait = Duration::from_secs_f64(req.timeout_s.max(0.0)) + self.grace;
        match conn.lines.recv_timeout(wait) {
            Ok(Ok(line)) => decode_reply(&line),
            Ok(Err(e)) => Err(RunnerError::Died(e.to_string())),
            Err(RecvTimeoutError::Timeout) => Err(RunnerError::Died("no reply within the time limit".into())),
            Err(RecvTimeoutError::Disconnected) => Err(RunnerError::Died("runner closed its output".into())),
        }
    }
}

impl Runner for ProcessRunner {
    fn run(&self, code: &str, timeout_s: f64) -> Result<RunReply, RunnerError> {
        let slot = {
            let mut idle = self.idle.lock().unwrap();
            while idle.is_empty() {
                idle = self.free.wait(idle).unwrap();
            }
            idle.pop().unwrap()
        };
        let mut conn = match slot {
            Some(c) => Some(c),
            None => match self.spawn() {
                Ok(c) => Some(c),
                Err(e) => {
                    self.idle.lock().unwrap().push(None);
                    self.free.notify_one();
                    return Err(e);
                }
            },
        };
        let req = RunRequest {
            code: code.into(),
            timeout_s,
        };
        let result = self.exchange(conn.as_mut().unwrap(), &req);
        if let Err(RunnerError::Died(_)) = &result {
            self.deaths.fetch_add(1, Ordering::SeqCst);
            conn = None;
        }
        self.idle.lock().unwrap().push(conn);
        self.free.notify_one();
        result
    }

    fn deaths(&self) -> usize {
        self.deaths.load(Ordering::SeqCst)
    }
}

/// One scripted behavior of the mock runner. A rule applies when the
/// program contains every `all_of` substring and matches `regex` (if set).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub all_of: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regex: Option<String>,
    pub outcome_raw: i64,
    #[serde(default)]
    pub stderr_tail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    /// Wall time reported when a rule does not set one.
    #[serde(default = "default_wall")]
    pub wall_s: f64,
    /// Programs that do not parse fail like an interpreter would.
    #[serde(default = "default_true")]
    pub reject_unparsable: bool,
}

fn default_wall() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

impl Default for MockScript {
    fn default() -> Self {
        MockScript {
            rules: Vec::new(),
            wall_s: default_wall(),
            reject_unparsable: true,
        }
    }
}

/// Deterministic in-process runner driven by a [`MockScript`]. Programs
/// that match no rule exit 0.
pub struct MockRunner {
    script: MockScript,
    compiled: Vec<Option<Regex>>,
    calls: AtomicUsize,
}

impl MockRunner {
    pub fn new(script: MockScript) -> Result<Self, RunnerError> {
        let compiled = script
            .rules
            .iter()
            .map(|r| {
                r.regex
                    .as_deref()
                    .map(Regex::new)
                    .transpose()
                    .map_err(|e| RunnerError::Script {
                        path: "<inline>".into(),
                        message: e.to_string(),
                    })
            })
            .collect::<Result<_, _>>()?;
        Ok(MockRunner {
            script,
            compiled,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let script_err = |message: String| RunnerError::Script {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| script_err(e.to_string()))?;
        let script: MockScript = serde_json::from_str(&text).map_err(|e| script_err(e.to_string()))?;
        Self::new(script)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Runner for MockRunner {
    fn run(&self, code: &str, timeout_s: f64) -> Result<RunReply, RunnerError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.script.reject_unparsable {
            if let Err(e) = pysyntax::check(code) {
                return Ok(RunReply {
                    outcome_raw: 1,
                    wall_s: self.script.wall_s.min(timeout_s),
                    stderr_tail: format!("  File \"<program>\", line {}\n{}: {}", e.line, "SyntaxError", e.message),
                    timed_out: false,
                });
            }
        }
        for (rule, re) in self.script.rules.iter().zip(&self.compiled) {
            let hit = rule.all_of.iter().all(|s| code.contains(s.as_str())) && re.as_ref().is_none_or(|r| r.is_match(code));
            if hit {
                let wall = rule.wall_s.unwrap_or(self.script.wall_s);
                return Ok(RunReply {
                    outcome_raw: rule.outcome_raw,
                    wall_s: wall.min(timeout_s),
                    stderr_tail: tail_bytes(&rule.stderr_tail, STDERR_TAIL_BYTES).to_string(),
                    timed_out: wall >= timeout_s,
                });
            }
        }
        Ok(RunReply {
            outcome_raw: 0,
            wall_s: self.script.wall_s.min(timeout_s),
            stderr_tail: String::new(),
            timed_out: false,
        })
    }
}
