//! Mutation, execution and crash triage.

mod campaign;
mod mutate;
mod runner;

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::ApiRef;

pub use campaign::{run_campaign, Budget, CampaignConfig, CampaignError, CampaignResult};
pub use mutate::{
    mutate, Mutation, MutationConfig, MutationKind, MutationOp, DEFAULT_BOUNDARY_VALUES, DEFAULT_DTYPES,
};
pub use runner::{
    decode_reply, encode_request, tail_bytes, MockRule, MockRunner, MockScript, ProcessRunner, RunReply,
    RunRequest, Runner, RunnerError, STDERR_TAIL_BYTES,
};

pub const SIGABRT: i64 = 6;
pub const SIGFPE: i64 = 8;
pub const SIGSEGV: i64 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Segv,
    #[serde(rename = "FPE")]
    Fpe,
    Abort,
    InternalFailure,
    CompileFailure,
    Timeout,
    Pass,
    Error,
}

impl Outcome {
    /// Outcomes that count as framework bugs and feed back into the store.
    pub fn is_bug(self) -> bool {
        matches!(
            self,
            Outcome::Segv | Outcome::Fpe | Outcome::Abort | Outcome::InternalFailure | Outcome::CompileFailure
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Segv => "Segv",
            Outcome::Fpe => "FPE",
            Outcome::Abort => "Abort",
            Outcome::InternalFailure => "InternalFailure",
            Outcome::CompileFailure => "CompileFailure",
            Outcome::Timeout => "Timeout",
            Outcome::Pass => "Pass",
            Outcome::Error => "Error",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Framework-specific stderr conventions, matched case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriageConfig {
    pub internal_patterns: Vec<String>,
    pub compile_patterns: Vec<String>,
}

impl Default for TriageConfig {
    fn default() -> Self {
        TriageConfig {
            internal_patterns: vec!["Please report this bug".into(), "INTERNAL ASSERT FAILED".into()],
            compile_patterns: vec![
                "compilation failed".into(),
                "CompileError".into(),
                "compile error".into(),
                "nvcc fatal".into(),
                "g++: error".into(),
            ],
        }
    }
}

fn contains_any(haystack: &str, patterns: &[String]) -> bool {
    let h = haystack.to_lowercase();
    patterns.iter().any(|p| !p.is_empty() && h.contains(&p.to_lowercase()))
}

/// Classifies one raw execution result.
pub fn triage(reply: &RunReply, timeout_s: f64, cfg: &TriageConfig) -> Outcome {
    if reply.timed_out || (reply.outcome_raw < 0 && reply.wall_s >= timeout_s) {
        return Outcome::Timeout;
    }
    match reply.outcome_raw {
        0 => Outcome::Pass,
        s if s == -SIGSEGV => Outcome::Segv,
        s if s == -SIGFPE => Outcome::Fpe,
        s if s == -SIGABRT => Outcome::Abort,
        s if s > 0 && contains_any(&reply.stderr_tail, &cfg.internal_patterns) => Outcome::InternalFailure,
        s if s > 0 && contains_any(&reply.stderr_tail, &cfg.compile_patterns) => Outcome::CompileFailure,
        _ => Outcome::Error,
    }
}

/// First non-empty stderr line with addresses and long hex runs removed.
pub fn normalized_signature(stderr: &str) -> String {
    static HEX: OnceLock<Regex> = OnceLock::new();
    let hex = HEX.get_or_init(|| Regex::new(r"0[xX][0-9a-fA-F]+|\b[0-9a-fA-F]{8,}\b").unwrap());
    let line = stderr.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let stripped = hex.replace_all(line, "");
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn dedup_key(target: &ApiRef, outcome: Outcome, stderr: &str) -> String {
    let mut h = Sha256::new();
    h.update(target.to_string().as_bytes());
    h.update([0]);
    h.update(outcome.name().as_bytes());
    h.update([0]);
    h.update(normalized_signature(stderr).as_bytes());
    hex::encode(h.finalize())
}

/// How a mutant was derived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub parent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<MutationOp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashReport {
    pub test_case: String,
    pub target: ApiRef,
    pub outcome: Outcome,
    pub signal_or_code: i64,
    pub stderr_tail: String,
    pub dedup_key: String,
    pub wall_s: f64,
    pub lineage: Lineage,
    pub code: String,
}

impl CrashReport {
    pub fn new(test_case: String, target: ApiRef, reply: &RunReply, outcome: Outcome, lineage: Lineage, code: String) -> Self {
        let signal_or_code = if reply.outcome_raw < 0 { -reply.outcome_raw } else { reply.outcome_raw };
        CrashReport {
            dedup_key: dedup_key(&target, outcome, &reply.stderr_tail),
            test_case,
            target,
            outcome,
            signal_or_code,
            stderr_tail: reply.stderr_tail.clone(),
            wall_s: reply.wall_s,
            lineage,
            code,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reply(raw: i64, stderr: &str) -> RunReply {
        RunReply {
            outcome_raw: raw,
            wall_s: 0.2,
            stderr_tail: stderr.into(),
            timed_out: false,
        }
    }

    #[test]
    fn triage_table() {
        let cfg = TriageConfig::default();
        assert_eq!(triage(&reply(-11, ""), 30.0, &cfg), Outcome::Segv);
        assert_eq!(triage(&reply(-8, ""), 30.0, &cfg), Outcome::Fpe);
        assert_eq!(triage(&reply(-6, ""), 30.0, &cfg), Outcome::Abort);
        assert_eq!(triage(&reply(0, "warning"), 30.0, &cfg), Outcome::Pass);
        assert_eq!(
            triage(&reply(1, "Please report this bug to the relevant platform/organization."), 30.0, &cfg),
            Outcome::InternalFailure
        );
        assert_eq!(triage(&reply(1, "jit: compilation failed for kernel"), 30.0, &cfg), Outcome::CompileFailure);
        assert_eq!(triage(&reply(1, "ValueError: bad"), 30.0, &cfg), Outcome::Error);
        assert_eq!(triage(&reply(-9, ""), 30.0, &cfg), Outcome::Error);
        let mut slow = reply(-9, "");
        slow.wall_s = 30.0;
        assert_eq!(triage(&slow, 30.0, &cfg), Outcome::Timeout);
        let mut flagged = reply(0, "");
        flagged.timed_out = true;
        assert_eq!(triage(&flagged, 30.0, &cfg), Outcome::Timeout);
    }

    #[test]
    fn dedup_ignores_addresses() {
        let api = ApiRef::new("torch", "torch.nn.MaxPool2d");
        let a = dedup_key(&api, Outcome::Segv, "\n  Fatal at 0x7ffd1234abcd in deadbeefcafe\nmore");
        let b = dedup_key(&api, Outcome::Segv, "Fatal at 0x55aa00 in 0123456789ab");
        assert_eq!(a, b);
        assert_ne!(a, dedup_key(&api, Outcome::Abort, "Fatal at 0x55aa00 in 0123456789ab"));
        assert_ne!(a, dedup_key(&ApiRef::new("torch", "x"), Outcome::Segv, "Fatal at"));
    }

    #[test]
    fn bug_classes() {
        assert!(Outcome::Segv.is_bug() && Outcome::CompileFailure.is_bug());
        assert!(!Outcome::Timeout.is_bug() && !Outcome::Pass.is_bug() && !Outcome::Error.is_bug());
        assert_eq!(serde_json::to_string(&Outcome::Fpe).unwrap(), "\"FPE\"");
    }
}
