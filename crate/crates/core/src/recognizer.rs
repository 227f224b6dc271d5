//! Buggy-API recognition and verification for mined issues.

use std::collections::BTreeSet;
use std::process::{Command, Stdio};
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::catalog::{complete_api_name, completion_cap, ApiRecord, ApiRef};
use crate::ingest::{description_text, IssueRecord, SnippetOrigin, SourceSnippet};
use crate::llm::{parse_verdict, FieldKind, LlmClient, LlmError, OutputContract, Prompt};
use crate::pysyntax;

pub const UNKNOWN_PARAM: &str = "unknown";
pub const ROOT_CAUSE_CAP: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BugSource {
    Mined,
    FuzzerFound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugRecord {
    pub framework: String,
    pub buggy_api: String,
    pub trigger_params: Vec<String>,
    pub root_cause: String,
    pub snippet: SourceSnippet,
    /// Provenance for mined records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issue_id: Option<String>,
    /// Crash dedup key for fuzzer-found records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup_key: Option<String>,
    pub verified: bool,
    pub source: BugSource,
}

/// Identity of a bug record in the store.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BugKey {
    pub api: ApiRef,
    pub provenance: String,
}

impl BugRecord {
    pub fn api_ref(&self) -> ApiRef {
        ApiRef::new(&self.framework, &self.buggy_api)
    }

    pub fn key(&self) -> BugKey {
        let provenance = match (&self.dedup_key, &self.issue_id) {
            (Some(k), _) => format!("crash:{k}"),
            (None, Some(id)) => format!("issue:{id}"),
            (None, None) => format!("snippet:{}", crate::llm::task_digest(&self.snippet.text)),
        };
        BugKey {
            api: self.api_ref(),
            provenance,
        }
    }

    pub fn id(&self) -> String {
        let k = self.key();
        format!("{}#{}", k.api, k.provenance)
    }
}

/// How snippet syntax is checked.
pub trait SyntaxHost {
    /// `Ok(parses)`, or `Err` if the host itself could not run.
    fn check(&self, code: &str) -> Result<bool, String>;
}

/// Built-in syntax-only checker; needs no interpreter.
pub struct SyntaxOnly;

impl SyntaxHost for SyntaxOnly {
    fn check(&self, code: &str) -> Result<bool, String> {
        Ok(pysyntax::parses(code))
    }
}

/// Compiles through a real interpreter (`python3 -c "compile(...)"`).
pub struct InterpreterHost {
    pub program: String,
}

impl SyntaxHost for InterpreterHost {
    fn check(&self, code: &str) -> Result<bool, String> {
        let mut child = Command::new(&self.program)
            .args(["-c", "import sys; compile(sys.stdin.read(), '<snippet>', 'exec')"])
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        child
            .stdin
            .take()
            .ok_or("no stdin")?
            .write_all(code.as_bytes())
            .map_err(|e| e.to_string())?;
        let status = child.wait().map_err(|e| e.to_string())?;
        Ok(status.success())
    }
}

/// Sets and returns `snippet.parses`. Falls back to the syntax-only checker
/// when the host cannot run.
pub fn compile_filter(snippet: &mut SourceSnippet, host: &dyn SyntaxHost) -> bool {
    let ok = match snippet.origin {
        SnippetOrigin::LinkedResource => false,
        SnippetOrigin::FencedBlock if snippet.text.trim().is_empty() => false,
        SnippetOrigin::FencedBlock => match host.check(&snippet.text) {
            Ok(ok) => ok,
            Err(e) => {
                log::warn!("syntax host unavailable ({e}); using syntax-only mode");
                pysyntax::parses(&snippet.text)
            }
        },
    };
    snippet.parses = ok;
    ok
}

/// Which issue context goes into the recognition prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptVariant {
    /// Code, title and description.
    #[default]
    All,
    NoTitle,
    NoDescription,
    NoTitleDescription,
}

impl std::str::FromStr for PromptVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(PromptVariant::All),
            "no-t" => Ok(PromptVariant::NoTitle),
            "no-d" => Ok(PromptVariant::NoDescription),
            "no-td" => Ok(PromptVariant::NoTitleDescription),
            _ => Err(format!("unknown prompt variant {s:?} (all|no-t|no-d|no-td)")),
        }
    }
}

impl PromptVariant {
    fn with_title(self) -> bool {
        matches!(self, PromptVariant::All | PromptVariant::NoDescription)
    }

    fn with_description(self) -> bool {
        matches!(self, PromptVariant::All | PromptVariant::NoTitle)
    }
}

const RECOGNIZE_SYSTEM: &str = "You are an expert in testing deep learning frameworks. \
You read bug reports and determine which framework API is responsible for the bug, \
which of its parameters trigger it, and why.";

const RECOGNIZE_EXAMPLE_IN: &str = "Framework: torch
Title: avg_pool2d crashes with zero stride
Description:
Calling avg_pool2d with stride=0 kills the process with a floating point exception.
Code:
```python
import torch
input = torch.randn(10, 3, 20, 20)
torch.nn.functional.avg_pool2d(input, kernel_size=4, stride=0)
```";

const RECOGNIZE_EXAMPLE_OUT: &str = "The reproducer builds a valid input tensor and makes a single framework call, \
torch.nn.functional.avg_pool2d. The only unusual argument is stride=0; a zero stride makes the output-size \
computation divide by zero, which matches the reported floating point exception. So the buggy API is \
torch.nn.functional.avg_pool2d and the triggering parameter is stride.
```json
{\"bugs\": [{\"api\": \"torch.nn.functional.avg_pool2d\", \"params\": [\"stride\"], \"root_cause\": \"A stride of zero is not validated and causes a division by zero when computing the output size.\"}]}
```";

pub fn recognition_contract() -> OutputContract {
    OutputContract {
        description: "List every buggy API under \"bugs\"; each entry has \"api\" (the fully qualified API name), \
\"params\" (names of the parameters that trigger the bug) and \"root_cause\" (one or two sentences)."
            .into(),
        fields: vec![("bugs".into(), FieldKind::Array)],
    }
}

fn issue_context(issue: &IssueRecord, variant: PromptVariant) -> String {
    let mut task = format!("Framework: {}\n", issue.framework);
    if variant.with_title() {
        task.push_str(&format!("Title: {}\n", issue.title));
    }
    if variant.with_description() {
        task.push_str(&format!("Description:\n{}\n", description_text(issue)));
    }
    let code: Vec<&str> = issue
        .snippets
        .iter()
        .filter(|s| s.parses)
        .map(|s| s.text.as_str())
        .collect();
    if !code.is_empty() {
        task.push_str("Code:\n");
        for c in code {
            task.push_str("```python\n");
            task.push_str(c);
            task.push_str("\n```\n");
        }
    }
    task
}

pub fn build_recognition_prompt(issue: &IssueRecord, variant: PromptVariant) -> Prompt {
    let mut task = String::from("Identify the buggy API in this bug report.\n\n");
    task.push_str(&issue_context(issue, variant));
    Prompt {
        system: RECOGNIZE_SYSTEM.into(),
        examples: vec![(RECOGNIZE_EXAMPLE_IN.into(), RECOGNIZE_EXAMPLE_OUT.into())],
        task,
        output_contract: recognition_contract(),
    }
}

fn cap_chars(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

/// Why an issue produced no records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unrecognized {
    InvalidReply,
    NoCandidateInCatalog,
}

#[derive(Debug)]
pub struct Recognition {
    pub records: Vec<BugRecord>,
    pub status: Result<(), Unrecognized>,
}

/// Asks the model for (api, params, cause) triples, completes each API name
/// against the framework catalog and drops completions beyond the cap.
pub fn recognize(
    issue: &IssueRecord,
    variant: PromptVariant,
    llm: &LlmClient,
    budget: u32,
    catalog: &[ApiRecord],
) -> Result<Recognition, LlmError> {
    let prompt = build_recognition_prompt(issue, variant);
    let completion = llm.complete(&prompt, budget)?;
    let Some(payload) = completion.parsed.filter(|_| completion.valid) else {
        return Ok(Recognition {
            records: vec![],
            status: Err(Unrecognized::InvalidReply),
        });
    };
    let records = records_from_payload(issue, &payload, catalog);
    let status = if records.is_empty() {
        Err(Unrecognized::NoCandidateInCatalog)
    } else {
        Ok(())
    };
    Ok(Recognition { records, status })
}

fn records_from_payload(issue: &IssueRecord, payload: &Value, catalog: &[ApiRecord]) -> Vec<BugRecord> {
    let mut out: Vec<BugRecord> = Vec::new();
    let Some(bugs) = payload["bugs"].as_array() else {
        return out;
    };
    for bug in bugs {
        let Some(partial) = bug["api"].as_str().map(str::trim).filter(|s| !s.is_empty()) else {
            continue;
        };
        let Some(done) = complete_api_name(partial, catalog) else {
            continue;
        };
        if done.distance as f64 > completion_cap(partial) {
            log::debug!("dropping {partial:?}: nearest catalog name {} at distance {}", done.full_name, done.distance);
            continue;
        }
        let api = catalog
            .iter()
            .find(|a| a.full_name == done.full_name)
            .expect("completion is a catalog member");
        let mut params: Vec<String> = Vec::new();
        for p in bug["params"].as_array().into_iter().flatten() {
            let name = match p {
                Value::String(s) => s.trim().to_string(),
                other => other.to_string(),
            };
            let name = if api.has_param(&name) { name } else { UNKNOWN_PARAM.to_string() };
            if !params.contains(&name) {
                params.push(name);
            }
        }
        let root_cause = cap_chars(bug["root_cause"].as_str().unwrap_or("").trim(), ROOT_CAUSE_CAP);
        if let Some(existing) = out.iter_mut().find(|r| r.buggy_api == api.full_name) {
            for p in params {
                if !existing.trigger_params.contains(&p) {
                    existing.trigger_params.push(p);
                }
            }
            continue;
        }
        out.push(BugRecord {
            framework: issue.framework.clone(),
            buggy_api: api.full_name.clone(),
            trigger_params: params,
            root_cause,
            snippet: pick_snippet(issue, api.short_name()),
            issue_id: Some(issue.issue_id.clone()),
            dedup_key: None,
            verified: false,
            source: BugSource::Mined,
        });
    }
    out
}

/// The parsing snippet that mentions the API, else the first parsing one.
fn pick_snippet(issue: &IssueRecord, short_name: &str) -> SourceSnippet {
    let parsing: Vec<&SourceSnippet> = issue.snippets.iter().filter(|s| s.parses).collect();
    parsing
        .iter()
        .find(|s| s.text.contains(short_name))
        .or_else(|| parsing.first())
        .map(|s| (*s).clone())
        .unwrap_or_else(|| SourceSnippet::code(""))
}

const VERIFY_SYSTEM: &str = "You are an expert in testing deep learning frameworks. \
You check whether a proposed buggy API really is responsible for a reported bug.";

const VERIFY_EXAMPLE_IN: &str = "Candidate API: torch.randn
Candidate parameters: size
Candidate root cause: randn crashes for large sizes.
Framework: torch
Title: avg_pool2d crashes with zero stride
Code:
```python
import torch
input = torch.randn(10, 3, 20, 20)
torch.nn.functional.avg_pool2d(input, kernel_size=4, stride=0)
```";

const VERIFY_EXAMPLE_OUT: &str = "torch.randn only builds the input with ordinary sizes; the crash follows the \
avg_pool2d call with stride=0. The candidate is not the buggy API.
```json
{\"verdict\": \"no\", \"reason\": \"The crash is triggered by avg_pool2d with stride=0, not by randn.\"}
```";

pub fn build_verification_prompt(record: &BugRecord, issue: &IssueRecord) -> Prompt {
    let mut task = String::from("Decide whether the candidate API is the buggy API of this report.\n\n");
    task.push_str(&format!("Candidate API: {}\n", record.buggy_api));
    task.push_str(&format!("Candidate parameters: {}\n", record.trigger_params.join(", ")));
    task.push_str(&format!("Candidate root cause: {}\n", record.root_cause));
    task.push_str(&issue_context(issue, PromptVariant::All));
    Prompt {
        system: VERIFY_SYSTEM.into(),
        examples: vec![(VERIFY_EXAMPLE_IN.into(), VERIFY_EXAMPLE_OUT.into())],
        task,
        output_contract: OutputContract {
            description: "Answer with \"verdict\" (\"yes\" if the candidate is the buggy API, otherwise \"no\") and a short \"reason\"."
                .into(),
            fields: vec![("verdict".into(), FieldKind::Verdict)],
        },
    }
}

/// Second-opinion prompt; `verified` follows the model's yes/no verdict and
/// stays false on an invalid reply.
pub fn verify(record: &BugRecord, issue: &IssueRecord, llm: &LlmClient, budget: u32) -> BugRecord {
    let mut out = record.clone();
    out.verified = false;
    let prompt = build_verification_prompt(record, issue);
    match llm.complete(&prompt, budget) {
        Ok(c) if c.valid => {
            out.verified = c
                .parsed
                .as_ref()
                .and_then(|p| parse_verdict(&p["verdict"]))
                .unwrap_or(false);
        }
        Ok(_) => {}
        Err(e) => log::warn!("verification of {} failed: {e}", record.buggy_api),
    }
    out
}

/// Runs the compile filter over every snippet of the issue.
pub fn filter_snippets(issue: &mut IssueRecord, host: &dyn SyntaxHost) {
    for s in &mut issue.snippets {
        compile_filter(s, host);
    }
}

/// Distinct trigger parameter names across records (for reporting).
pub fn trigger_param_set(records: &[BugRecord]) -> BTreeSet<String> {
    records.iter().flat_map(|r| r.trigger_params.iter().cloned()).collect()
}
