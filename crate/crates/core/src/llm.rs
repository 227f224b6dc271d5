//! Uniform text-generation interface.
//!
//! Every prompt-consuming stage talks to a [`LlmClient`], which wraps a
//! [`LlmBackend`] with an attempt budget and structured-output validation.
//! The mock backend replays stored replies keyed by the digest of the task
//! text, so whole pipelines are bit-reproducible offline.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("language model backend unreachable: {0}")]
    Unreachable(String),
    #[error("no stored reply for prompt digest {0}")]
    NoFixture(String),
    #[error("mock directory {path}: {source}")]
    MockDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("attempt budget must be at least 1")]
    ZeroBudget,
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Unreachable(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    String,
    Bool,
    Array,
    Object,
    /// A boolean, or one of the strings "yes"/"no"/"true"/"false".
    Verdict,
}

/// Required shape of the structured payload: a JSON object with these keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputContract {
    pub description: String,
    pub fields: Vec<(String, FieldKind)>,
}

impl OutputContract {
    pub fn conforms(&self, payload: &Value) -> bool {
        let Some(obj) = payload.as_object() else {
            return false;
        };
        self.fields.iter().all(|(name, kind)| match (obj.get(name), kind) {
            (Some(Value::String(_)), FieldKind::String) => true,
            (Some(Value::Bool(_)), FieldKind::Bool) => true,
            (Some(Value::Array(_)), FieldKind::Array) => true,
            (Some(Value::Object(_)), FieldKind::Object) => true,
            (Some(v), FieldKind::Verdict) => parse_verdict(v).is_some(),
            _ => false,
        })
    }
}

pub fn parse_verdict(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "true" => Some(true),
            "no" | "false" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    /// Few-shot (input, output) pairs; empty for zero-shot.
    pub examples: Vec<(String, String)>,
    pub task: String,
    pub output_contract: OutputContract,
}

impl Prompt {
    /// Flat text form; also what the golden-file tests pin down.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("### System\n");
        out.push_str(&self.system);
        out.push_str("\n\n");
        for (i, (input, output)) in self.examples.iter().enumerate() {
            out.push_str(&format!("### Example {} input\n{input}\n\n", i + 1));
            out.push_str(&format!("### Example {} output\n{output}\n\n", i + 1));
        }
        out.push_str("### Task\n");
        out.push_str(&self.task);
        out.push_str("\n\n### Output format\n");
        out.push_str(&self.contract_instructions());
        out.push('\n');
        out
    }

    fn contract_instructions(&self) -> String {
        let keys: Vec<String> = self
            .output_contract
            .fields
            .iter()
            .map(|(k, kind)| format!("\"{k}\" ({})", kind_label(*kind)))
            .collect();
        format!(
            "{}\nThink step by step, then finish with exactly one JSON object in a ```json fenced block with keys: {}.",
            self.output_contract.description,
            keys.join(", ")
        )
    }

    /// Hex SHA-256 of the task text; the mock backend's lookup key.
    pub fn digest(&self) -> String {
        task_digest(&self.task)
    }
}

pub fn task_digest(task: &str) -> String {
    hex::encode(Sha256::digest(task.as_bytes()))
}

fn kind_label(kind: FieldKind) -> &'static str {
    match kind {
        FieldKind::String => "string",
        FieldKind::Bool => "boolean",
        FieldKind::Array => "array",
        FieldKind::Object => "object",
        FieldKind::Verdict => "\"yes\" or \"no\"",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub parsed: Option<Value>,
    pub valid: bool,
    pub attempts: u32,
}

fn fenced_block_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[A-Za-z0-9_+-]*[ \t]*\r?\n(.*?)\r?\n?```").unwrap())
}

/// Pulls the structured payload out of a reply: the last fenced block if
/// any exist, otherwise the whole reply when it is a bare JSON object.
pub fn extract_payload(text: &str) -> Option<Value> {
    let last_block = fenced_block_re()
        .captures_iter(text)
        .last()
        .map(|c| c.get(1).map(|m| m.as_str()).unwrap_or(""));
    let candidate = match last_block {
        Some(block) => block.trim(),
        None => text.trim(),
    };
    match serde_json::from_str::<Value>(candidate) {
        Ok(v @ Value::Object(_)) => Some(v),
        _ => None,
    }
}

pub trait LlmBackend: Send + Sync {
    /// Produces raw reply text; `attempt` counts from 0 within one call.
    fn generate(&self, prompt: &Prompt, attempt: u32) -> Result<String, LlmError>;
}

/// Counting semaphore capping concurrent backend requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
    }

    fn release(&self) {
        *self.free.lock().unwrap() += 1;
        self.cv.notify_one();
    }
}

pub struct LlmClient {
    backend: Box<dyn LlmBackend>,
    gate: Gate,
}

impl LlmClient {
    pub fn new(backend: Box<dyn LlmBackend>, max_concurrent: usize) -> Self {
        LlmClient {
            backend,
            gate: Gate {
                free: Mutex::new(max_concurrent.max(1)),
                cv: Condvar::new(),
            },
        }
    }

    /// Returns the first attempt whose payload parses and conforms to the
    /// contract, or the last attempt with `valid = false`.
    pub fn complete(&self, prompt: &Prompt, budget: u32) -> Result<Completion, LlmError> {
        if budget == 0 {
            return Err(LlmError::ZeroBudget);
        }
        let mut last = None;
        for attempt in 0..budget {
            self.gate.acquire();
            let reply = self.backend.generate(prompt, attempt);
            self.gate.release();
            let text = reply?;
            let parsed = extract_payload(&text).filter(|v| prompt.output_contract.conforms(v));
            let valid = parsed.is_some();
            let completion = Completion {
                text,
                parsed,
                valid,
                attempts: attempt + 1,
            };
            if valid {
                return Ok(completion);
            }
            last = Some(completion);
        }
        Ok(last.expect("budget >= 1"))
    }
}

/// Replays replies from a directory.
///
/// Lookup order for a prompt with task digest `D` on attempt `n`:
/// `D.n.txt`, then `D.txt`, then the first entry of `rules.json` whose
/// `contains` substrings all occur in the task. `rules.json` is a list of
/// `{"contains": [..], "reply": ".."}` objects.
pub struct MockBackend {
    dir: PathBuf,
    rules: Vec<MockRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockRule {
    pub contains: Vec<String>,
    pub reply: String,
}

impl MockBackend {
    pub fn open(dir: &Path) -> Result<Self, LlmError> {
        let err = |e| LlmError::MockDir {
            path: dir.to_path_buf(),
            source: e,
        };
        if !dir.is_dir() {
            return Err(err(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "not a directory",
            )));
        }
        let rules_path = dir.join("rules.json");
        let rules = if rules_path.exists() {
            let text = fs::read_to_string(&rules_path).map_err(err)?;
            serde_json::from_str(&text).map_err(|e| err(std::io::Error::other(e)))?
        } else {
            Vec::new()
        };
        Ok(MockBackend {
            dir: dir.to_path_buf(),
            rules,
        })
    }
}

impl LlmBackend for MockBackend {
    fn generate(&self, prompt: &Prompt, attempt: u32) -> Result<String, LlmError> {
        let digest = prompt.digest();
        for name in [format!("{digest}.{attempt}.txt"), format!("{digest}.txt")] {
            if let Ok(text) = fs::read_to_string(self.dir.join(name)) {
                return Ok(text);
            }
        }
        self.rules
            .iter()
            .find(|r| r.contains.iter().all(|c| prompt.task.contains(c.as_str())))
            .map(|r| r.reply.clone())
            .ok_or(LlmError::NoFixture(digest))
    }
}

/// In-memory scripted backend: replies per task digest, one per attempt
/// (the last reply repeats), plus substring rules.
#[derive(Default)]
pub struct ScriptedBackend {
    by_digest: HashMap<String, Vec<String>>,
    rules: Vec<MockRule>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reply_to_task(mut self, task: &str, replies: Vec<String>) -> Self {
        self.by_digest.insert(task_digest(task), replies);
        self
    }

    pub fn rule(mut self, contains: &[&str], reply: impl Into<String>) -> Self {
        self.rules.push(MockRule {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            reply: reply.into(),
        });
        self
    }
}

impl LlmBackend for ScriptedBackend {
    fn generate(&self, prompt: &Prompt, attempt: u32) -> Result<String, LlmError> {
        if let Some(replies) = self.by_digest.get(&prompt.digest()) {
            let i = (attempt as usize).min(replies.len().saturating_sub(1));
            if let Some(r) = replies.get(i) {
                return Ok(r.clone());
            }
        }
        self.rules
            .iter()
            .find(|r| r.contains.iter().all(|c| prompt.task.contains(c.as_str())))
            .map(|r| r.reply.clone())
            .ok_or_else(|| LlmError::NoFixture(prompt.digest()))
    }
}

#[derive(Debug, Clone)]
pub struct HttpLlmConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub timeout: Duration,
}

/// Chat-completion endpoint (`POST {base_url}/chat/completions`).
pub struct HttpBackend {
    cfg: HttpLlmConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(mut cfg: HttpLlmConfig) -> Self {
        if cfg.api_key.is_none() {
            cfg.api_key = std::env::var("MF_LLM_KEY").ok().filter(|k| !k.is_empty());
        }
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(cfg.timeout))
            .build();
        HttpBackend {
            cfg,
            agent: ureq::Agent::new_with_config(config),
        }
    }

    fn messages(prompt: &Prompt) -> Vec<Value> {
        let mut msgs = vec![json!({"role": "system", "content": prompt.system})];
        for (input, output) in &prompt.examples {
            msgs.push(json!({"role": "user", "content": input}));
            msgs.push(json!({"role": "assistant", "content": output}));
        }
        msgs.push(json!({
            "role": "user",
            "content": format!("{}\n\n{}", prompt.task, prompt.contract_instructions()),
        }));
        msgs
    }
}

impl LlmBackend for HttpBackend {
    fn generate(&self, prompt: &Prompt, _attempt: u32) -> Result<String, LlmError> {
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let mut body = Map::new();
        body.insert("model".into(), json!(self.cfg.model));
        body.insert("messages".into(), json!(Self::messages(prompt)));
        body.insert("temperature".into(), json!(self.cfg.temperature));
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(Value::Object(body))
            .map_err(|e| LlmError::Unreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Unreachable(e.to_string()))?;
        if status != 200 {
            return Err(LlmError::Unreachable(format!("HTTP {status}: {value}")));
        }
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Unreachable("reply without message content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(task: &str) -> Prompt {
        Prompt {
            system: "sys".into(),
            examples: vec![],
            task: task.into(),
            output_contract: OutputContract {
                description: "Return the answer.".into(),
                fields: vec![("answer".into(), FieldKind::String)],
            },
        }
    }

    #[test]
    fn fixture_lookup_by_task_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = prompt("which API crashed?");
        fs::write(
            dir.path().join(format!("{}.txt", p.digest())),
            "```json\n{\"answer\": \"torch.nn.Conv2d\"}\n```",
        )
        .unwrap();
        let client = LlmClient::new(Box::new(MockBackend::open(dir.path()).unwrap()), 1);
        let c = client.complete(&p, 3).unwrap();
        assert!(c.valid);
        assert_eq!(c.parsed.unwrap()["answer"], "torch.nn.Conv2d");
        assert_eq!(c.attempts, 1);
    }

    #[test]
    fn reply_without_payload_is_invalid() {
        let backend = ScriptedBackend::new().rule(&["q"], "I am not sure.");
        let client = LlmClient::new(Box::new(backend), 1);
        let c = client.complete(&prompt("q"), 3).unwrap();
        assert!(!c.valid);
        assert!(c.parsed.is_none());
        assert_eq!(c.attempts, 3);
    }

    #[test]
    fn payload_in_prose_fences_is_extracted() {
        let reply = "Let me think. The call to avg_pool2d uses stride 0.\n\nSo:\n```json\n{\"answer\": \"avg_pool2d\"}\n```\nHope this helps!";
        let backend = ScriptedBackend::new().rule(&["q"], reply);
        let client = LlmClient::new(Box::new(backend), 1);
        let c = client.complete(&prompt("q"), 1).unwrap();
        assert!(c.valid);
        assert_eq!(c.parsed.unwrap()["answer"], "avg_pool2d");
    }

    #[test]
    fn last_fenced_block_wins() {
        let reply = "```json\n{\"answer\": \"first\"}\n```\nrestated:\n```\n{\"answer\": \"second\"}\n```";
        assert_eq!(extract_payload(reply).unwrap()["answer"], "second");
        assert_eq!(extract_payload("{\"a\": 1}").unwrap()["a"], 1);
        assert!(extract_payload("[1, 2]").is_none());
    }

    #[test]
    fn later_attempt_can_succeed() {
        let p = prompt("retry me");
        let backend = ScriptedBackend::new()
            .reply_to_task(&p.task, vec!["nope".into(), "{\"answer\": \"ok\"}".into()]);
        let client = LlmClient::new(Box::new(backend), 2);
        let c = client.complete(&p, 3).unwrap();
        assert!(c.valid);
        assert_eq!(c.attempts, 2);
    }

    #[test]
    fn contract_violations_are_invalid() {
        let backend = ScriptedBackend::new().rule(&["q"], "{\"answer\": 42}");
        let client = LlmClient::new(Box::new(backend), 1);
        assert!(!client.complete(&prompt("q"), 1).unwrap().valid);
        assert!(matches!(client.complete(&prompt("q"), 0), Err(LlmError::ZeroBudget)));
    }

    #[test]
    fn missing_fixture_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let client = LlmClient::new(Box::new(MockBackend::open(dir.path()).unwrap()), 1);
        assert!(matches!(client.complete(&prompt("unknown"), 1), Err(LlmError::NoFixture(_))));
    }

    #[test]
    fn mock_is_deterministic() {
        let backend = ScriptedBackend::new().rule(&["q"], "{\"answer\": \"x\"}");
        let client = LlmClient::new(Box::new(backend), 1);
        let a = client.complete(&prompt("q"), 2).unwrap();
        let b = client.complete(&prompt("q"), 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict(&json!("Yes")), Some(true));
        assert_eq!(parse_verdict(&json!(false)), Some(false));
        assert_eq!(parse_verdict(&json!("maybe")), None);
    }
}
