//! LLM test-program synthesis from the bugs of similar APIs, with repair
//! and priority scoring.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{ApiRecord, ApiRef};
use crate::executor::{triage, MutationOp, Outcome, RunReply, Runner, TriageConfig};
use crate::llm::{FieldKind, LlmClient, OutputContract, Prompt};
use crate::matcher::{PairKind, SimilarPair};
use crate::pysyntax;
use crate::recognizer::BugRecord;
use crate::store::Store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Synthesized,
    Repaired,
    Mutated,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TestLineage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_record: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similar_pair: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<MutationOp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub code: String,
    pub target: ApiRef,
    pub lineage: TestLineage,
    pub g: u8,
    pub u: usize,
    pub c: f64,
    pub priority: f64,
    pub origin: Origin,
    /// False when C is the timeout estimate rather than a measurement.
    #[serde(default)]
    pub executed: bool,
}

pub fn code_hash(code: &str) -> String {
    hex::encode(Sha256::digest(code.as_bytes()))
}

pub fn test_case_id(target: &ApiRef, code: &str) -> String {
    let mut h = Sha256::new();
    h.update(target.to_string().as_bytes());
    h.update([0]);
    h.update(code.as_bytes());
    hex::encode(&h.finalize()[..12])
}

pub fn priority(g: u8, u: usize, c: f64) -> f64 {
    g as f64 * (u as f64 - c)
}

/// Whether `code` references `target` by a dotted chain, after resolving
/// import aliases. A chain that is a dotted suffix of the full name counts.
pub fn target_present(code: &str, target: &str) -> bool {
    let aliases = pysyntax::import_aliases(code);
    pysyntax::dotted_references(code).iter().any(|chain| {
        let resolved = pysyntax::resolve_alias(chain, &aliases);
        [chain.as_str(), resolved.as_str()]
            .iter()
            .any(|c| target == *c || target.ends_with(&format!(".{c}")))
    })
}

/// Distinct catalog APIs whose last name component is called in `code`.
pub fn unique_apis(code: &str, catalog: &[ApiRecord]) -> usize {
    let calls: BTreeSet<String> = pysyntax::call_names(code).into_iter().collect();
    catalog
        .iter()
        .filter(|a| calls.contains(a.short_name()))
        .map(|a| a.full_name.as_str())
        .collect::<BTreeSet<_>>()
        .len()
}

impl TestCase {
    /// Scores a program. `measured` is the wall time, if it was executed.
    pub fn new(
        code: String,
        target: &ApiRecord,
        catalog: &[ApiRecord],
        measured: Option<f64>,
        timeout_s: f64,
        origin: Origin,
        lineage: TestLineage,
    ) -> Self {
        let g = u8::from(target_present(&code, &target.full_name));
        let u = unique_apis(&code, catalog);
        let c = measured.unwrap_or(timeout_s).clamp(0.0, timeout_s);
        TestCase {
            id: test_case_id(&target.api_ref(), &code),
            code,
            target: target.api_ref(),
            lineage,
            g,
            u,
            c,
            priority: priority(g, u, c),
            origin,
            executed: measured.is_some(),
        }
    }

    pub fn code_hash(&self) -> String {
        code_hash(&self.code)
    }

    /// Records a new wall-time measurement and recomputes the priority.
    pub fn rescore(&mut self, wall_s: f64, timeout_s: f64) {
        self.c = wall_s.clamp(0.0, timeout_s);
        self.executed = true;
        self.priority = priority(self.g, self.u, self.c);
    }
}

/// The `n` best test cases: priority descending, then lower C, then code
/// hash. Cases without the target API are left out whenever some case
/// with the target has U >= C.
pub fn select_top(pool: &[TestCase], n: usize) -> Vec<TestCase> {
    let strong = pool.iter().any(|t| t.g == 1 && t.u as f64 >= t.c);
    let mut keyed: Vec<(String, &TestCase)> = pool
        .iter()
        .filter(|t| !strong || t.g == 1)
        .map(|t| (t.code_hash(), t))
        .collect();
    keyed.sort_by(|(ha, a), (hb, b)| {
        b.priority
            .total_cmp(&a.priority)
            .then(a.c.total_cmp(&b.c))
            .then_with(|| ha.cmp(hb))
    });
    keyed.into_iter().take(n).map(|(_, t)| t.clone()).collect()
}

const SYN_SYSTEM: &str = "You are an expert in testing deep learning frameworks. \
Given a bug found in one API, you write test programs that check whether a similar API \
suffers from the same bug.";

const SYN_EXAMPLE_IN: &str = "Target API: torch.nn.functional.avg_pool2d
Target API documentation:
torch.nn.functional.avg_pool2d(input, kernel_size, stride, padding)
Applies 2D average-pooling operation.
Parameters:
  input: input tensor
  kernel_size: size of the pooling region
  stride: stride of the pooling operation
  padding: implicit zero paddings on both sides of the input

Similar API: torch.nn.Conv2d
Relation: operation-similar
Bug-triggering parameters: stride
Root cause: A stride of zero is not rejected and the output-size computation divides by zero.
Bug-triggering code:
```python
import torch
from torch import nn
input = torch.randn(1, 1, 32, 32)
c = nn.Conv2d(in_channels=1, out_channels=32, kernel_size=4, stride=0)
c(input)
```";

const SYN_EXAMPLE_OUT: &str = "Conv2d and avg_pool2d both slide a window over the spatial dimensions and both take a \
stride. The bug comes from a zero stride reaching the output-size computation. avg_pool2d computes its output size \
the same way, so the test builds a valid 4D input and calls avg_pool2d with stride=0.
```json
{\"code\": \"import torch\\ninput = torch.randn(10, 3, 20, 20)\\ntorch.nn.functional.avg_pool2d(input, kernel_size=4, stride=0)\\n\"}
```";

fn program_contract() -> OutputContract {
    OutputContract {
        description: "Return one complete, runnable Python program under \"code\".".into(),
        fields: vec![("code".into(), FieldKind::String)],
    }
}

/// Few-shot prompt asking for a program that exercises `target` the way
/// `bug` was triggered on a similar API.
pub fn build_syn_prompt(target: &ApiRecord, bug: &BugRecord, kind: PairKind) -> Prompt {
    let params = if bug.trigger_params.is_empty() {
        "(not identified)".to_string()
    } else {
        bug.trigger_params.join(", ")
    };
    let task = format!(
        "Write a test program for the target API that reproduces the known bug of a similar API.\n\n\
Target API: {}\nTarget API documentation:\n{}\nSimilar API: {}\nRelation: {}\n\
Bug-triggering parameters: {}\nRoot cause: {}\nBug-triggering code:\n```python\n{}\n```\n\n\
The program must call {} and pass it arguments that mirror the bug-triggering usage above.",
        target.full_name,
        target.render_doc(),
        bug.buggy_api,
        kind.label(),
        params,
        if bug.root_cause.is_empty() { "(not given)" } else { &bug.root_cause },
        bug.snippet.text.trim_end(),
        target.full_name,
    );
    Prompt {
        system: SYN_SYSTEM.into(),
        examples: vec![(SYN_EXAMPLE_IN.into(), SYN_EXAMPLE_OUT.into())],
        task,
        output_contract: program_contract(),
    }
}

pub fn build_repair_prompt(target: &ApiRecord, code: &str, error: &str) -> Prompt {
    let task = format!(
        "The following test program for {} fails before it reaches the API under test.\n\n\
Program:\n```python\n{}\n```\n\nError output:\n```\n{}\n```\n\n\
Fix the program so that it runs and still calls {} with the same unusual arguments.",
        target.full_name,
        code.trim_end(),
        error.trim_end(),
        target.full_name,
    );
    Prompt {
        system: SYN_SYSTEM.into(),
        examples: vec![],
        task,
        output_contract: program_contract(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub llm_budget: u32,
    pub repair_retries: u32,
    pub timeout_s: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            llm_budget: 3,
            repair_retries: 2,
            timeout_s: 30.0,
        }
    }
}

/// Result of trying one program.
enum Trial {
    /// Ran without an error outcome (a crash is a finding, not an error).
    Ran(RunReply),
    /// Could not be executed; admitted with C estimated as the timeout.
    Unexecuted,
    Failed(String),
}

pub struct Synthesizer<'a> {
    pub llm: &'a LlmClient,
    pub runner: Option<&'a dyn Runner>,
    pub triage: &'a TriageConfig,
    pub cfg: SynthesisConfig,
}

impl Synthesizer<'_> {
    fn ask(&self, prompt: &Prompt) -> Option<String> {
        match self.llm.complete(prompt, self.cfg.llm_budget) {
            Ok(c) if c.valid => c.parsed?.get("code")?.as_str().map(str::to_string),
            Ok(_) => None,
            Err(e) => {
                log::warn!("LLM call failed: {e}");
                None
            }
        }
    }

    fn trial(&self, code: &str) -> Trial {
        if let Err(e) = pysyntax::check(code) {
            return Trial::Failed(e.to_string());
        }
        let Some(runner) = self.runner else {
            return Trial::Unexecuted;
        };
        match runner.run(code, self.cfg.timeout_s) {
            Ok(reply) => match triage(&reply, self.cfg.timeout_s, self.triage) {
                Outcome::Error => Trial::Failed(reply.stderr_tail),
                _ => Trial::Ran(reply),
            },
            Err(e) => {
                log::warn!("runner unavailable during synthesis: {e}");
                Trial::Unexecuted
            }
        }
    }

    /// Up to `repair_retries` fix prompts; the first fix that runs wins.
    pub fn repair(&self, target: &ApiRecord, code: &str, error: &str) -> Option<(String, Option<RunReply>)> {
        let (mut code, mut error) = (code.to_string(), error.to_string());
        for attempt in 1..=self.cfg.repair_retries {
            let Some(fixed) = self.ask(&build_repair_prompt(target, &code, &error)) else {
                continue;
            };
            match self.trial(&fixed) {
                Trial::Ran(reply) => return Some((fixed, Some(reply))),
                Trial::Unexecuted => return Some((fixed, None)),
                Trial::Failed(e) => {
                    log::debug!("repair attempt {attempt} for {} failed", target.full_name);
                    code = fixed;
                    error = e;
                }
            }
        }
        None
    }

    /// Synthesizes from the bugs of `target`'s operation-similar APIs, then
    /// its parameter-similar APIs, and admits scored test cases to the
    /// store's pool.
    pub fn synthesize(&self, target: &ApiRecord, catalog: &[ApiRecord], store: &mut Store) -> Vec<TestCase> {
        let me = target.api_ref();
        let mut pairs: Vec<SimilarPair> = store.query_similar(&me, PairKind::Os);
        pairs.extend(store.query_similar(&me, PairKind::Ps));
        let mut admitted = Vec::new();
        for pair in pairs {
            for bug in store.query_bugs(&pair.target) {
                let Some(code) = self.ask(&build_syn_prompt(target, &bug, pair.kind)) else {
                    continue;
                };
                let lineage = TestLineage {
                    bug_record: Some(bug.id()),
                    similar_pair: Some(pair.id()),
                    ..TestLineage::default()
                };
                let (code, measured, origin) = match self.trial(&code) {
                    Trial::Ran(r) => (code, Some(r.wall_s), Origin::Synthesized),
                    Trial::Unexecuted => (code, None, Origin::Synthesized),
                    Trial::Failed(err) => match self.repair(target, &code, &err) {
                        Some((fixed, reply)) => (fixed, reply.map(|r| r.wall_s), Origin::Repaired),
                        None => continue,
                    },
                };
                let tc = TestCase::new(code, target, catalog, measured, self.cfg.timeout_s, origin, lineage);
                if let Err(e) = store.upsert_test_case(&tc) {
                    log::error!("cannot persist test case {}: {e}", tc.id);
                }
                admitted.push(tc);
            }
        }
        admitted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ParamRecord;
    use crate::executor::{MockRule, MockRunner, MockScript};
    use crate::ingest::SourceSnippet;
    use crate::llm::ScriptedBackend;
    use crate::recognizer::BugSource;

    fn api(name: &str, params: &[&str]) -> ApiRecord {
        ApiRecord {
            framework: "torch".into(),
            full_name: name.into(),
            params: params
                .iter()
                .enumerate()
                .map(|(i, p)| ParamRecord { name: p.to_string(), description: String::new(), position: i })
                .collect(),
            description: "Pooling.".into(),
            doc_url: None,
        }
    }

    fn bug(api: &str, id: &str, verified: bool) -> BugRecord {
        BugRecord {
            framework: "torch".into(),
            buggy_api: api.into(),
            trigger_params: vec!["stride".into()],
            root_cause: "zero stride".into(),
            snippet: SourceSnippet::code(format!("import torch\n{api}(stride=0)")),
            issue_id: Some(id.into()),
            dedup_key: None,
            verified,
            source: BugSource::Mined,
        }
    }

    fn os_pair(src: &str, dst: &str) -> SimilarPair {
        SimilarPair {
            source: ApiRef::new("torch", src),
            target: ApiRef::new("torch", dst),
            kind: PairKind::Os,
            text_score: 0.5,
            sem_score: 0.5,
            combined_score: 0.5,
            alpha_used: 0.35,
        }
    }

    fn tc(code: &str, g: u8, u: usize, c: f64) -> TestCase {
        TestCase {
            id: code.into(),
            code: code.into(),
            target: ApiRef::new("torch", "t"),
            lineage: TestLineage::default(),
            g,
            u,
            c,
            priority: priority(g, u, c),
            origin: Origin::Synthesized,
            executed: true,
        }
    }

    #[test]
    fn priority_formula() {
        assert_eq!(priority(0, 9, 1.0), 0.0);
        assert_eq!(priority(1, 5, 2.0), 3.0);
    }

    #[test]
    fn presence_and_diversity() {
        let code = "import torch\nfrom torch import nn\nx = torch.randn(1, 1, 8, 8)\nm = nn.MaxPool2d(2)\ny = torch.relu(m(x))\n";
        assert!(target_present(code, "torch.nn.MaxPool2d"));
        assert!(target_present("from torch.nn import MaxPool2d as P\nP(2)\n", "torch.nn.MaxPool2d"));
        assert!(target_present("MaxPool2d(2)\n", "torch.nn.MaxPool2d"));
        assert!(!target_present(code, "torch.nn.AvgPool2d"));
        assert!(!target_present("xMaxPool2d(2)\n", "torch.nn.MaxPool2d"));
        let cat = vec![api("torch.randn", &[]), api("torch.nn.MaxPool2d", &[]), api("torch.relu", &[]), api("torch.fft.fft", &[])];
        assert_eq!(unique_apis(code, &cat), 3);
    }

    #[test]
    fn select_top_order_and_gate() {
        let pool = vec![tc("a", 1, 3, 1.0), tc("b", 1, 3, 0.5), tc("c", 0, 9, 0.1), tc("d", 1, 5, 1.0)];
        let top: Vec<_> = select_top(&pool, 10).into_iter().map(|t| t.code).collect();
        assert_eq!(top, vec!["d", "b", "a"]);
        let weak = vec![tc("x", 1, 0, 3.0), tc("y", 0, 0, 0.1)];
        assert_eq!(select_top(&weak, 10).len(), 2);
        assert_eq!(select_top(&pool, 1).len(), 1);
    }

    #[test]
    fn prompt_markers() {
        let target = api("torch.nn.MaxPool2d", &["kernel_size", "stride"]);
        let b = bug("torch.nn.AvgPool2d", "1", true);
        let p = build_syn_prompt(&target, &b, PairKind::Os);
        assert!(p.task.contains("torch.nn.MaxPool2d") && p.task.contains("operation-similar"));
        assert!(p.task.contains("torch.nn.AvgPool2d(stride=0)"));
        assert!(build_syn_prompt(&target, &b, PairKind::Ps).task.contains("parameter-similar"));
    }

    fn store_with(bugs: &[BugRecord], pairs: &[SimilarPair]) -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_dir(dir.path()).unwrap();
        for b in bugs {
            store.update_bugs(b).unwrap();
        }
        for p in pairs {
            store.add_pair(p).unwrap();
        }
        (dir, store)
    }

    fn fenced(code: &str) -> String {
        format!("```json\n{}\n```", serde_json::json!({ "code": code }))
    }

    #[test]
    fn repair_after_broken_program() {
        let target = api("torch.nn.MaxPool2d", &["stride"]);
        let (_d, mut store) = store_with(&[bug("torch.nn.AvgPool2d", "1", true)], &[os_pair("torch.nn.MaxPool2d", "torch.nn.AvgPool2d")]);
        let backend = ScriptedBackend::new()
            .rule(&["Error output"], fenced("import torch\ntorch.nn.MaxPool2d(2, stride=0)\n"))
            .rule(&["Write a test program"], fenced("import torch\ntorch.nn.MaxPool2d(2, stride=0\n"));
        let llm = LlmClient::new(Box::new(backend), 1);
        let runner = MockRunner::new(MockScript::default()).unwrap();
        let triage = TriageConfig::default();
        let s = Synthesizer { llm: &llm, runner: Some(&runner), triage: &triage, cfg: SynthesisConfig::default() };
        let out = s.synthesize(&target, std::slice::from_ref(&target), &mut store);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].origin, Origin::Repaired);
        assert_eq!(out[0].g, 1);
        assert!(out[0].executed);
        assert_eq!(store.pool().len(), 1);
    }

    #[test]
    fn second_fix_wins_and_failures_drop() {
        let target = api("torch.nn.MaxPool2d", &["stride"]);
        let llm_two_step = LlmClient::new(
            Box::new(
                ScriptedBackend::new()
                    .rule(&["still_broken("], fenced("import torch\ntorch.nn.MaxPool2d(2)\n"))
                    .rule(&["Error output"], fenced("still_broken(")),
            ),
            1,
        );
        let runner = MockRunner::new(MockScript::default()).unwrap();
        let triage = TriageConfig::default();
        let s = Synthesizer { llm: &llm_two_step, runner: Some(&runner), triage: &triage, cfg: SynthesisConfig::default() };
        let (fixed, reply) = s.repair(&target, "broken(", "SyntaxError").unwrap();
        assert_eq!(fixed, "import torch\ntorch.nn.MaxPool2d(2)\n");
        assert_eq!(reply.unwrap().outcome_raw, 0);

        let llm_bad = LlmClient::new(Box::new(ScriptedBackend::new().rule(&[""], fenced("nope("))), 1);
        let s = Synthesizer { llm: &llm_bad, runner: Some(&runner), triage: &triage, cfg: SynthesisConfig::default() };
        assert!(s.repair(&target, "broken(", "SyntaxError").is_none());
    }

    #[test]
    fn runtime_errors_trigger_repair_but_crashes_are_kept() {
        let target = api("torch.nn.MaxPool2d", &["stride"]);
        let runner = MockRunner::new(MockScript {
            rules: vec![
                MockRule { all_of: vec!["undefined_name".into()], regex: None, outcome_raw: 1, stderr_tail: "NameError".into(), wall_s: None },
                MockRule { all_of: vec!["stride=0".into()], regex: None, outcome_raw: -11, stderr_tail: String::new(), wall_s: Some(0.4) },
            ],
            ..MockScript::default()
        })
        .unwrap();
        let (_d, mut store) = store_with(
            &[bug("torch.nn.AvgPool2d", "1", false), bug("torch.nn.AvgPool2d", "2", true)],
            &[os_pair("torch.nn.MaxPool2d", "torch.nn.AvgPool2d")],
        );
        let llm = LlmClient::new(
            Box::new(
                ScriptedBackend::new()
                    .rule(&["Error output"], fenced("import torch\ntorch.nn.MaxPool2d(2)\n"))
                    .rule(&["Write a test program"], fenced("import torch\nundefined_name\ntorch.nn.MaxPool2d(2, stride=0)\n")),
            ),
            1,
        );
        let triage = TriageConfig::default();
        let s = Synthesizer { llm: &llm, runner: Some(&runner), triage: &triage, cfg: SynthesisConfig::default() };
        let out = s.synthesize(&target, std::slice::from_ref(&target), &mut store);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|t| t.origin == Origin::Repaired));
        assert!(out[0].lineage.bug_record.as_ref().unwrap().ends_with("issue:2"), "verified evidence first");

        let crash_llm = LlmClient::new(Box::new(ScriptedBackend::new().rule(&[""], fenced("import torch\ntorch.nn.MaxPool2d(2, stride=0)\n"))), 1);
        let s = Synthesizer { llm: &crash_llm, runner: Some(&runner), triage: &triage, cfg: SynthesisConfig::default() };
        let (_d2, mut store2) = store_with(&[bug("torch.nn.AvgPool2d", "1", true)], &[os_pair("torch.nn.MaxPool2d", "torch.nn.AvgPool2d")]);
        let out = s.synthesize(&target, std::slice::from_ref(&target), &mut store2);
        assert_eq!(out[0].origin, Origin::Synthesized);
        assert_eq!(out[0].c, 0.4);
    }

    #[test]
    fn no_runner_estimates_timeout_and_no_pairs_is_empty() {
        let target = api("torch.nn.MaxPool2d", &["stride"]);
        let (_d, mut store) = store_with(&[bug("torch.nn.AvgPool2d", "1", true)], &[os_pair("torch.nn.MaxPool2d", "torch.nn.AvgPool2d")]);
        let llm = LlmClient::new(Box::new(ScriptedBackend::new().rule(&[""], fenced("import torch\ntorch.nn.MaxPool2d(2)\n"))), 1);
        let triage = TriageConfig::default();
        let s = Synthesizer { llm: &llm, runner: None, triage: &triage, cfg: SynthesisConfig::default() };
        let out = s.synthesize(&target, std::slice::from_ref(&target), &mut store);
        assert_eq!(out[0].c, 30.0);
        assert!(!out[0].executed);
        let lonely = api("torch.fft.fft", &[]);
        assert!(s.synthesize(&lonely, &[], &mut store).is_empty());
    }
}
