//! The fuzzing loop: select, mutate, dispatch, triage, feed back.

use std::collections::HashSet;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    mutate, triage, CrashReport, Lineage, Mutation, MutationConfig, MutationKind, MutationOp, Outcome, RunReply,
    Runner, RunnerError, TriageConfig,
};
use crate::catalog::ApiRecord;
use crate::ingest::SourceSnippet;
use crate::recognizer::{BugRecord, BugSource};
use crate::store::{Store, StoreError};
use crate::synthesizer::{code_hash, select_top, test_case_id, TestCase};

/// Rounds (a plain integer) or wall time (`90s`, `30m`, `5h`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Budget {
    Rounds(u64),
    Time(Duration),
}

impl FromStr for Budget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("invalid budget {s:?}: use a round count or a duration like 90s, 30m, 5h");
        if let Ok(n) = s.parse::<u64>() {
            return Ok(Budget::Rounds(n));
        }
        let (num, unit) = s.split_at(s.len().saturating_sub(1));
        let n: f64 = num.parse().map_err(|_| bad())?;
        let secs = match unit {
            "s" => n,
            "m" => n * 60.0,
            "h" => n * 3600.0,
            _ => return Err(bad()),
        };
        if !secs.is_finite() || secs < 0.0 {
            return Err(bad());
        }
        Ok(Budget::Time(Duration::from_secs_f64(secs)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub budget: Budget,
    pub workers: usize,
    pub quota: usize,
    pub top_n: usize,
    pub timeout_s: f64,
    pub seed: u64,
    /// Abort once the runner process itself has died more often than this.
    pub max_runner_deaths: usize,
    pub mutation: MutationConfig,
    pub triage: TriageConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            budget: Budget::Rounds(1),
            workers: 1,
            quota: 20,
            top_n: 10,
            timeout_s: 30.0,
            seed: 0,
            max_runner_deaths: 5,
            mutation: MutationConfig::default(),
            triage: TriageConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Default)]
pub struct CampaignResult {
    /// Every non-passing execution, in dispatch order.
    pub reports: Vec<CrashReport>,
    pub new_bugs: Vec<BugRecord>,
    pub executions: usize,
    pub rounds: u64,
    pub no_ops: usize,
    pub invalid_mutants: usize,
}

struct Job {
    id: String,
    code: String,
    parent: Option<usize>,
    lineage: Lineage,
    target: usize,
}

/// Runs `jobs` on up to `workers` threads; results come back in job order.
fn dispatch(runner: &dyn Runner, jobs: &[Job], workers: usize, timeout_s: f64) -> Vec<Result<RunReply, RunnerError>> {
    let workers = workers.clamp(1, jobs.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<RunReply, RunnerError>>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                        if i >= jobs.len() {
                            break;
                        }
                        done.push((i, runner.run(&jobs[i].code, timeout_s)));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("dispatch worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every job ran")).collect()
}

/// Target parameter the mutant's edit was passed to, if it is a keyword
/// argument.
fn changed_params(parent: &str, mutant: &str, target: &ApiRecord) -> Vec<String> {
    let mut p = parent.bytes().zip(mutant.bytes()).take_while(|(a, b)| a == b).count();
    while !mutant.is_char_boundary(p) {
        p -= 1;
    }
    let kw = Regex::new(r"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*-?$").unwrap();
    kw.captures(&mutant[..p])
        .map(|c| c[1].to_string())
        .filter(|name| target.has_param(name))
        .into_iter()
        .collect()
}

/// Fuzzes the store's pool until the budget runs out.
///
/// Each round takes the top test cases, re-executes any parent not yet run
/// in this campaign (refreshing its measured cost), derives `quota`
/// mutants per parent from the seeded generator, and executes every
/// program not seen before. Bug-class outcomes become crash reports and,
/// once per dedup key, new bug records.
pub fn run_campaign(
    store: &mut Store,
    catalog: &[ApiRecord],
    runner: &dyn Runner,
    cfg: &CampaignConfig,
) -> Result<CampaignResult, CampaignError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut result = CampaignResult::default();
    let mut seen: HashSet<String> = HashSet::new();
    let started = Instant::now();
    let mut idle_rounds = 0;
    loop {
        let more = match cfg.budget {
            Budget::Rounds(n) => result.rounds < n,
            Budget::Time(d) => started.elapsed() < d,
        };
        if !more {
            break;
        }
        let parents = select_top(store.pool(), cfg.top_n);
        if parents.is_empty() {
            break;
        }
        result.rounds += 1;
        let targets: Vec<Option<&ApiRecord>> = parents
            .iter()
            .map(|p| catalog.iter().find(|a| a.api_ref() == p.target))
            .collect();
        let mut jobs: Vec<Job> = Vec::new();
        for (pi, parent) in parents.iter().enumerate() {
            if seen.insert(code_hash(&parent.code)) {
                jobs.push(Job {
                    id: parent.id.clone(),
                    code: parent.code.clone(),
                    parent: Some(pi),
                    lineage: Lineage {
                        parent: parent.id.clone(),
                        op: None,
                    },
                    target: pi,
                });
            }
            let params: Vec<String> = targets[pi]
                .map(|a| a.params.iter().map(|p| p.name.clone()).collect())
                .unwrap_or_default();
            for _ in 0..cfg.quota {
                let op = MutationOp {
                    kind: MutationKind::ALL[rng.random_range(0..MutationKind::ALL.len())],
                    seed: rng.random(),
                };
                match mutate(&parent.code, op, &params, &cfg.mutation) {
                    Mutation::Mutant { code, .. } => {
                        if seen.insert(code_hash(&code)) {
                            jobs.push(Job {
                                id: test_case_id(&parent.target, &code),
                                code,
                                parent: None,
                                lineage: Lineage {
                                    parent: parent.id.clone(),
                                    op: Some(op),
                                },
                                target: pi,
                            });
                        }
                    }
                    Mutation::NoOp => result.no_ops += 1,
                    Mutation::Invalid => result.invalid_mutants += 1,
                }
            }
        }
        if jobs.is_empty() {
            idle_rounds += 1;
            if idle_rounds >= 3 {
                log::info!("no new programs for {idle_rounds} rounds; stopping");
                break;
            }
            continue;
        }
        idle_rounds = 0;
        let replies = dispatch(runner, &jobs, cfg.workers, cfg.timeout_s);
        for (job, reply) in jobs.iter().zip(replies) {
            let reply = match reply {
                Ok(r) => r,
                Err(RunnerError::Died(msg)) | Err(RunnerError::Protocol(msg)) => {
                    log::warn!("execution of {} lost: {msg}", job.id);
                    if runner.deaths() > cfg.max_runner_deaths {
                        return Err(RunnerError::CrashLoop(runner.deaths()).into());
                    }
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            result.executions += 1;
            let parent = &parents[job.target];
            if let Some(pi) = job.parent {
                let mut refreshed: TestCase = parents[pi].clone();
                refreshed.rescore(reply.wall_s, cfg.timeout_s);
                store.upsert_test_case(&refreshed)?;
            }
            let outcome = triage(&reply, cfg.timeout_s, &cfg.triage);
            if outcome == Outcome::Pass {
                continue;
            }
            let report = CrashReport::new(
                job.id.clone(),
                parent.target.clone(),
                &reply,
                outcome,
                job.lineage.clone(),
                job.code.clone(),
            );
            store.add_crash(&report)?;
            if outcome.is_bug() && !store.has_dedup_key(&report.target, &report.dedup_key) {
                let trigger_params = targets[job.target]
                    .map(|t| changed_params(&parent.code, &job.code, t))
                    .unwrap_or_default();
                let how = match job.lineage.op {
                    Some(op) => format!("{:?} mutation", op.kind),
                    None => "synthesized program".to_string(),
                };
                let record = BugRecord {
                    framework: report.target.framework.clone(),
                    buggy_api: report.target.name.clone(),
                    trigger_params,
                    root_cause: format!("{outcome} observed on a {how}"),
                    snippet: SourceSnippet {
                        parses: true,
                        ..SourceSnippet::code(job.code.clone())
                    },
                    issue_id: None,
                    dedup_key: Some(report.dedup_key.clone()),
                    verified: true,
                    source: BugSource::FuzzerFound,
                };
                if store.update_bugs(&record)? {
                    result.new_bugs.push(record);
                }
            }
            result.reports.push(report);
        }
    }
    store.sync()?;
    Ok(result)
}
