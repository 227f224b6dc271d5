use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde_json::Value;

use super::{IngestError, RawIssue};

pub const PER_PAGE: usize = 100;

/// `owner/name` coordinate of a tracker repository.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repo {
    pub owner: String,
    pub name: String,
}

impl std::str::FromStr for Repo {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('/') {
            Some((o, n)) if !o.is_empty() && !n.is_empty() && !n.contains('/') => Ok(Repo {
                owner: o.to_string(),
                name: n.to_string(),
            }),
            _ => Err(IngestError::BadRepo(s.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    /// Header names are lower-cased.
    pub headers: BTreeMap<String, String>,
    pub body: String,
}

pub trait Transport {
    /// Performs a GET; `Err` means the request never produced a response.
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<HttpResponse, String>;
}

/// Time source and sleeper, injectable so rate-limit handling is testable.
pub trait Sleeper {
    fn now_epoch_s(&self) -> u64;
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn now_epoch_s(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateLimitPolicy {
    /// Sleep until reset when the wait is at most this many seconds.
    Wait { max_wait_s: u64 },
    Abort,
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub base_url: String,
    pub token: Option<String>,
    pub page_limit: usize,
    pub max_retries: u32,
    pub rate_limit: RateLimitPolicy,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            base_url: "https://api.github.com".to_string(),
            token: std::env::var("MF_TRACKER_TOKEN").ok().filter(|t| !t.is_empty()),
            page_limit: 10,
            max_retries: 3,
            rate_limit: RateLimitPolicy::Wait { max_wait_s: 3600 },
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct FetchOutcome {
    pub issues: Vec<RawIssue>,
    /// Documents that failed to decode and were skipped.
    pub malformed: usize,
    /// Pull requests returned by the issues endpoint, skipped.
    pub pull_requests: usize,
}

impl FetchOutcome {
    fn absorb_page(&mut self, docs: Vec<Value>) {
        for doc in docs {
            if doc.get("pull_request").is_some() {
                self.pull_requests += 1;
                continue;
            }
            match serde_json::from_value::<RawIssue>(doc) {
                Ok(issue) => self.issues.push(issue),
                Err(e) => {
                    log::warn!("skipping malformed issue document: {e}");
                    self.malformed += 1;
                }
            }
        }
    }
}

/// Pages through `GET /repos/{owner}/{repo}/issues?state=all&per_page=100&page=N`
/// until `page_limit` pages are read or a short page marks the end.
pub fn fetch_issues(
    repo: &Repo,
    opts: &FetchOptions,
    transport: &dyn Transport,
    sleeper: &dyn Sleeper,
) -> Result<FetchOutcome, IngestError> {
    let mut out = FetchOutcome::default();
    let mut headers = vec![
        ("Accept".to_string(), "application/vnd.github+json".to_string()),
        ("User-Agent".to_string(), "mirrorfuzz".to_string()),
    ];
    if let Some(tok) = &opts.token {
        headers.push(("Authorization".to_string(), format!("Bearer {tok}")));
    }
    for page in 1..=opts.page_limit {
        let url = format!(
            "{}/repos/{}/{}/issues?state=all&per_page={PER_PAGE}&page={page}",
            opts.base_url.trim_end_matches('/'),
            repo.owner,
            repo.name
        );
        let resp = get_with_retries(&url, &headers, opts, transport, sleeper)?;
        let docs = match serde_json::from_str::<Value>(&resp.body) {
            Ok(Value::Array(docs)) => docs,
            Ok(_) | Err(_) => {
                log::warn!("page {page}: response is not a list of issues");
                out.malformed += 1;
                break;
            }
        };
        let n = docs.len();
        out.absorb_page(docs);
        if n < PER_PAGE {
            break;
        }
    }
    Ok(out)
}

fn get_with_retries(
    url: &str,
    headers: &[(String, String)],
    opts: &FetchOptions,
    transport: &dyn Transport,
    sleeper: &dyn Sleeper,
) -> Result<HttpResponse, IngestError> {
    let mut failures = 0u32;
    loop {
        match transport.get(url, headers) {
            Err(message) => {
                failures += 1;
                if failures > opts.max_retries {
                    return Err(IngestError::Network {
                        attempts: failures,
                        message,
                    });
                }
                sleeper.sleep(Duration::from_secs(1 << (failures - 1).min(6)));
            }
            Ok(resp) if resp.status == 200 => return Ok(resp),
            Ok(resp) if is_rate_limited(&resp) => {
                let wait_s = rate_limit_wait(&resp, sleeper.now_epoch_s());
                match opts.rate_limit {
                    RateLimitPolicy::Wait { max_wait_s } if wait_s <= max_wait_s => {
                        log::info!("rate limited; sleeping {wait_s}s until reset");
                        sleeper.sleep(Duration::from_secs(wait_s));
                    }
                    _ => return Err(IngestError::RateLimited { wait_s }),
                }
            }
            Ok(resp) if resp.status >= 500 => {
                failures += 1;
                if failures > opts.max_retries {
                    return Err(IngestError::Network {
                        attempts: failures,
                        message: format!("HTTP {}", resp.status),
                    });
                }
                sleeper.sleep(Duration::from_secs(1 << (failures - 1).min(6)));
            }
            Ok(resp) => {
                return Err(IngestError::Http {
                    status: resp.status,
                    url: url.to_string(),
                })
            }
        }
    }
}

fn is_rate_limited(resp: &HttpResponse) -> bool {
    matches!(resp.status, 403 | 429)
        && (resp.headers.get("x-ratelimit-remaining").map(String::as_str) == Some("0")
            || resp.headers.contains_key("retry-after"))
}

fn rate_limit_wait(resp: &HttpResponse, now: u64) -> u64 {
    if let Some(secs) = resp.headers.get("retry-after").and_then(|v| v.parse::<u64>().ok()) {
        return secs;
    }
    resp.headers
        .get("x-ratelimit-reset")
        .and_then(|v| v.parse::<u64>().ok())
        .map(|reset| reset.saturating_sub(now) + 1)
        .unwrap_or(60)
}

/// Live transport backed by `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        UreqTransport {
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<HttpResponse, String> {
        let mut req = self.agent.get(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req.call().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .filter_map(|(k, v)| Some((k.as_str().to_ascii_lowercase(), v.to_str().ok()?.to_string())))
            .collect();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, headers, body })
    }
}

/// Replays recorded tracker responses from a directory of `page-N.json`
/// files (bodies), with optional `page-N.status` and `page-N.headers`
/// (`name: value` lines). Missing pages answer with an empty list.
pub struct RecordedTransport {
    dir: PathBuf,
}

impl RecordedTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        RecordedTransport { dir: dir.into() }
    }
}

impl Transport for RecordedTransport {
    fn get(&self, url: &str, _headers: &[(String, String)]) -> Result<HttpResponse, String> {
        let page = url
            .split(['?', '&'])
            .find_map(|kv| kv.strip_prefix("page="))
            .unwrap_or("1");
        let body_path = self.dir.join(format!("page-{page}.json"));
        let body = fs::read_to_string(&body_path).unwrap_or_else(|_| "[]".to_string());
        let status = fs::read_to_string(self.dir.join(format!("page-{page}.status")))
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or(200);
        let headers = fs::read_to_string(self.dir.join(format!("page-{page}.headers")))
            .unwrap_or_default()
            .lines()
            .filter_map(|l| l.split_once(':'))
            .map(|(k, v)| (k.trim().to_ascii_lowercase(), v.trim().to_string()))
            .collect();
        Ok(HttpResponse { status, headers, body })
    }
}

/// Fixture mode: every `*.json` file in a directory is one issue document
/// (or a list of them). Files are read in name order; no network access.
pub struct FixtureTransport;

impl FixtureTransport {
    pub fn load(dir: &Path, page_limit: usize) -> Result<FetchOutcome, IngestError> {
        let mut out = FetchOutcome::default();
        if page_limit == 0 {
            return Ok(out);
        }
        let err = |e| IngestError::Fixture {
            path: dir.to_path_buf(),
            source: e,
        };
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        for file in files {
            let text = fs::read_to_string(&file).map_err(|e| IngestError::Fixture {
                path: file.clone(),
                source: e,
            })?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Array(docs)) => out.absorb_page(docs),
                Ok(doc) => out.absorb_page(vec![doc]),
                Err(e) => {
                    log::warn!("{}: malformed fixture ({e})", file.display());
                    out.malformed += 1;
                }
            }
        }
        Ok(out)
    }
}
