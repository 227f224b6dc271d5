//! Issue collection, bug-keyword filtering and code-snippet extraction.

mod fetch;
mod snippets;

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fetch::{
    fetch_issues, FetchOptions, FetchOutcome, FixtureTransport, HttpResponse, RateLimitPolicy,
    RecordedTransport, Repo, Sleeper, ThreadSleeper, Transport, UreqTransport,
};
pub use snippets::{description_text, extract_snippets, Extraction, SnippetConfig};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("repository coordinate must be owner/name, got {0:?}")]
    BadRepo(String),
    #[error("network failure after {attempts} attempts: {message}")]
    Network { attempts: u32, message: String },
    #[error("rate limited by tracker; reset in {wait_s}s exceeds the allowed wait")]
    RateLimited { wait_s: u64 },
    #[error("tracker returned HTTP {status} for {url}")]
    Http { status: u16, url: String },
    #[error("cannot read fixtures at {path}: {source}")]
    Fixture {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("keyword list is empty")]
    NoKeywords,
}

impl IngestError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, IngestError::Network { .. } | IngestError::RateLimited { .. })
    }
}

/// One issue document as returned by the tracker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawIssue {
    pub number: u64,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: Option<String>,
    #[serde(default)]
    pub html_url: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnippetOrigin {
    FencedBlock,
    LinkedResource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSnippet {
    pub text: String,
    pub origin: SnippetOrigin,
    /// Set by the recognizer's compile filter.
    #[serde(default)]
    pub parses: bool,
    /// Byte range of `text` inside the issue body (fenced blocks), or of the
    /// URL (linked resources).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<(usize, usize)>,
    /// Fence info string marked the block as console output or a log.
    #[serde(default)]
    pub non_code_hint: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

impl SourceSnippet {
    pub fn code(text: impl Into<String>) -> Self {
        SourceSnippet {
            text: text.into(),
            origin: SnippetOrigin::FencedBlock,
            parses: false,
            span: None,
            non_code_hint: false,
            url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub issue_id: String,
    pub framework: String,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub snippets: Vec<SourceSnippet>,
    #[serde(default)]
    pub matched_keywords: Vec<String>,
    #[serde(default)]
    pub url: String,
}

/// Case-insensitive bug-keyword phrases, in priority order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordConfig {
    keywords: Vec<String>,
}

pub const DEFAULT_KEYWORDS: &[&str] = &[
    "crash",
    "aborted (core dumped)",
    "assertion failure",
    "segmentation fault (core dumped)",
    "floating point exception",
    "segmentation fault",
    "core dumped",
    "segfault",
    "check failed",
    "internal assert failed",
    "illegal memory access",
    "heap-buffer-overflow",
    "please report this bug",
];

impl KeywordConfig {
    /// Deduplicates after case-folding, keeping first occurrences.
    pub fn new<I, S>(keywords: I) -> Result<Self, IngestError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let keywords: Vec<String> = keywords
            .into_iter()
            .map(|k| k.as_ref().trim().to_string())
            .filter(|k| !k.is_empty() && seen.insert(k.to_lowercase()))
            .collect();
        if keywords.is_empty() {
            return Err(IngestError::NoKeywords);
        }
        Ok(KeywordConfig { keywords })
    }

    /// One phrase per line; blank lines and `#` comments ignored.
    pub fn parse_list(text: &str) -> Result<Self, IngestError> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    /// Every keyword occurring in `text`, in configuration order.
    pub fn matches(&self, text: &str) -> Vec<String> {
        let folded = text.to_lowercase();
        self.keywords
            .iter()
            .filter(|k| folded.contains(&k.to_lowercase()))
            .cloned()
            .collect()
    }
}

impl Default for KeywordConfig {
    fn default() -> Self {
        KeywordConfig::new(DEFAULT_KEYWORDS).expect("default keywords are non-empty")
    }
}

/// Anything that has a title and body to filter on.
pub trait IssueDocument {
    fn to_issue_record(&self, framework: &str) -> IssueRecord;
}

impl IssueDocument for RawIssue {
    fn to_issue_record(&self, framework: &str) -> IssueRecord {
        IssueRecord {
            issue_id: self.number.to_string(),
            framework: framework.to_string(),
            title: self.title.clone(),
            body: self.body.clone().unwrap_or_default(),
            snippets: Vec::new(),
            matched_keywords: Vec::new(),
            url: self.html_url.clone(),
        }
    }
}

impl IssueDocument for IssueRecord {
    fn to_issue_record(&self, _framework: &str) -> IssueRecord {
        self.clone()
    }
}

/// Keeps documents whose title or body contains at least one keyword.
/// Tracker labels play no part. Input order is preserved.
pub fn filter_bug_issues<D: IssueDocument>(
    raw: &[D],
    framework: &str,
    cfg: &KeywordConfig,
) -> Vec<IssueRecord> {
    raw.iter()
        .filter_map(|doc| {
            let mut rec = doc.to_issue_record(framework);
            let text = format!("{}\n{}", rec.title, rec.body);
            rec.matched_keywords = cfg.matches(&text);
            (!rec.matched_keywords.is_empty()).then_some(rec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(n: u64, title: &str, body: &str) -> RawIssue {
        RawIssue {
            number: n,
            title: title.into(),
            body: Some(body.into()),
            html_url: format!("https://example.invalid/issues/{n}"),
        }
    }

    #[test]
    fn segfault_phrase_retained() {
        let docs = vec![raw(1, "avg_pool2d", "Running this gives Segmentation fault (core dumped)")];
        let kept = filter_bug_issues(&docs, "torch", &KeywordConfig::default());
        assert_eq!(kept.len(), 1);
        assert!(kept[0]
            .matched_keywords
            .contains(&"segmentation fault (core dumped)".to_string()));
    }

    #[test]
    fn feature_request_dropped() {
        let docs = vec![raw(2, "feature request: please add API", "It would be nice to have this.")];
        assert!(filter_bug_issues(&docs, "torch", &KeywordConfig::default()).is_empty());
    }

    #[test]
    fn keyword_config_dedups_case_insensitively() {
        let cfg = KeywordConfig::new(["Crash", "crash", " CRASH ", "abort"]).unwrap();
        assert_eq!(cfg.keywords(), &["Crash".to_string(), "abort".to_string()]);
        assert!(matches!(KeywordConfig::new(Vec::<String>::new()), Err(IngestError::NoKeywords)));
        assert!(KeywordConfig::parse_list("# c\n\n").is_err());
    }

    #[test]
    fn order_preserved_and_idempotent() {
        let docs = vec![
            raw(3, "crash in conv", ""),
            raw(1, "docs typo", ""),
            raw(2, "x", "Floating point exception"),
        ];
        let cfg = KeywordConfig::default();
        let once = filter_bug_issues(&docs, "tf", &cfg);
        let ids: Vec<_> = once.iter().map(|r| r.issue_id.as_str()).collect();
        assert_eq!(ids, vec!["3", "2"]);
        assert_eq!(filter_bug_issues(&once, "tf", &cfg), once);
    }
}
