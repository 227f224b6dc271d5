//! Run configuration: one TOML file, every field optional.
//!
//! Values come from built-in defaults, then the file, then command-line
//! overrides applied by the caller; [`Config::validate`] runs last.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{Budget, CampaignConfig, MutationConfig, TriageConfig};
use crate::ingest::{FetchOptions, IngestError, KeywordConfig, RateLimitPolicy, SnippetConfig, DEFAULT_KEYWORDS};
use crate::matcher::MatchParams;
use crate::recognizer::PromptVariant;
use crate::synthesizer::SynthesisConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub keywords: Vec<String>,
    pub base_url: String,
    pub page_limit: usize,
    pub max_retries: u32,
    /// Longest rate-limit reset worth sleeping through; `None` aborts.
    pub max_rate_limit_wait_s: Option<u64>,
    pub linked_hosts: Vec<String>,
}

impl Default for IngestSection {
    fn default() -> Self {
        let fetch = FetchOptions::default();
        IngestSection {
            keywords: DEFAULT_KEYWORDS.iter().map(|k| k.to_string()).collect(),
            base_url: fetch.base_url,
            page_limit: fetch.page_limit,
            max_retries: fetch.max_retries,
            max_rate_limit_wait_s: Some(3600),
            linked_hosts: SnippetConfig::default().linked_hosts,
        }
    }
}

impl IngestSection {
    pub fn keyword_config(&self) -> Result<KeywordConfig, IngestError> {
        KeywordConfig::new(&self.keywords)
    }

    /// Fetch options; the tracker token is read from `MF_TRACKER_TOKEN`.
    pub fn fetch_options(&self) -> FetchOptions {
        FetchOptions {
            base_url: self.base_url.clone(),
            page_limit: self.page_limit,
            max_retries: self.max_retries,
            rate_limit: match self.max_rate_limit_wait_s {
                Some(max_wait_s) => RateLimitPolicy::Wait { max_wait_s },
                None => RateLimitPolicy::Abort,
            },
            ..FetchOptions::default()
        }
    }

    pub fn snippet_config(&self) -> SnippetConfig {
        SnippetConfig {
            linked_hosts: self.linked_hosts.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmBackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub backend: LlmBackendKind,
    /// Directory of canned replies for the mock backend.
    pub mock_dir: Option<PathBuf>,
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_s: f64,
    pub max_concurrent: usize,
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection {
            backend: LlmBackendKind::Mock,
            mock_dir: None,
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            temperature: 0.2,
            timeout_s: 120.0,
            max_concurrent: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognizeSection {
    pub variant: String,
    pub budget: u32,
    pub verify: bool,
    /// Interpreter used to compile-check snippets; the builtin checker
    /// is used when unset.
    pub python: Option<String>,
}

impl Default for RecognizeSection {
    fn default() -> Self {
        RecognizeSection {
            variant: "all".into(),
            budget: 3,
            verify: true,
            python: None,
        }
    }
}

impl RecognizeSection {
    pub fn prompt_variant(&self) -> Result<PromptVariant, ConfigError> {
        self.variant.parse().map_err(ConfigError::Invalid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Stub,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchSection {
    pub alpha: f64,
    pub top_k: usize,
    pub h_within: f64,
    pub h_cross: f64,
    pub workers: usize,
    pub embedder: EmbedderKind,
    pub embed_base_url: String,
    pub embed_model: String,
    pub embed_dimension: usize,
    /// Persistent embedding cache (JSONL).
    pub embed_cache: Option<PathBuf>,
}

impl Default for MatchSection {
    fn default() -> Self {
        let p = MatchParams::default();
        MatchSection {
            alpha: p.alpha,
            top_k: p.top_k,
            h_within: p.h_within,
            h_cross: p.h_cross,
            workers: 1,
            embedder: EmbedderKind::Stub,
            embed_base_url: "https://api.openai.com/v1".into(),
            embed_model: "text-embedding-3-small".into(),
            embed_dimension: 1536,
            embed_cache: None,
        }
    }
}

impl MatchSection {
    pub fn params(&self) -> MatchParams {
        MatchParams {
            alpha: self.alpha,
            top_k: self.top_k,
            h_within: self.h_within,
            h_cross: self.h_cross,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesizeSection {
    pub llm_budget: u32,
    pub repair_retries: u32,
    pub timeout_s: f64,
}

impl Default for SynthesizeSection {
    fn default() -> Self {
        let s = SynthesisConfig::default();
        SynthesizeSection {
            llm_budget: s.llm_budget,
            repair_retries: s.repair_retries,
            timeout_s: s.timeout_s,
        }
    }
}

impl SynthesizeSection {
    pub fn synthesis_config(&self) -> SynthesisConfig {
        SynthesisConfig {
            llm_budget: self.llm_budget,
            repair_retries: self.repair_retries,
            timeout_s: self.timeout_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuzzSection {
    /// Round count or duration (`90s`, `30m`, `5h`).
    pub budget: String,
    pub workers: usize,
    pub quota: usize,
    pub top_n: usize,
    pub timeout_s: f64,
    pub max_runner_deaths: usize,
    /// Runner command line, or `mock:<script.json>`.
    pub runner: Option<String>,
}

impl Default for FuzzSection {
    fn default() -> Self {
        let c = CampaignConfig::default();
        FuzzSection {
            budget: "1".into(),
            workers: c.workers,
            quota: c.quota,
            top_n: c.top_n,
            timeout_s: c.timeout_s,
            max_runner_deaths: c.max_runner_deaths,
            runner: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub ingest: IngestSection,
    pub llm: LlmSection,
    pub recognize: RecognizeSection,
    #[serde(rename = "match")]
    pub matching: MatchSection,
    pub synthesize: SynthesizeSection,
    pub fuzz: FuzzSection,
    pub triage: TriageConfig,
    pub mutation: MutationConfig,
}

fn unit_interval(name: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must be within [0, 1], got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must be a positive number of seconds, got {v}")))
    }
}

impl Config {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text, path)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.llm.mock_dir);
        fix(&mut self.matching.embed_cache);
        if let Some(script) = self.fuzz.runner.as_deref().and_then(|r| r.strip_prefix("mock:")) {
            if Path::new(script).is_relative() {
                self.fuzz.runner = Some(format!("mock:{}", base.join(script).display()));
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        unit_interval("match.alpha", self.matching.alpha)?;
        unit_interval("match.h_within", self.matching.h_within)?;
        unit_interval("match.h_cross", self.matching.h_cross)?;
        if self.matching.workers == 0 {
            return Err(ConfigError::Invalid("match.workers must be at least 1".into()));
        }
        if self.fuzz.workers == 0 {
            return Err(ConfigError::Invalid("fuzz.workers must be at least 1".into()));
        }
        if self.llm.max_concurrent == 0 {
            return Err(ConfigError::Invalid("llm.max_concurrent must be at least 1".into()));
        }
        if self.matching.embedder == EmbedderKind::Http && self.matching.embed_dimension == 0 {
            return Err(ConfigError::Invalid("match.embed_dimension must be at least 1".into()));
        }
        positive("fuzz.timeout_s", self.fuzz.timeout_s)?;
        positive("synthesize.timeout_s", self.synthesize.timeout_s)?;
        positive("llm.timeout_s", self.llm.timeout_s)?;
        self.budget()?;
        self.recognize.prompt_variant()?;
        self.ingest
            .keyword_config()
            .map_err(|e| ConfigError::Invalid(format!("ingest.keywords: {e}")))?;
        Ok(())
    }

    pub fn budget(&self) -> Result<Budget, ConfigError> {
        self.fuzz.budget.parse().map_err(ConfigError::Invalid)
    }

    pub fn campaign(&self) -> Result<CampaignConfig, ConfigError> {
        Ok(CampaignConfig {
            budget: self.budget()?,
            workers: self.fuzz.workers,
            quota: self.fuzz.quota,
            top_n: self.fuzz.top_n,
            timeout_s: self.fuzz.timeout_s,
            seed: self.seed,
            max_runner_deaths: self.fuzz.max_runner_deaths,
            mutation: self.mutation.clone(),
            triage: self.triage.clone(),
        })
    }

    pub fn llm_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.llm.timeout_s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::from_toml("", Path::new("x.toml")).unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.matching.alpha, 0.35);
        assert_eq!(cfg.matching.top_k, 6);
        assert_eq!(cfg.fuzz.quota, 20);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = Config::from_toml("seed = 9\n[match]\nalpha = 0.5\n[triage]\ncompile_patterns = []\n", Path::new("x"))
            .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.matching.alpha, 0.5);
        assert_eq!(cfg.matching.top_k, 6);
        assert!(cfg.triage.compile_patterns.is_empty());
        assert!(!cfg.triage.internal_patterns.is_empty());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Config::from_toml("[match]\nalfa = 0.5\n", Path::new("x")).is_err());
        assert!(Config::from_toml("[matcher]\n", Path::new("x")).is_err());
    }

    #[test]
    fn validation_ranges() {
        let mut cfg = Config::default();
        cfg.matching.alpha = 1.5;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(m)) if m.contains("alpha")));
        let mut cfg = Config::default();
        cfg.matching.h_cross = -0.1;
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.fuzz.workers = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.fuzz.budget = "5 days".into();
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.ingest.keywords.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mf.toml");
        fs::write(&path, "[llm]\nmock_dir = \"llm\"\n[fuzz]\nrunner = \"mock:runner.json\"\n").unwrap();
        let cfg = Config::load(&path).unwrap();
        assert_eq!(cfg.llm.mock_dir, Some(dir.path().join("llm")));
        assert_eq!(cfg.fuzz.runner, Some(format!("mock:{}", dir.path().join("runner.json").display())));
    }
}
