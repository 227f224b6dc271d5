//! Per-framework API metadata: names, parameters and descriptions.

mod distance;
pub mod scrape;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use distance::levenshtein;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog source {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog source {0} contains no API records")]
    Empty(PathBuf),
}

/// Identifies one API across frameworks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ApiRef {
    pub framework: String,
    pub name: String,
}

impl ApiRef {
    pub fn new(framework: impl Into<String>, name: impl Into<String>) -> Self {
        ApiRef {
            framework: framework.into(),
            name: name.into(),
        }
    }
}

impl fmt::Display for ApiRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.framework, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiRecord {
    pub framework: String,
    pub full_name: String,
    #[serde(default)]
    pub params: Vec<ParamRecord>,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_url: Option<String>,
}

impl ApiRecord {
    pub fn api_ref(&self) -> ApiRef {
        ApiRef::new(&self.framework, &self.full_name)
    }

    /// Last dotted component, e.g. `Conv2d` for `torch.nn.Conv2d`.
    pub fn short_name(&self) -> &str {
        self.full_name.rsplit('.').next().unwrap_or(&self.full_name)
    }

    pub fn has_param(&self, name: &str) -> bool {
        self.params.iter().any(|p| p.name == name)
    }

    pub fn description_missing(&self) -> bool {
        self.description.trim().is_empty()
    }

    /// Human-readable documentation block used in synthesis prompts.
    pub fn render_doc(&self) -> String {
        let mut out = format!("{}(", self.full_name);
        let names: Vec<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
        out.push_str(&names.join(", "));
        out.push_str(")\n");
        if !self.description.is_empty() {
            out.push_str(&self.description);
            out.push('\n');
        }
        if !self.params.is_empty() {
            out.push_str("Parameters:\n");
            for p in &self.params {
                out.push_str(&format!("  {}: {}\n", p.name, p.description));
            }
        }
        out
    }
}

/// Result of loading a catalog, with the count of skipped entries.
#[derive(Debug, Default)]
pub struct LoadedCatalog {
    pub records: Vec<ApiRecord>,
    pub warnings: usize,
}

/// Loads API records from a newline-delimited record file, a reference
/// documentation dump (`.txt`/`.md`, see [`scrape`]), or a directory of
/// either. When `framework` is given it overrides/fills the framework field.
pub fn load_catalog(source: &Path, framework: Option<&str>) -> Result<LoadedCatalog, CatalogError> {
    let unreadable = |e| CatalogError::Unreadable {
        path: source.to_path_buf(),
        source: e,
    };
    let mut files = Vec::new();
    let meta = fs::metadata(source).map_err(unreadable)?;
    if meta.is_dir() {
        for entry in fs::read_dir(source).map_err(unreadable)? {
            let path = entry.map_err(unreadable)?.path();
            if path.is_file() {
                files.push(path);
            }
        }
        files.sort();
    } else {
        files.push(source.to_path_buf());
    }

    let mut raw = Vec::new();
    let mut warnings = 0;
    for file in files {
        let text = fs::read_to_string(&file).map_err(|e| CatalogError::Unreadable {
            path: file.clone(),
            source: e,
        })?;
        let ext = file.extension().and_then(|e| e.to_str()).unwrap_or("");
        let parsed = match ext {
            "txt" | "md" => scrape::parse_signature_dump(&text, framework.unwrap_or("")),
            _ => parse_record_lines(&text, framework),
        };
        warnings += parsed.warnings;
        raw.extend(parsed.records);
    }
    let mut loaded = normalize(raw);
    loaded.warnings += warnings;
    Ok(loaded)
}

fn parse_record_lines(text: &str, framework: Option<&str>) -> LoadedCatalog {
    let mut out = LoadedCatalog::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str::<serde_json::Value>(line) {
            Ok(mut value) => {
                if let (Some(fw), Some(obj)) = (framework, value.as_object_mut()) {
                    obj.entry("framework")
                        .or_insert_with(|| serde_json::Value::String(fw.to_string()));
                }
                match serde_json::from_value::<ApiRecord>(value) {
                    Ok(mut rec) => {
                        if let Some(fw) = framework {
                            rec.framework = fw.to_string();
                        }
                        out.records.push(rec);
                    }
                    Err(e) => {
                        log::warn!("catalog line {}: skipped ({e})", lineno + 1);
                        out.warnings += 1;
                    }
                }
            }
            Err(e) => {
                log::warn!("catalog line {}: malformed record ({e})", lineno + 1);
                out.warnings += 1;
            }
        }
    }
    out
}

/// Drops nameless records, collapses duplicates (keeping the longest
/// description), deduplicates parameter names and sorts by name.
pub fn normalize(records: Vec<ApiRecord>) -> LoadedCatalog {
    let mut warnings = 0;
    let mut by_key: BTreeMap<(String, String), ApiRecord> = BTreeMap::new();
    for mut rec in records {
        rec.full_name = rec.full_name.trim().to_string();
        if rec.full_name.is_empty() {
            log::warn!("catalog record without full_name skipped");
            warnings += 1;
            continue;
        }
        let mut seen = std::collections::HashSet::new();
        rec.params.retain(|p| seen.insert(p.name.clone()));
        for (i, p) in rec.params.iter_mut().enumerate() {
            p.position = i;
        }
        let key = (rec.full_name.clone(), rec.framework.clone());
        match by_key.get(&key) {
            Some(existing) if existing.description.len() >= rec.description.len() => {}
            _ => {
                by_key.insert(key, rec);
            }
        }
    }
    LoadedCatalog {
        records: by_key.into_values().collect(),
        warnings,
    }
}

/// An immutable set of catalogs, one per framework.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    apis: Vec<ApiRecord>,
    index: BTreeMap<ApiRef, usize>,
}

impl Catalog {
    pub fn new(records: impl IntoIterator<Item = ApiRecord>) -> Self {
        let mut apis: Vec<ApiRecord> = records.into_iter().collect();
        apis.sort_by(|a, b| {
            (a.framework.as_str(), a.full_name.as_str()).cmp(&(b.framework.as_str(), b.full_name.as_str()))
        });
        apis.dedup_by(|a, b| a.framework == b.framework && a.full_name == b.full_name);
        let index = apis
            .iter()
            .enumerate()
            .map(|(i, a)| (a.api_ref(), i))
            .collect();
        Catalog { apis, index }
    }

    pub fn apis(&self) -> &[ApiRecord] {
        &self.apis
    }

    pub fn len(&self) -> usize {
        self.apis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apis.is_empty()
    }

    pub fn get(&self, api: &ApiRef) -> Option<&ApiRecord> {
        self.index.get(api).map(|&i| &self.apis[i])
    }

    pub fn framework(&self, framework: &str) -> Vec<ApiRecord> {
        self.apis
            .iter()
            .filter(|a| a.framework == framework)
            .cloned()
            .collect()
    }

    pub fn frameworks(&self) -> Vec<String> {
        let mut fws: Vec<String> = self.apis.iter().map(|a| a.framework.clone()).collect();
        fws.dedup();
        fws
    }
}

/// A completed API name and its edit distance from the partial input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub full_name: String,
    pub distance: usize,
}

/// Finds the catalog name closest to `partial` in Levenshtein distance.
///
/// Ties prefer names that end with `partial` (truncated calls like
/// `nn.conv2d` are usually suffixes of the real name), then lexicographic
/// order. Returns `None` only for an empty catalog.
pub fn complete_api_name(partial: &str, catalog: &[ApiRecord]) -> Option<Completion> {
    catalog
        .iter()
        .map(|rec| {
            let distance = levenshtein(partial, &rec.full_name);
            let suffix = !partial.is_empty() && rec.full_name.ends_with(partial);
            (distance, !suffix, rec.full_name.as_str())
        })
        .min()
        .map(|(distance, _, name)| Completion {
            full_name: name.to_string(),
            distance,
        })
}

/// Largest accepted completion distance for a partial name.
pub fn completion_cap(partial: &str) -> f64 {
    0.5 * partial.chars().count() as f64 + 6.0
}
