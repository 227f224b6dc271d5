//! Append-only persistence for bug records, similar pairs, the test-case
//! pool and crash reports, with indexes rebuilt on load.
//!
//! Each collection is a file of newline-terminated JSON records. A record
//! counts only once its terminating newline is on disk; a torn or
//! unparsable tail left by a crash is cut off when the file is opened.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::catalog::ApiRef;
use crate::executor::CrashReport;
use crate::matcher::{rank_order, PairKind, SimilarPair};
use crate::recognizer::{BugKey, BugRecord};
use crate::synthesizer::TestCase;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// One append-only record file.
pub struct AppendLog<T> {
    path: PathBuf,
    /// Opened on the first append, so reading never creates files.
    file: Option<File>,
    /// Newline-terminated lines that failed to parse (skipped).
    pub skipped: usize,
    /// Bytes cut from a torn tail on open.
    pub truncated: u64,
    _t: PhantomData<T>,
}

impl<T: Serialize + DeserializeOwned> AppendLog<T> {
    /// Reads the intact records; the file is created on first append.
    pub fn open(path: &Path) -> Result<(Self, Vec<T>), StoreError> {
        let io_err = |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(e)),
        };
        let mut records = Vec::new();
        let mut skipped = 0;
        let mut good_end = 0usize;
        let mut start = 0usize;
        let mut last_line_bad = false;
        for (i, &b) in bytes.iter().enumerate() {
            if b != b'\n' {
                continue;
            }
            let line = &bytes[start..i];
            let parsed = std::str::from_utf8(line)
                .ok()
                .filter(|s| !s.trim().is_empty())
                .map(serde_json::from_str::<T>);
            match parsed {
                Some(Ok(r)) => {
                    records.push(r);
                    last_line_bad = false;
                }
                None => last_line_bad = false,
                Some(Err(_)) => {
                    skipped += 1;
                    last_line_bad = true;
                }
            }
            start = i + 1;
            good_end = start;
        }
        // A final terminated-but-garbled line is treated like a torn tail.
        if last_line_bad {
            skipped -= 1;
            let prev = bytes[..good_end - 1].iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
            good_end = prev;
        }
        let truncated = (bytes.len() - good_end) as u64;
        if truncated > 0 {
            log::warn!("{}: dropping {truncated} bytes of incomplete trailing record", path.display());
            OpenOptions::new()
                .write(true)
                .open(path)
                .and_then(|f| f.set_len(good_end as u64))
                .map_err(io_err)?;
        }
        if skipped > 0 {
            log::warn!("{}: skipped {skipped} unparsable records", path.display());
        }
        Ok((
            AppendLog {
                path: path.to_path_buf(),
                file: None,
                skipped,
                truncated,
                _t: PhantomData,
            },
            records,
        ))
    }

    /// Writes one record as a single line.
    pub fn append(&mut self, record: &T) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(record).expect("records serialize");
        line.push(b'\n');
        let io_err = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        if self.file.is_none() {
            if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(io_err)?;
            }
            self.file = Some(OpenOptions::new().create(true).append(true).open(&self.path).map_err(io_err)?);
        }
        let file = self.file.as_mut().expect("opened above");
        file.write_all(&line).and_then(|_| file.flush()).map_err(io_err)
    }

    pub fn sync(&self) -> Result<(), StoreError> {
        match &self.file {
            Some(f) => f.sync_data().map_err(|source| StoreError::Io {
                path: self.path.clone(),
                source,
            }),
            None => Ok(()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Reads every intact record of a log file without keeping it open.
pub fn read_records<T: Serialize + DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    Ok(AppendLog::<T>::open(path)?.1)
}

/// Writes `records` as a fresh log, replacing any existing file.
pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<(), StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut out = Vec::new();
    for r in records {
        out.extend(serde_json::to_vec(r).expect("records serialize"));
        out.push(b'\n');
    }
    fs::write(path, out).map_err(io_err)
}

#[derive(Debug, Clone)]
pub struct StorePaths {
    pub bugs: PathBuf,
    pub pairs: PathBuf,
    pub pool: PathBuf,
    pub crashes: PathBuf,
}

impl StorePaths {
    pub fn in_dir(root: &Path) -> Self {
        StorePaths {
            bugs: root.join("bugs.jsonl"),
            pairs: root.join("pairs.jsonl"),
            pool: root.join("pool.jsonl"),
            crashes: root.join("crashes.jsonl"),
        }
    }
}

type PairKey = (ApiRef, ApiRef, PairKind);

/// Collections used by synthesis and fuzzing. Keyed writes are idempotent:
/// bugs and pairs are insert-once, pool entries are last-write-wins, crash
/// reports are insert-once per test case.
pub struct Store {
    bugs_log: AppendLog<BugRecord>,
    pairs_log: AppendLog<SimilarPair>,
    pool_log: AppendLog<TestCase>,
    crashes_log: AppendLog<CrashReport>,
    bugs: Vec<BugRecord>,
    bug_keys: HashMap<BugKey, usize>,
    bugs_by_api: HashMap<ApiRef, Vec<usize>>,
    pairs: Vec<SimilarPair>,
    pair_keys: HashMap<PairKey, usize>,
    pairs_by_source: HashMap<ApiRef, Vec<usize>>,
    pool: Vec<TestCase>,
    pool_keys: HashMap<String, usize>,
    crashes: Vec<CrashReport>,
    crash_keys: HashMap<String, usize>,
}

impl Store {
    pub fn open_dir(root: &Path) -> Result<Self, StoreError> {
        Self::open(&StorePaths::in_dir(root))
    }

    pub fn open(paths: &StorePaths) -> Result<Self, StoreError> {
        let (bugs_log, bugs) = AppendLog::open(&paths.bugs)?;
        let (pairs_log, pairs) = AppendLog::open(&paths.pairs)?;
        let (pool_log, pool) = AppendLog::open(&paths.pool)?;
        let (crashes_log, crashes) = AppendLog::open(&paths.crashes)?;
        let mut s = Store {
            bugs_log,
            pairs_log,
            pool_log,
            crashes_log,
            bugs: Vec::new(),
            bug_keys: HashMap::new(),
            bugs_by_api: HashMap::new(),
            pairs: Vec::new(),
            pair_keys: HashMap::new(),
            pairs_by_source: HashMap::new(),
            pool: Vec::new(),
            pool_keys: HashMap::new(),
            crashes: Vec::new(),
            crash_keys: HashMap::new(),
        };
        for b in bugs {
            s.index_bug(b);
        }
        for p in pairs {
            s.index_pair(p);
        }
        for t in pool {
            s.index_test_case(t);
        }
        for c in crashes {
            s.index_crash(c);
        }
        Ok(s)
    }

    fn index_bug(&mut self, rec: BugRecord) -> bool {
        let key = rec.key();
        if self.bug_keys.contains_key(&key) {
            return false;
        }
        let i = self.bugs.len();
        self.bugs_by_api.entry(rec.api_ref()).or_default().push(i);
        self.bug_keys.insert(key, i);
        self.bugs.push(rec);
        true
    }

    fn index_pair(&mut self, p: SimilarPair) -> bool {
        let key = (p.source.clone(), p.target.clone(), p.kind);
        if self.pair_keys.contains_key(&key) {
            return false;
        }
        let i = self.pairs.len();
        self.pairs_by_source.entry(p.source.clone()).or_default().push(i);
        self.pair_keys.insert(key, i);
        self.pairs.push(p);
        true
    }

    fn index_test_case(&mut self, t: TestCase) {
        match self.pool_keys.get(&t.id) {
            Some(&i) => self.pool[i] = t,
            None => {
                self.pool_keys.insert(t.id.clone(), self.pool.len());
                self.pool.push(t);
            }
        }
    }

    fn index_crash(&mut self, c: CrashReport) -> bool {
        if self.crash_keys.contains_key(&c.test_case) {
            return false;
        }
        self.crash_keys.insert(c.test_case.clone(), self.crashes.len());
        self.crashes.push(c);
        true
    }

    /// Inserts unless a record with the same key exists.
    pub fn update_bugs(&mut self, rec: &BugRecord) -> Result<bool, StoreError> {
        if self.bug_keys.contains_key(&rec.key()) {
            return Ok(false);
        }
        self.bugs_log.append(rec)?;
        Ok(self.index_bug(rec.clone()))
    }

    /// Bug records of `api`, verified ones first, otherwise in insertion order.
    pub fn query_bugs(&self, api: &ApiRef) -> Vec<BugRecord> {
        let mut out: Vec<BugRecord> = self
            .bugs_by_api
            .get(api)
            .map(|ix| ix.iter().map(|&i| self.bugs[i].clone()).collect())
            .unwrap_or_default();
        out.sort_by_key(|b| !b.verified);
        out
    }

    pub fn bugs(&self) -> &[BugRecord] {
        &self.bugs
    }

    pub fn has_dedup_key(&self, api: &ApiRef, dedup_key: &str) -> bool {
        self.bug_keys.contains_key(&BugKey {
            api: api.clone(),
            provenance: format!("crash:{dedup_key}"),
        })
    }

    pub fn add_pair(&mut self, p: &SimilarPair) -> Result<bool, StoreError> {
        if self.pair_keys.contains_key(&(p.source.clone(), p.target.clone(), p.kind)) {
            return Ok(false);
        }
        self.pairs_log.append(p)?;
        Ok(self.index_pair(p.clone()))
    }

    /// Pairs with the given source and kind, best first.
    pub fn query_similar(&self, source: &ApiRef, kind: PairKind) -> Vec<SimilarPair> {
        let mut out: Vec<SimilarPair> = self
            .pairs_by_source
            .get(source)
            .into_iter()
            .flatten()
            .map(|&i| &self.pairs[i])
            .filter(|p| p.kind == kind)
            .cloned()
            .collect();
        out.sort_by(rank_order);
        out
    }

    pub fn pairs(&self) -> &[SimilarPair] {
        &self.pairs
    }

    /// Last write wins; an identical rewrite is not appended.
    pub fn upsert_test_case(&mut self, t: &TestCase) -> Result<(), StoreError> {
        if let Some(&i) = self.pool_keys.get(&t.id) {
            if self.pool[i] == *t {
                return Ok(());
            }
        }
        self.pool_log.append(t)?;
        self.index_test_case(t.clone());
        Ok(())
    }

    pub fn pool(&self) -> &[TestCase] {
        &self.pool
    }

    pub fn add_crash(&mut self, c: &CrashReport) -> Result<bool, StoreError> {
        if self.crash_keys.contains_key(&c.test_case) {
            return Ok(false);
        }
        self.crashes_log.append(c)?;
        Ok(self.index_crash(c.clone()))
    }

    pub fn crashes(&self) -> &[CrashReport] {
        &self.crashes
    }

    pub fn sync(&self) -> Result<(), StoreError> {
        self.bugs_log.sync()?;
        self.pairs_log.sync()?;
        self.pool_log.sync()?;
        self.crashes_log.sync()
    }
}
