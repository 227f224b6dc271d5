//! Operation-similar and parameter-similar API pairs from combined lexical
//! and semantic similarity, with Top-k plus threshold selection.

mod embed;
mod tfidf;

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{ApiRecord, ApiRef};

pub use embed::{
    clamped_cosine, fnv1a, CachedEmbedder, EmbeddingProvider, HttpEmbedder, HttpEmbedderConfig,
    StubEmbedder, STUB_DIMENSION,
};
pub use tfidf::{field_text, tokenize, FieldIndex, SparseVec, TfidfIndex};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("no API records to match")]
    EmptyCatalog,
    #[error("catalog metadata has an empty vocabulary")]
    EmptyVocabulary,
    #[error("API {0} is not in the index")]
    UnknownApi(ApiRef),
    #[error("embedding provider failed: {0}")]
    Provider(String),
    #[error("no cached embedding for {0:?} and no provider configured")]
    CacheMiss(String),
}

impl MatchError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, MatchError::Provider(_))
    }
}

/// Metadata fields compared separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Name = 0,
    Param = 1,
    Desc = 2,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::Name, Field::Param, Field::Desc];
}

/// Labeled serialization of an API's metadata.
pub fn serialize_metadata(api: &ApiRecord) -> String {
    format!(
        "NAME: {}\nPARAMS: {}\nDESC: {}",
        field_text(api, Field::Name),
        field_text(api, Field::Param),
        field_text(api, Field::Desc)
    )
}

/// Larger of (name + param) and (desc + param), halved into [0, 1].
pub fn max_of_sums(name: f64, param: f64, desc: f64) -> f64 {
    (name + param).max(desc + param) / 2.0
}

pub fn combine(text: f64, sem: f64, alpha: f64) -> f64 {
    alpha * text + (1.0 - alpha) * sem
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairKind {
    #[serde(rename = "OS")]
    Os,
    #[serde(rename = "PS")]
    Ps,
}

impl PairKind {
    pub fn label(self) -> &'static str {
        match self {
            PairKind::Os => "operation-similar",
            PairKind::Ps => "parameter-similar",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarPair {
    pub source: ApiRef,
    pub target: ApiRef,
    pub kind: PairKind,
    pub text_score: f64,
    pub sem_score: f64,
    pub combined_score: f64,
    pub alpha_used: f64,
}

impl SimilarPair {
    pub fn id(&self) -> String {
        let kind = match self.kind {
            PairKind::Os => "OS",
            PairKind::Ps => "PS",
        };
        format!("{}->{}/{}", self.source, self.target, kind)
    }
}

/// Score-descending, ties by target full name (then framework).
pub fn rank_order(a: &SimilarPair, b: &SimilarPair) -> Ordering {
    b.combined_score
        .total_cmp(&a.combined_score)
        .then_with(|| a.target.name.cmp(&b.target.name))
        .then_with(|| a.target.framework.cmp(&b.target.framework))
}

/// Top-k plus threshold selection: the first `k` candidates by score and
/// every later one scoring at least `h`.
pub fn select_similar(mut candidates: Vec<SimilarPair>, k: usize, h: f64) -> Vec<SimilarPair> {
    candidates.sort_by(rank_order);
    candidates
        .into_iter()
        .enumerate()
        .filter(|(i, p)| *i < k || p.combined_score >= h)
        .map(|(_, p)| p)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    pub alpha: f64,
    pub top_k: usize,
    pub h_within: f64,
    pub h_cross: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            alpha: 0.35,
            top_k: 6,
            h_within: 0.70,
            h_cross: 0.60,
        }
    }
}

/// Similarity oracle over a fixed set of APIs: TF-IDF documents plus one
/// embedding per metadata field.
pub struct Matcher {
    records: Vec<ApiRecord>,
    tfidf: TfidfIndex,
    embeddings: Vec<[Vec<f64>; 3]>,
}

impl Matcher {
    /// Duplicate API identities keep their first record.
    pub fn build(apis: &[ApiRecord], provider: &dyn EmbeddingProvider) -> Result<Self, MatchError> {
        let mut seen = HashSet::new();
        let records: Vec<ApiRecord> = apis.iter().filter(|a| seen.insert(a.api_ref())).cloned().collect();
        let tfidf = TfidfIndex::build(&records)?;
        let mut embeddings = Vec::with_capacity(records.len());
        for r in &records {
            embeddings.push([
                provider.embed(&field_text(r, Field::Name))?,
                provider.embed(&field_text(r, Field::Param))?,
                provider.embed(&field_text(r, Field::Desc))?,
            ]);
        }
        Ok(Matcher {
            records,
            tfidf,
            embeddings,
        })
    }

    pub fn records(&self) -> &[ApiRecord] {
        &self.records
    }

    pub fn tfidf(&self) -> &TfidfIndex {
        &self.tfidf
    }

    fn pos(&self, api: &ApiRef) -> Result<usize, MatchError> {
        self.tfidf.position(api).ok_or_else(|| MatchError::UnknownApi(api.clone()))
    }

    pub fn sim_text_field(&self, a: &ApiRef, b: &ApiRef, field: Field) -> Result<f64, MatchError> {
        Ok(self.tfidf.cosine_at(self.pos(a)?, self.pos(b)?, field))
    }

    pub fn sim_sem_field(&self, a: &ApiRef, b: &ApiRef, field: Field) -> Result<f64, MatchError> {
        let (i, j) = (self.pos(a)?, self.pos(b)?);
        Ok(self.sem_at(i, j, field))
    }

    fn sem_at(&self, i: usize, j: usize, field: Field) -> f64 {
        clamped_cosine(&self.embeddings[i][field as usize], &self.embeddings[j][field as usize])
    }

    fn text_all_at(&self, i: usize, j: usize) -> f64 {
        let f = |field| self.tfidf.cosine_at(i, j, field);
        max_of_sums(f(Field::Name), f(Field::Param), f(Field::Desc))
    }

    fn sem_all_at(&self, i: usize, j: usize) -> f64 {
        let f = |field| self.sem_at(i, j, field);
        max_of_sums(f(Field::Name), f(Field::Param), f(Field::Desc))
    }

    pub fn sim_text_all(&self, a: &ApiRef, b: &ApiRef) -> Result<f64, MatchError> {
        Ok(self.text_all_at(self.pos(a)?, self.pos(b)?))
    }

    pub fn sim_sem_all(&self, a: &ApiRef, b: &ApiRef) -> Result<f64, MatchError> {
        Ok(self.sem_all_at(self.pos(a)?, self.pos(b)?))
    }

    fn pair_at(&self, i: usize, j: usize, kind: PairKind, alpha: f64) -> SimilarPair {
        let (text, sem) = match kind {
            PairKind::Os => (self.text_all_at(i, j), self.sem_all_at(i, j)),
            PairKind::Ps => (self.tfidf.cosine_at(i, j, Field::Param), self.sem_at(i, j, Field::Param)),
        };
        SimilarPair {
            source: self.tfidf.apis()[i].clone(),
            target: self.tfidf.apis()[j].clone(),
            kind,
            text_score: text,
            sem_score: sem,
            combined_score: combine(text, sem, alpha),
            alpha_used: alpha,
        }
    }

    pub fn score_os(&self, a: &ApiRef, b: &ApiRef, alpha: f64) -> Result<SimilarPair, MatchError> {
        Ok(self.pair_at(self.pos(a)?, self.pos(b)?, PairKind::Os, alpha))
    }

    pub fn score_ps(&self, a: &ApiRef, b: &ApiRef, alpha: f64) -> Result<SimilarPair, MatchError> {
        Ok(self.pair_at(self.pos(a)?, self.pos(b)?, PairKind::Ps, alpha))
    }

    /// OS then PS selection for one source, within its framework and
    /// across frameworks separately. PS candidates exclude selected OS
    /// targets.
    fn match_source(&self, i: usize, params: &MatchParams) -> Vec<SimilarPair> {
        let fw = &self.records[i].framework;
        let mut out = Vec::new();
        for (within, h) in [(true, params.h_within), (false, params.h_cross)] {
            let group: Vec<usize> = (0..self.records.len())
                .filter(|&j| j != i && (self.records[j].framework == *fw) == within)
                .collect();
            if group.is_empty() {
                continue;
            }
            let os = select_similar(
                group.iter().map(|&j| self.pair_at(i, j, PairKind::Os, params.alpha)).collect(),
                params.top_k,
                h,
            );
            let taken: HashSet<&ApiRef> = os.iter().map(|p| &p.target).collect();
            let ps_candidates: Vec<SimilarPair> = group
                .iter()
                .filter(|&&j| !taken.contains(&self.tfidf.apis()[j]))
                .map(|&j| self.pair_at(i, j, PairKind::Ps, params.alpha))
                .collect();
            let ps = select_similar(ps_candidates, params.top_k, h);
            out.extend(os);
            out.extend(ps);
        }
        out
    }

    /// Similar pairs for every API, in catalog order. Sources are scored
    /// on up to `workers` threads; the result does not depend on `workers`.
    pub fn match_all(&self, params: &MatchParams, workers: usize) -> Vec<SimilarPair> {
        let n = self.records.len();
        let workers = workers.clamp(1, n.max(1));
        let chunk = n.div_ceil(workers).max(1);
        let mut parts: Vec<Vec<SimilarPair>> = Vec::new();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..n)
                .step_by(chunk)
                .map(|start| {
                    s.spawn(move || {
                        (start..(start + chunk).min(n))
                            .flat_map(|i| self.match_source(i, params))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            parts = handles.into_iter().map(|h| h.join().expect("matcher worker panicked")).collect();
        });
        parts.into_iter().flatten().collect()
    }
}

/// Groups pairs by source for lookup.
pub fn index_pairs(pairs: &[SimilarPair]) -> HashMap<&ApiRef, Vec<&SimilarPair>> {
    let mut m: HashMap<&ApiRef, Vec<&SimilarPair>> = HashMap::new();
    for p in pairs {
        m.entry(&p.source).or_default().push(p);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ParamRecord;

    fn api(fw: &str, name: &str, params: &[&str], desc: &str) -> ApiRecord {
        ApiRecord {
            framework: fw.into(),
            full_name: name.into(),
            params: params
                .iter()
                .enumerate()
                .map(|(i, p)| ParamRecord { name: p.to_string(), description: String::new(), position: i })
                .collect(),
            description: desc.into(),
            doc_url: None,
        }
    }

    fn pair(target: &str, score: f64) -> SimilarPair {
        SimilarPair {
            source: ApiRef::new("fw", "src"),
            target: ApiRef::new("fw", target),
            kind: PairKind::Os,
            text_score: score,
            sem_score: score,
            combined_score: score,
            alpha_used: 0.35,
        }
    }

    #[test]
    fn formula_examples() {
        assert!((max_of_sums(0.8, 0.4, 0.2) - 0.6).abs() < 1e-12);
        assert_eq!(max_of_sums(1.0, 1.0, 1.0), 1.0);
        assert!((combine(0.8, 0.6, 0.35) - 0.67).abs() < 1e-12);
        assert_eq!(combine(0.8, 0.6, 1.0), 0.8);
    }

    #[test]
    fn algorithm_one_trace() {
        let scores = [0.9, 0.8, 0.75, 0.7, 0.65, 0.6, 0.58, 0.4];
        let cands: Vec<_> = scores.iter().enumerate().map(|(i, &s)| pair(&format!("t{i}"), s)).collect();
        let out = select_similar(cands.clone(), 6, 0.5);
        assert_eq!(out.len(), 7);
        assert_eq!(out.last().unwrap().combined_score, 0.58);
        assert!(select_similar(cands.clone(), 0, 1.0).is_empty());
        assert_eq!(select_similar(cands, 0, 0.0).len(), 8);
    }

    #[test]
    fn ties_break_by_target_name() {
        let out = select_similar(vec![pair("b", 0.5), pair("a", 0.5), pair("c", 0.9)], 3, 1.0);
        let names: Vec<_> = out.iter().map(|p| p.target.name.as_str()).collect();
        assert_eq!(names, vec!["c", "a", "b"]);
    }

    fn toy() -> Vec<ApiRecord> {
        vec![
            api("torch", "torch.nn.MaxPool2d", &["kernel_size", "stride", "padding"], "Applies 2D max pooling over an input."),
            api("torch", "torch.nn.AvgPool2d", &["kernel_size", "stride", "padding"], "Applies 2D average pooling over an input."),
            api("torch", "torch.fft.fft", &["input", "n", "dim"], "Computes the one dimensional discrete Fourier transform."),
            api("tf", "tf.nn.max_pool2d", &["input", "ksize", "strides", "padding"], "Performs max pooling on the input."),
            api("tf", "tf.signal.fft", &["input", "name"], "Fast Fourier transform."),
        ]
    }

    #[test]
    fn pooling_siblings_are_os_and_ps_excludes_os() {
        let m = Matcher::build(&toy(), &StubEmbedder).unwrap();
        let params = MatchParams { top_k: 1, ..MatchParams::default() };
        let pairs = m.match_all(&params, 3);
        let max = ApiRef::new("torch", "torch.nn.MaxPool2d");
        let os: Vec<_> = pairs.iter().filter(|p| p.source == max && p.kind == PairKind::Os).collect();
        assert!(os.iter().any(|p| p.target.name == "torch.nn.AvgPool2d"));
        assert!(os.iter().any(|p| p.target.name == "tf.nn.max_pool2d"));
        let mut seen = HashSet::new();
        for p in &pairs {
            assert!(seen.insert((p.source.clone(), p.target.clone())), "pair {} listed twice", p.id());
            assert!((p.combined_score - combine(p.text_score, p.sem_score, p.alpha_used)).abs() == 0.0);
        }
        assert_eq!(pairs, m.match_all(&params, 1));
    }

    #[test]
    fn raw_scores_symmetric() {
        let m = Matcher::build(&toy(), &StubEmbedder).unwrap();
        let refs: Vec<ApiRef> = m.records().iter().map(ApiRecord::api_ref).collect();
        for a in &refs {
            for b in &refs {
                for f in Field::ALL {
                    assert_eq!(m.sim_text_field(a, b, f).unwrap(), m.sim_text_field(b, a, f).unwrap());
                    assert_eq!(m.sim_sem_field(a, b, f).unwrap(), m.sim_sem_field(b, a, f).unwrap());
                }
            }
        }
    }

    #[test]
    fn serialization_layout() {
        let mut a = api("torch", "torch.nn.Conv2d", &["stride"], "2D convolution.");
        a.params[0].description = "step".into();
        let s = serialize_metadata(&a);
        assert_eq!(s, "NAME: torch.nn.Conv2d\nPARAMS: stride: step\nDESC: 2D convolution.");
    }
}
