use std::collections::{BTreeMap, HashMap};

use crate::catalog::{ApiRecord, ApiRef};

use super::{Field, MatchError};

/// Lowercased word pieces of `text`, split on non-alphanumerics and on
/// camelCase boundaries (`GetData` gives `get`, `data`; `HTTPServer` gives
/// `http`, `server`).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        let chars: Vec<char> = word.chars().collect();
        let mut cur = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if i > 0 && c.is_uppercase() {
                let prev = chars[i - 1];
                let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
                if prev.is_lowercase() || (prev.is_uppercase() && next_lower) {
                    out.push(std::mem::take(&mut cur));
                }
            }
            cur.extend(c.to_lowercase());
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out.retain(|t| !t.is_empty());
    out
}

/// Text of one metadata field, without any label.
pub fn field_text(api: &ApiRecord, field: Field) -> String {
    match field {
        Field::Name => api.full_name.clone(),
        Field::Param => api
            .params
            .iter()
            .map(|p| {
                if p.description.is_empty() {
                    p.name.clone()
                } else {
                    format!("{}: {}", p.name, p.description)
                }
            })
            .collect::<Vec<_>>()
            .join("; "),
        Field::Desc => api.description.clone(),
    }
}

/// Sparse vector sorted by term index.
pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone, Default)]
pub struct FieldIndex {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub doc_vectors: Vec<SparseVec>,
    norms: Vec<f64>,
}

impl FieldIndex {
    fn build(docs: &[Vec<String>]) -> Self {
        let mut vocabulary = BTreeMap::new();
        for doc in docs {
            for t in doc {
                let next = vocabulary.len();
                vocabulary.entry(t.clone()).or_insert(next);
            }
        }
        let mut df = vec![0usize; vocabulary.len()];
        let mut counts: Vec<BTreeMap<usize, usize>> = Vec::with_capacity(docs.len());
        for doc in docs {
            let mut c = BTreeMap::new();
            for t in doc {
                *c.entry(vocabulary[t]).or_insert(0) += 1;
            }
            for &term in c.keys() {
                df[term] += 1;
            }
            counts.push(c);
        }
        let n = docs.len() as f64;
        let idf: Vec<f64> = df.iter().map(|&d| (n / (1.0 + d as f64)).ln() + 1.0).collect();
        let doc_vectors: Vec<SparseVec> = counts
            .into_iter()
            .map(|c| c.into_iter().map(|(t, tf)| (t, tf as f64 * idf[t])).collect())
            .collect();
        let norms = doc_vectors
            .iter()
            .map(|v| v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt())
            .collect();
        FieldIndex {
            vocabulary,
            idf,
            doc_vectors,
            norms,
        }
    }

    pub fn idf_of(&self, term: &str) -> Option<f64> {
        self.vocabulary.get(term).map(|&i| self.idf[i])
    }

    fn cosine(&self, a: usize, b: usize) -> f64 {
        let (na, nb) = (self.norms[a], self.norms[b]);
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let (va, vb) = (&self.doc_vectors[a], &self.doc_vectors[b]);
        let (mut i, mut j, mut dot) = (0, 0, 0.0);
        while i < va.len() && j < vb.len() {
            match va[i].0.cmp(&vb[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    dot += va[i].1 * vb[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// TF-IDF documents for the name, parameter and description fields of every
/// API across the loaded catalogs. IDF is shared across frameworks.
#[derive(Debug, Clone)]
pub struct TfidfIndex {
    apis: Vec<ApiRef>,
    positions: HashMap<ApiRef, usize>,
    fields: [FieldIndex; 3],
}

impl TfidfIndex {
    pub fn build(apis: &[ApiRecord]) -> Result<Self, MatchError> {
        if apis.is_empty() {
            return Err(MatchError::EmptyCatalog);
        }
        let fields = Field::ALL.map(|f| {
            let docs: Vec<Vec<String>> = apis.iter().map(|a| tokenize(&field_text(a, f))).collect();
            FieldIndex::build(&docs)
        });
        if fields.iter().all(|f| f.vocabulary.is_empty()) {
            return Err(MatchError::EmptyVocabulary);
        }
        let refs: Vec<ApiRef> = apis.iter().map(ApiRecord::api_ref).collect();
        let positions = refs.iter().cloned().enumerate().map(|(i, r)| (r, i)).collect();
        Ok(TfidfIndex {
            apis: refs,
            positions,
            fields,
        })
    }

    pub fn apis(&self) -> &[ApiRef] {
        &self.apis
    }

    pub fn position(&self, api: &ApiRef) -> Option<usize> {
        self.positions.get(api).copied()
    }

    pub fn field(&self, field: Field) -> &FieldIndex {
        &self.fields[field as usize]
    }

    /// Weight vector of `api`'s document for `field`.
    pub fn vector(&self, api: &ApiRef, field: Field) -> Option<&SparseVec> {
        self.position(api).map(|i| &self.field(field).doc_vectors[i])
    }

    pub(crate) fn cosine_at(&self, a: usize, b: usize, field: Field) -> f64 {
        self.field(field).cosine(a, b)
    }

    pub fn sim_field(&self, a: &ApiRef, b: &ApiRef, field: Field) -> Result<f64, MatchError> {
        let ia = self.position(a).ok_or_else(|| MatchError::UnknownApi(a.clone()))?;
        let ib = self.position(b).ok_or_else(|| MatchError::UnknownApi(b.clone()))?;
        Ok(self.cosine_at(ia, ib, field))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ParamRecord;

    fn api(name: &str, params: &[&str], desc: &str) -> ApiRecord {
        ApiRecord {
            framework: "fw".into(),
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

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("torch.nn.Conv2d"), vec!["torch", "nn", "conv2d"]);
        assert_eq!(tokenize("GetData fetchData"), vec!["get", "data", "fetch", "data"]);
        assert_eq!(tokenize("HTTPServer"), vec!["http", "server"]);
        assert_eq!(tokenize("kernel_size"), vec!["kernel", "size"]);
        assert!(tokenize(" .,; ").is_empty());
    }

    #[test]
    fn identical_docs_are_parallel() {
        let apis = vec![api("a.x", &[], "pooling"), api("b.y", &[], "pooling"), api("c.z", &[], "other")];
        let idx = TfidfIndex::build(&apis).unwrap();
        let s = idx.sim_field(&apis[0].api_ref(), &apis[1].api_ref(), Field::Desc).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let d = idx.sim_field(&apis[0].api_ref(), &apis[2].api_ref(), Field::Desc).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn ubiquitous_terms_get_minimal_idf() {
        let apis = vec![
            api("torch.a", &[], "tensor pool"),
            api("torch.b", &[], "tensor conv"),
            api("torch.c", &[], "tensor conv"),
        ];
        let idx = TfidfIndex::build(&apis).unwrap();
        let f = idx.field(Field::Desc);
        let t = f.idf_of("tensor").unwrap();
        assert!(f.idf.iter().all(|&w| w >= t));
        assert!(f.idf_of("pool").unwrap() > f.idf_of("conv").unwrap());
    }

    #[test]
    fn empty_field_scores_zero() {
        let apis = vec![api("a.x", &[], ""), api("b.y", &[], "")];
        let idx = TfidfIndex::build(&apis).unwrap();
        assert_eq!(idx.sim_field(&apis[0].api_ref(), &apis[1].api_ref(), Field::Desc).unwrap(), 0.0);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(matches!(TfidfIndex::build(&[]), Err(MatchError::EmptyCatalog)));
        assert!(matches!(
            TfidfIndex::build(&[api("...", &[], "")]),
            Err(MatchError::EmptyVocabulary)
        ));
    }
}
