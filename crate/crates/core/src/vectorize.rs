//! Token dictionary, bag-of-words counts and TF-IDF weights.
//!
//! Ids are assigned in order of first appearance across the corpus, so
//! dictionary construction is a sequential fold; the per-document transforms
//! are pure. TF-IDF uses raw term frequency times log2(num_docs/df) with L2
//! document normalization and no smoothing; terms present in every document
//! have zero idf and are omitted.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::textprep::TokenizedDoc;

#[derive(Debug, Error)]
pub enum VectorizeError {
    #[error("cannot build a dictionary from an empty document list")]
    NoDocuments,
    #[error("all documents are empty")]
    AllDocumentsEmpty,
    #[error("no_above must lie in [0,1], got {0}")]
    BadNoAbove(f64),
    #[error("pruning removed the entire vocabulary (no_below={no_below}, no_above={no_above})")]
    EmptyVocabulary { no_below: u32, no_above: f64 },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed dictionary row")]
    BadDictionaryRow { path: String, line: usize },
    #[error("{path}:{line}: malformed bow row")]
    BadBowRow { path: String, line: usize },
}

/// Token ↔ id bijection with document and collection frequencies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "DictionaryData", into = "DictionaryData")]
pub struct Dictionary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    df: Vec<u32>,
    cf: Vec<u64>,
    num_docs: u32,
}

/// Serialized form; the token → id index is rebuilt on load.
#[derive(Serialize, Deserialize)]
struct DictionaryData {
    tokens: Vec<String>,
    df: Vec<u32>,
    cf: Vec<u64>,
    num_docs: u32,
}

impl From<DictionaryData> for Dictionary {
    fn from(data: DictionaryData) -> Self {
        let mut dict = Dictionary {
            tokens: data.tokens,
            ids: HashMap::new(),
            df: data.df,
            cf: data.cf,
            num_docs: data.num_docs,
        };
        dict.rebuild_index();
        dict
    }
}

impl From<Dictionary> for DictionaryData {
    fn from(dict: Dictionary) -> Self {
        DictionaryData { tokens: dict.tokens, df: dict.df, cf: dict.cf, num_docs: dict.num_docs }
    }
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_docs(&self) -> u32 {
        self.num_docs
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn df(&self, id: u32) -> Option<u32> {
        self.df.get(id as usize).copied()
    }

    pub fn cf(&self, id: u32) -> Option<u64> {
        self.cf.get(id as usize).copied()
    }

    fn rebuild_index(&mut self) {
        self.ids =
            self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    }

    /// TSV rows `id, token, df, cf` under a `#num_docs` header.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#num_docs\t{}\n", self.num_docs);
        for (id, token) in self.tokens.iter().enumerate() {
            out.push_str(&format!("{id}\t{token}\t{}\t{}\n", self.df[id], self.cf[id]));
        }
        out
    }

    pub fn save_tsv(&self, path: &Path) -> Result<(), VectorizeError> {
        let mut file = fs::File::create(path).map_err(|source| VectorizeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        file.write_all(self.to_tsv().as_bytes()).map_err(|source| VectorizeError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_tsv(path: &Path) -> Result<Self, VectorizeError> {
        let text = fs::read_to_string(path).map_err(|source| VectorizeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_tsv(&text).map_err(|line| VectorizeError::BadDictionaryRow {
            path: path.display().to_string(),
            line,
        })
    }

    /// Parse the TSV form. A `#num_docs` header is required; any other
    /// `#`-prefixed line (such as a provenance stamp) is a comment.
    pub fn from_tsv(text: &str) -> Result<Self, usize> {
        let mut num_docs: Option<u32> = None;
        let mut tokens = Vec::new();
        let mut df = Vec::new();
        let mut cf = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            if let Some(value) = line.strip_prefix("#num_docs\t") {
                if num_docs.is_some() {
                    return Err(idx + 1);
                }
                num_docs = Some(value.parse().map_err(|_| idx + 1)?);
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [id, token, df_s, cf_s] = cols.as_slice() else {
                return Err(idx + 1);
            };
            let id: usize = id.parse().map_err(|_| idx + 1)?;
            if id != tokens.len() {
                return Err(idx + 1);
            }
            tokens.push(token.to_string());
            df.push(df_s.parse().map_err(|_| idx + 1)?);
            cf.push(cf_s.parse().map_err(|_| idx + 1)?);
        }
        let num_docs = num_docs.ok_or(1usize)?;
        let mut dict = Dictionary { tokens, ids: HashMap::new(), df, cf, num_docs };
        dict.rebuild_index();
        Ok(dict)
    }

    /// SHA-256 over the TSV serialization; model artifacts refuse to load
    /// against a different dictionary.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_tsv().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Sparse term counts; ids strictly increasing, counts ≥ 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BowDoc {
    pub doc_id: String,
    pub entries: Vec<(u32, u32)>,
}

impl BowDoc {
    pub fn total_tokens(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }
}

/// Sparse TF-IDF weights; zero weights omitted, L2 norm 1 when non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfDoc {
    pub doc_id: String,
    pub entries: Vec<(u32, f64)>,
}

/// Assign ids in order of first appearance and count df/cf.
pub fn build_dictionary(docs: &[TokenizedDoc]) -> Result<Dictionary, VectorizeError> {
    if docs.is_empty() {
        return Err(VectorizeError::NoDocuments);
    }
    if docs.iter().all(|d| d.tokens.is_empty()) {
        return Err(VectorizeError::AllDocumentsEmpty);
    }
    let mut dict = Dictionary {
        tokens: Vec::new(),
        ids: HashMap::new(),
        df: Vec::new(),
        cf: Vec::new(),
        num_docs: docs.len() as u32,
    };
    let mut seen_in_doc: Vec<u32> = Vec::new();
    for doc in docs {
        seen_in_doc.clear();
        for token in &doc.tokens {
            let id = match dict.ids.get(token) {
                Some(&id) => id,
                None => {
                    let id = dict.tokens.len() as u32;
                    dict.tokens.push(token.clone());
                    dict.ids.insert(token.clone(), id);
                    dict.df.push(0);
                    dict.cf.push(0);
                    id
                }
            };
            dict.cf[id as usize] += 1;
            if !seen_in_doc.contains(&id) {
                seen_in_doc.push(id);
                dict.df[id as usize] += 1;
            }
        }
    }
    Ok(dict)
}

/// Drop tokens with df < no_below or df/num_docs > no_above; surviving ids
/// are re-densified preserving relative order.
pub fn filter_extremes(
    dict: &Dictionary,
    no_below: u32,
    no_above: f64,
) -> Result<Dictionary, VectorizeError> {
    if !(0.0..=1.0).contains(&no_above) {
        return Err(VectorizeError::BadNoAbove(no_above));
    }
    let num_docs = dict.num_docs.max(1) as f64;
    let mut pruned = Dictionary {
        tokens: Vec::new(),
        ids: HashMap::new(),
        df: Vec::new(),
        cf: Vec::new(),
        num_docs: dict.num_docs,
    };
    for (id, token) in dict.tokens.iter().enumerate() {
        let df = dict.df[id];
        if df < no_below || df as f64 / num_docs > no_above {
            continue;
        }
        pruned.tokens.push(token.clone());
        pruned.df.push(df);
        pruned.cf.push(dict.cf[id]);
    }
    if pruned.tokens.is_empty() {
        return Err(VectorizeError::EmptyVocabulary { no_below, no_above });
    }
    pruned.rebuild_index();
    Ok(pruned)
}

/// Count in-dictionary tokens; out-of-dictionary tokens are dropped.
pub fn doc2bow(doc: &TokenizedDoc, dict: &Dictionary) -> BowDoc {
    let mut counts: HashMap<u32, u32> = HashMap::new();
    for token in &doc.tokens {
        if let Some(id) = dict.id(token) {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(u32, u32)> = counts.into_iter().collect();
    entries.sort_unstable();
    BowDoc { doc_id: doc.doc_id.clone(), entries }
}

/// weight(d,w) = tf(d,w) · log2(num_docs / df(w)), L2-normalized per
/// document; zero-idf terms (df == num_docs) vanish.
pub fn tfidf_transform(bows: &[BowDoc], dict: &Dictionary) -> Vec<TfidfDoc> {
    let num_docs = dict.num_docs() as f64;
    bows.iter()
        .map(|bow| {
            let mut entries: Vec<(u32, f64)> = bow
                .entries
                .iter()
                .filter_map(|&(id, count)| {
                    let df = dict.df(id)? as f64;
                    let idf = (num_docs / df).log2();
                    if idf > 0.0 {
                        Some((id, count as f64 * idf))
                    } else {
                        None
                    }
                })
                .collect();
            let norm = entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                for entry in &mut entries {
                    entry.1 /= norm;
                }
            }
            TfidfDoc { doc_id: bow.doc_id.clone(), entries }
        })
        .collect()
}

/// Sparse text serialization: `doc_id<TAB>id:count ...` per line.
pub fn write_bow_corpus(bows: &[BowDoc]) -> String {
    let mut out = String::new();
    for bow in bows {
        out.push_str(&bow.doc_id);
        for &(id, count) in &bow.entries {
            out.push_str(&format!("\t{id}:{count}"));
        }
        out.push('\n');
    }
    out
}

/// Parse the sparse text form; `#`-prefixed lines are comments.
pub fn read_bow_corpus(text: &str, label: &str) -> Result<Vec<BowDoc>, VectorizeError> {
    let mut bows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let doc_id = cols
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| VectorizeError::BadBowRow { path: label.to_string(), line: idx + 1 })?
            .to_string();
        let mut entries = Vec::new();
        let mut last_id: Option<u32> = None;
        for pair in cols {
            let (id, count) = pair
                .split_once(':')
                .and_then(|(i, c)| Some((i.parse::<u32>().ok()?, c.parse::<u32>().ok()?)))
                .ok_or_else(|| VectorizeError::BadBowRow {
                    path: label.to_string(),
                    line: idx + 1,
                })?;
            if count == 0 || last_id.is_some_and(|prev| id <= prev) {
                return Err(VectorizeError::BadBowRow { path: label.to_string(), line: idx + 1 });
            }
            last_id = Some(id);
            entries.push((id, count));
        }
        bows.push(BowDoc { doc_id, entries });
    }
    Ok(bows)
}
