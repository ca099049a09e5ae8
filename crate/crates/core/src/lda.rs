//! LDA topic model trained by collapsed Gibbs sampling.
//!
//! Inference resamples each token's topic assignment from its full
//! conditional p(z_i = k | ·) ∝ (n_dk + α)·(n_kw + β)/(n_k + Vβ) with the
//! token's own assignment removed from the counts. Sampling uses inverse-CDF
//! over the K-vector with one uniform draw per token and a seeded ChaCha8
//! generator, so runs are reproducible bit-for-bit and a shorter run is a
//! prefix of a longer one with the same seed.
//!
//! φ and θ are estimated from the final counts by default; averaging over
//! post-burn-in sweeps is available behind a config flag.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vectorize::{BowDoc, Dictionary};

/// Separates the fold-in RNG stream from the training stream.
const FOLD_IN_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const FOLD_IN_SWEEPS: u32 = 50;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("held-out set is empty")]
    EmptyHeldout,
    #[error("held-out document {0} has no tokens")]
    EmptyHeldoutDoc(String),
    #[error("held-out document {doc_id} uses token id {token_id} outside the vocabulary (V={vocab})")]
    OutOfVocabulary { doc_id: String, token_id: u32, vocab: usize },
    #[error("count matrices are inconsistent: {0}")]
    InconsistentCounts(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file {path}: {message}")]
    MalformedModel { path: String, message: String },
    #[error("model was trained against dictionary {model_hash} but {expected_hash} was supplied")]
    DictionaryHashMismatch { model_hash: String, expected_hash: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: u32,
    pub burn_in: u32,
    pub seed: u64,
    /// Average φ/θ over post-burn-in sweeps instead of using final counts.
    pub average_after_burn_in: bool,
}

impl LdaConfig {
    /// Defaults for a given topic count: α = 50/K, β = 0.01, 1000 sweeps
    /// with 100 burn-in, no averaging.
    pub fn for_k(k: usize) -> Self {
        LdaConfig {
            k,
            alpha: 50.0 / k.max(1) as f64,
            beta: 0.01,
            iterations: 1000,
            burn_in: 100,
            seed: 42,
            average_after_burn_in: false,
        }
    }

    pub fn validate(&self) -> Result<(), LdaError> {
        if self.k < 1 {
            return Err(LdaError::BadConfig("k must be at least 1".into()));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(LdaError::BadConfig(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(LdaError::BadConfig(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.iterations <= self.burn_in {
            return Err(LdaError::BadConfig(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        Ok(())
    }
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig::for_k(4)
    }
}

/// A trained model: assignments, count matrices and the φ/θ estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub config: LdaConfig,
    pub dictionary_hash: String,
    pub vocab_size: usize,
    pub doc_ids: Vec<String>,
    /// Per-token topic assignments, parallel to the expanded documents.
    /// Empty for models reconstructed from counts.
    pub assignments: Vec<Vec<usize>>,
    pub n_dk: Vec<Vec<u64>>,
    pub n_kw: Vec<Vec<u64>>,
    pub n_k: Vec<u64>,
    pub n_d: Vec<u64>,
    /// K×V topic-word distributions, rows sum to 1.
    pub phi: Vec<Vec<f64>>,
    /// D×K document-topic distributions, rows sum to 1.
    pub theta: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl LdaModel {
    pub fn num_topics(&self) -> usize {
        self.config.k
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.n_k.iter().sum()
    }

    /// Verify Σ_w n_kw = n_k, Σ_k n_dk = n_d and Σ n_k = Σ n_d.
    pub fn validate_counts(&self) -> Result<(), LdaError> {
        for (k, row) in self.n_kw.iter().enumerate() {
            let sum: u64 = row.iter().sum();
            if sum != self.n_k[k] {
                return Err(LdaError::InconsistentCounts(format!(
                    "topic {k}: sum of word counts {sum} != n_k {}",
                    self.n_k[k]
                )));
            }
        }
        for (d, row) in self.n_dk.iter().enumerate() {
            let sum: u64 = row.iter().sum();
            if sum != self.n_d[d] {
                return Err(LdaError::InconsistentCounts(format!(
                    "doc {d}: sum of topic counts {sum} != n_d {}",
                    self.n_d[d]
                )));
            }
        }
        let by_topic: u64 = self.n_k.iter().sum();
        let by_doc: u64 = self.n_d.iter().sum();
        if by_topic != by_doc {
            return Err(LdaError::InconsistentCounts(format!(
                "token totals disagree: {by_topic} by topic vs {by_doc} by doc"
            )));
        }
        Ok(())
    }

    /// Rebuild a model from count matrices (used when loading artifacts and
    /// for constructing analytic test models). φ and θ come from the counts.
    pub fn from_counts(
        config: LdaConfig,
        dictionary_hash: String,
        vocab_size: usize,
        doc_ids: Vec<String>,
        n_dk: Vec<Vec<u64>>,
        n_kw: Vec<Vec<u64>>,
    ) -> Result<LdaModel, LdaError> {
        config.validate()?;
        if n_kw.len() != config.k || n_dk.len() != doc_ids.len() {
            return Err(LdaError::InconsistentCounts("matrix shapes disagree with config".into()));
        }
        if n_kw.iter().any(|row| row.len() != vocab_size)
            || n_dk.iter().any(|row| row.len() != config.k)
        {
            return Err(LdaError::InconsistentCounts("matrix row lengths are ragged".into()));
        }
        let n_k: Vec<u64> = n_kw.iter().map(|row| row.iter().sum()).collect();
        let n_d: Vec<u64> = n_dk.iter().map(|row| row.iter().sum()).collect();
        let mut model = LdaModel {
            config,
            dictionary_hash,
            vocab_size,
            doc_ids,
            assignments: Vec::new(),
            n_dk,
            n_kw,
            n_k,
            n_d,
            phi: Vec::new(),
            theta: Vec::new(),
            warnings: Vec::new(),
        };
        model.validate_counts()?;
        model.estimate_from_counts();
        Ok(model)
    }

    fn estimate_from_counts(&mut self) {
        let k = self.config.k;
        let v = self.vocab_size;
        let alpha = self.config.alpha;
        let beta = self.config.beta;
        self.phi = (0..k)
            .map(|t| {
                let denom = self.n_k[t] as f64 + v as f64 * beta;
                (0..v).map(|w| (self.n_kw[t][w] as f64 + beta) / denom).collect()
            })
            .collect();
        self.theta = (0..self.doc_ids.len())
            .map(|d| {
                let denom = self.n_d[d] as f64 + k as f64 * alpha;
                (0..k).map(|t| (self.n_dk[d][t] as f64 + alpha) / denom).collect()
            })
            .collect();
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Versioned<'a> {
            schema_version: u32,
            model: &'a LdaModel,
        }
        serde_json::to_string(&Versioned { schema_version: MODEL_SCHEMA_VERSION, model: self })
            .expect("model serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), LdaError> {
        fs::write(path, self.to_json()).map_err(|source| LdaError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Load a model, refusing a dictionary-hash mismatch when the caller
    /// supplies the hash of the dictionary it intends to use.
    pub fn load(path: &Path, expected_dictionary_hash: Option<&str>) -> Result<LdaModel, LdaError> {
        let text = fs::read_to_string(path).map_err(|source| LdaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, expected_dictionary_hash).map_err(|message| match message {
            FromJsonError::Malformed(message) => LdaError::MalformedModel {
                path: path.display().to_string(),
                message,
            },
            FromJsonError::HashMismatch { model_hash, expected_hash } => {
                LdaError::DictionaryHashMismatch { model_hash, expected_hash }
            }
        })
    }

    pub fn from_json(
        text: &str,
        expected_dictionary_hash: Option<&str>,
    ) -> Result<LdaModel, FromJsonError> {
        #[derive(Deserialize)]
        struct Versioned {
            schema_version: u32,
            model: LdaModel,
        }
        let versioned: Versioned =
            serde_json::from_str(text).map_err(|e| FromJsonError::Malformed(e.to_string()))?;
        if versioned.schema_version != MODEL_SCHEMA_VERSION {
            return Err(FromJsonError::Malformed(format!(
                "unsupported schema version {}",
                versioned.schema_version
            )));
        }
        if let Some(expected) = expected_dictionary_hash {
            if versioned.model.dictionary_hash != expected {
                return Err(FromJsonError::HashMismatch {
                    model_hash: versioned.model.dictionary_hash.clone(),
                    expected_hash: expected.to_string(),
                });
            }
        }
        Ok(versioned.model)
    }
}

#[derive(Debug)]
pub enum FromJsonError {
    Malformed(String),
    HashMismatch { model_hash: String, expected_hash: String },
}

fn expand_instances(bows: &[BowDoc]) -> Vec<Vec<u32>> {
    bows.iter()
        .map(|bow| {
            let mut tokens = Vec::with_capacity(bow.total_tokens() as usize);
            for &(id, count) in &bow.entries {
                for _ in 0..count {
                    tokens.push(id);
                }
            }
            tokens
        })
        .collect()
}

/// Train by collapsed Gibbs sampling. Deterministic for a fixed seed.
pub fn train_lda(
    bows: &[BowDoc],
    dict: &Dictionary,
    cfg: &LdaConfig,
) -> Result<LdaModel, LdaError> {
    cfg.validate()?;
    if bows.is_empty() {
        return Err(LdaError::EmptyCorpus);
    }
    let docs = expand_instances(bows);
    let total_tokens: u64 = docs.iter().map(|d| d.len() as u64).sum();
    if total_tokens == 0 {
        return Err(LdaError::EmptyCorpus);
    }
    let k = cfg.k;
    let v = dict.len();
    let alpha = cfg.alpha;
    let beta = cfg.beta;
    let v_beta = v as f64 * beta;

    let mut warnings = Vec::new();
    if k as u64 > total_tokens {
        warnings.push(format!(
            "topic count {k} exceeds the corpus size of {total_tokens} tokens"
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d_count = docs.len();
    let mut n_dk = vec![vec![0u64; k]; d_count];
    let mut n_kw = vec![vec![0u64; v]; k];
    let mut n_k = vec![0u64; k];
    let mut n_d = vec![0u64; d_count];
    let mut assignments: Vec<Vec<usize>> = docs.iter().map(|d| vec![0usize; d.len()]).collect();

    for (d, tokens) in docs.iter().enumerate() {
        for (i, &w) in tokens.iter().enumerate() {
            let topic = rng.random_range(0..k);
            assignments[d][i] = topic;
            n_dk[d][topic] += 1;
            n_kw[topic][w as usize] += 1;
            n_k[topic] += 1;
            n_d[d] += 1;
        }
    }

    let mut weights = vec![0.0f64; k];
    let mut phi_acc = if cfg.average_after_burn_in { vec![vec![0.0f64; v]; k] } else { Vec::new() };
    let mut theta_acc =
        if cfg.average_after_burn_in { vec![vec![0.0f64; k]; d_count] } else { Vec::new() };
    let mut averaged_sweeps = 0u32;

    for sweep in 1..=cfg.iterations {
        for (d, tokens) in docs.iter().enumerate() {
            for (i, &w) in tokens.iter().enumerate() {
                let w = w as usize;
                let old = assignments[d][i];
                n_dk[d][old] -= 1;
                n_kw[old][w] -= 1;
                n_k[old] -= 1;

                let mut total = 0.0;
                for (t, weight) in weights.iter_mut().enumerate() {
                    *weight = (n_dk[d][t] as f64 + alpha) * (n_kw[t][w] as f64 + beta)
                        / (n_k[t] as f64 + v_beta);
                    total += *weight;
                }
                let target = rng.random::<f64>() * total;
                let mut cumulative = 0.0;
                let mut chosen = k - 1;
                for (t, &weight) in weights.iter().enumerate() {
                    cumulative += weight;
                    if target < cumulative {
                        chosen = t;
                        break;
                    }
                }

                assignments[d][i] = chosen;
                n_dk[d][chosen] += 1;
                n_kw[chosen][w] += 1;
                n_k[chosen] += 1;
            }
        }

        #[cfg(debug_assertions)]
        if sweep % 10 == 0 {
            debug_check_counts(&n_dk, &n_kw, &n_k, &n_d, total_tokens);
        }

        if cfg.average_after_burn_in && sweep > cfg.burn_in {
            averaged_sweeps += 1;
            for t in 0..k {
                let denom = n_k[t] as f64 + v_beta;
                for w in 0..v {
                    phi_acc[t][w] += (n_kw[t][w] as f64 + beta) / denom;
                }
            }
            for d in 0..d_count {
                let denom = n_d[d] as f64 + k as f64 * alpha;
                for t in 0..k {
                    theta_acc[d][t] += (n_dk[d][t] as f64 + alpha) / denom;
                }
            }
        }
    }

    let mut model = LdaModel {
        config: cfg.clone(),
        dictionary_hash: dict.hash(),
        vocab_size: v,
        doc_ids: bows.iter().map(|b| b.doc_id.clone()).collect(),
        assignments,
        n_dk,
        n_kw,
        n_k,
        n_d,
        phi: Vec::new(),
        theta: Vec::new(),
        warnings,
    };
    if cfg.average_after_burn_in {
        let samples = averaged_sweeps.max(1) as f64;
        model.phi = phi_acc
            .into_iter()
            .map(|row| row.into_iter().map(|x| x / samples).collect())
            .collect();
        model.theta = theta_acc
            .into_iter()
            .map(|row| row.into_iter().map(|x| x / samples).collect())
            .collect();
    } else {
        model.estimate_from_counts();
    }
    Ok(model)
}

#[cfg(debug_assertions)]
fn debug_check_counts(
    n_dk: &[Vec<u64>],
    n_kw: &[Vec<u64>],
    n_k: &[u64],
    n_d: &[u64],
    total: u64,
) {
    for (k, row) in n_kw.iter().enumerate() {
        debug_assert_eq!(row.iter().sum::<u64>(), n_k[k], "topic {k} word counts drifted");
    }
    for (d, row) in n_dk.iter().enumerate() {
        debug_assert_eq!(row.iter().sum::<u64>(), n_d[d], "doc {d} topic counts drifted");
    }
    debug_assert_eq!(n_k.iter().sum::<u64>(), total, "topic totals drifted");
}

/// Held-out perplexity with θ inferred by fold-in Gibbs against the frozen φ.
/// exp(−Σ_d Σ_w count·log Σ_k θ_dk·φ_kw / total tokens).
pub fn perplexity(model: &LdaModel, heldout: &[BowDoc]) -> Result<f64, LdaError> {
    if heldout.is_empty() {
        return Err(LdaError::EmptyHeldout);
    }
    for bow in heldout {
        if bow.total_tokens() == 0 {
            return Err(LdaError::EmptyHeldoutDoc(bow.doc_id.clone()));
        }
        if let Some(&(id, _)) =
            bow.entries.iter().find(|&&(id, _)| id as usize >= model.vocab_size)
        {
            return Err(LdaError::OutOfVocabulary {
                doc_id: bow.doc_id.clone(),
                token_id: id,
                vocab: model.vocab_size,
            });
        }
    }

    let k = model.config.k;
    let alpha = model.config.alpha;
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ FOLD_IN_SALT);
    let docs = expand_instances(heldout);

    let mut log_likelihood = 0.0;
    let mut total = 0u64;
    let mut weights = vec![0.0f64; k];
    for (bow, tokens) in heldout.iter().zip(&docs) {
        let mut n_dk = vec![0u64; k];
        let mut z = vec![0usize; tokens.len()];
        for (i, _) in tokens.iter().enumerate() {
            let topic = rng.random_range(0..k);
            z[i] = topic;
            n_dk[topic] += 1;
        }
        for _ in 0..FOLD_IN_SWEEPS {
            for (i, &w) in tokens.iter().enumerate() {
                let old = z[i];
                n_dk[old] -= 1;
                let mut sum = 0.0;
                for (t, weight) in weights.iter_mut().enumerate() {
                    *weight = (n_dk[t] as f64 + alpha) * model.phi[t][w as usize];
                    sum += *weight;
                }
                let target = rng.random::<f64>() * sum;
                let mut cumulative = 0.0;
                let mut chosen = k - 1;
                for (t, &weight) in weights.iter().enumerate() {
                    cumulative += weight;
                    if target < cumulative {
                        chosen = t;
                        break;
                    }
                }
                z[i] = chosen;
                n_dk[chosen] += 1;
            }
        }
        let n_doc: u64 = n_dk.iter().sum();
        let denom = n_doc as f64 + k as f64 * alpha;
        let theta: Vec<f64> = n_dk.iter().map(|&c| (c as f64 + alpha) / denom).collect();
        for &(id, count) in &bow.entries {
            let p_word: f64 =
                (0..k).map(|t| theta[t] * model.phi[t][id as usize]).sum();
            log_likelihood += count as f64 * p_word.ln();
            total += count as u64;
        }
    }
    Ok((-log_likelihood / total as f64).exp())
}
