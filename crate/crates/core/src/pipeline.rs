//! Pipeline configuration and stage orchestration.
//!
//! A single JSON config drives every stage; relative paths resolve against
//! the config file's directory so a run is reproducible from any working
//! directory. Each stage writes one artifact into the output directory and
//! stamps it with a provenance block (config hash, seed, tool version);
//! the report stage refuses artifacts whose hash disagrees with the current
//! config.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    corpus_stats, load_corpus, Corpus, CorpusError, CorpusFormat, CorpusStats, DanglingRef,
    LoadOptions,
};
use crate::cve::{
    enrich_nvd, filter_corpus, label_topic, load_labels, Codebook, CveError, CveId, CveRecord,
    FilterOptions, FilterReport, NvdError, NvdSource, ThreadDocument, TopicLabel,
};
use crate::lda::{train_lda, LdaConfig, LdaError, LdaModel};
use crate::textprep::{
    Alphabet, FilterConfig, LanguageProfile, LanguageSet, LemmaTable, TextPrepError, TokenizedDoc,
};
use crate::vectorize::{
    build_dictionary, doc2bow, filter_extremes, tfidf_transform, BowDoc, Dictionary,
    VectorizeError,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_NVD_BASE_URL: &str = "https://services.nvd.nist.gov/rest/json/cves/2.0";

/// Error classes map one-to-one onto CLI exit codes.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("missing {artifact} artifact; run {command} first")]
    MissingArtifact { artifact: String, command: String },
    #[error("network error: {0}")]
    Network(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::MissingArtifact { .. } => 4,
            PipelineError::Network(_) => 5,
        }
    }
}

impl From<CorpusError> for PipelineError {
    fn from(e: CorpusError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<TextPrepError> for PipelineError {
    fn from(e: TextPrepError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<CveError> for PipelineError {
    fn from(e: CveError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<VectorizeError> for PipelineError {
    fn from(e: VectorizeError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<LdaError> for PipelineError {
    fn from(e: LdaError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<NvdError> for PipelineError {
    fn from(e: NvdError) -> Self {
        match e {
            NvdError::Network { .. } => PipelineError::Network(e.to_string()),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

// ---- raw config schema ----

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
struct RawCorpus {
    path: String,
    format: Option<String>,
    max_dangling: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawProfile {
    name: String,
    wordlist: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawLanguages {
    profiles: Vec<RawProfile>,
    keep: Option<String>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
struct RawTextprep {
    stopwords: Option<BTreeMap<String, String>>,
    emoticons: Option<String>,
    lemmas: Option<String>,
    alphabets: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawNvd {
    mode: String,
    source: Option<String>,
    cache: Option<String>,
    base_url: Option<String>,
    min_interval_ms: Option<u64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
struct RawDictionary {
    no_below: Option<u32>,
    no_above: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
struct RawTopics {
    k: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    iterations: Option<u32>,
    burn_in: Option<u32>,
    seed: Option<u64>,
    average: Option<bool>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
struct RawReport {
    top_n: Option<usize>,
    lambdas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawConfig {
    corpus: RawCorpus,
    languages: Option<RawLanguages>,
    textprep: Option<RawTextprep>,
    codebook: Option<String>,
    labels: Option<String>,
    nvd: Option<RawNvd>,
    dictionary: Option<RawDictionary>,
    topics: Option<RawTopics>,
    report: Option<RawReport>,
    out_dir: Option<String>,
}

// ---- unknown-key validation with nearest-key suggestions ----

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut previous: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut current = vec![i + 1];
        for (j, &cb) in b.iter().enumerate() {
            let substitution = previous[j] + usize::from(ca != cb);
            current.push(substitution.min(previous[j + 1] + 1).min(current[j] + 1));
        }
        previous = current;
    }
    previous[b.len()]
}

fn unknown_key_message(key: &str, allowed: &[&str], at: &str) -> String {
    let nearest = allowed
        .iter()
        .map(|cand| (levenshtein(key, cand), *cand))
        .min()
        .filter(|&(distance, _)| distance <= 3)
        .map(|(_, cand)| cand);
    let location = if at.is_empty() { String::new() } else { format!(" in {at}") };
    match nearest {
        Some(cand) => format!("unknown key {key:?}{location} (did you mean {cand:?}?)"),
        None => format!(
            "unknown key {key:?}{location}; allowed keys: {}",
            allowed.join(", ")
        ),
    }
}

fn check_object_keys(value: &Value, allowed: &[&str], at: &str) -> Result<(), PipelineError> {
    let Some(map) = value.as_object() else {
        return Err(PipelineError::Config(format!("{at} must be an object")));
    };
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(PipelineError::Config(unknown_key_message(key, allowed, at)));
        }
    }
    Ok(())
}

fn check_config_keys(root: &Value) -> Result<(), PipelineError> {
    check_object_keys(
        root,
        &[
            "corpus", "languages", "textprep", "codebook", "labels", "nvd", "dictionary",
            "topics", "report", "out_dir",
        ],
        "",
    )?;
    let object = root.as_object().expect("checked above");
    if let Some(corpus) = object.get("corpus") {
        check_object_keys(corpus, &["path", "format", "max_dangling"], "corpus")?;
    }
    if let Some(languages) = object.get("languages") {
        check_object_keys(languages, &["profiles", "keep"], "languages")?;
        if let Some(profiles) = languages.get("profiles").and_then(Value::as_array) {
            for (i, profile) in profiles.iter().enumerate() {
                check_object_keys(
                    profile,
                    &["name", "wordlist"],
                    &format!("languages.profiles[{i}]"),
                )?;
            }
        }
    }
    if let Some(textprep) = object.get("textprep") {
        check_object_keys(
            textprep,
            &["stopwords", "emoticons", "lemmas", "alphabets"],
            "textprep",
        )?;
    }
    if let Some(nvd) = object.get("nvd") {
        check_object_keys(
            nvd,
            &["mode", "source", "cache", "base_url", "min_interval_ms"],
            "nvd",
        )?;
    }
    if let Some(dictionary) = object.get("dictionary") {
        check_object_keys(dictionary, &["no_below", "no_above"], "dictionary")?;
    }
    if let Some(topics) = object.get("topics") {
        check_object_keys(
            topics,
            &["k", "alpha", "beta", "iterations", "burn_in", "seed", "average"],
            "topics",
        )?;
    }
    if let Some(report) = object.get("report") {
        check_object_keys(report, &["top_n", "lambdas"], "report")?;
    }
    Ok(())
}

// ---- validated config ----

/// How the enrichment stage reaches NVD data.
#[derive(Debug, Clone)]
pub enum NvdMode {
    /// No source configured: every CVE comes back without CVSS metrics.
    Offline,
    Fixture { source: PathBuf },
    Live { base_url: String, cache: PathBuf, min_interval: Duration },
}

/// Command-line overrides applied before hashing and validation.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub nvd_mode: Option<String>,
    pub corpus_format: Option<CorpusFormat>,
}

#[derive(Debug, Clone)]
pub struct LanguagesConfig {
    pub profiles: Vec<(String, PathBuf)>,
    pub keep: String,
}

/// The fully validated, path-resolved pipeline configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub corpus_path: PathBuf,
    pub corpus_format: CorpusFormat,
    pub max_dangling: usize,
    pub languages: Option<LanguagesConfig>,
    pub stopwords: BTreeMap<String, PathBuf>,
    pub emoticons: Option<PathBuf>,
    pub lemmas: Option<PathBuf>,
    pub alphabets: Vec<String>,
    pub codebook: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub nvd: NvdMode,
    pub no_below: u32,
    pub no_above: f64,
    pub lda: LdaConfig,
    pub top_n: usize,
    pub lambdas: Vec<f64>,
    pub out_dir: PathBuf,
    /// SHA-256 over the defaulted config with paths as written in the file,
    /// so the hash is stable across checkouts.
    pub config_hash: String,
}

impl PipelineConfig {
    pub fn provenance(&self) -> Provenance {
        Provenance {
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.config_hash.clone(),
            seed: self.lda.seed,
        }
    }

    /// Resolved absolute paths, for echoing after validation.
    pub fn resolved_paths(&self) -> Vec<(String, PathBuf)> {
        let mut out = vec![("corpus".to_string(), self.corpus_path.clone())];
        if let Some(languages) = &self.languages {
            for (name, path) in &languages.profiles {
                out.push((format!("wordlist.{name}"), path.clone()));
            }
        }
        for (lang, path) in &self.stopwords {
            out.push((format!("stopwords.{lang}"), path.clone()));
        }
        if let Some(p) = &self.emoticons {
            out.push(("emoticons".into(), p.clone()));
        }
        if let Some(p) = &self.lemmas {
            out.push(("lemmas".into(), p.clone()));
        }
        if let Some(p) = &self.codebook {
            out.push(("codebook".into(), p.clone()));
        }
        if let Some(p) = &self.labels {
            out.push(("labels".into(), p.clone()));
        }
        match &self.nvd {
            NvdMode::Fixture { source } => out.push(("nvd.source".into(), source.clone())),
            NvdMode::Live { cache, .. } => out.push(("nvd.cache".into(), cache.clone())),
            NvdMode::Offline => {}
        }
        out.push(("out_dir".into(), self.out_dir.clone()));
        out
    }
}

/// Provenance block stamped into every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let path = Path::new(raw);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn require_exists(path: &Path, field: &str) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::Config(format!("{field}: path {} does not exist", path.display())))
    }
}

/// Parse, key-check, default, override, hash and path-resolve a config file.
pub fn validate_config(
    path: &Path,
    overrides: &Overrides,
) -> Result<PipelineConfig, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    check_config_keys(&value)?;
    let mut raw: RawConfig = serde_json::from_value(value)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;

    // Apply defaults in the raw (as-written-path) form, then overrides, then
    // hash; the hash therefore covers exactly what the run will use.
    raw.corpus.format.get_or_insert_with(|| "jsonl".to_string());
    raw.corpus.max_dangling.get_or_insert(100);
    if let Some(languages) = raw.languages.as_mut() {
        languages.keep.get_or_insert_with(|| "english".to_string());
    }
    let textprep = raw.textprep.get_or_insert_with(RawTextprep::default);
    textprep.stopwords.get_or_insert_with(BTreeMap::new);
    textprep.alphabets.get_or_insert_with(|| vec!["latin".to_string()]);
    let dictionary = raw.dictionary.get_or_insert_with(RawDictionary::default);
    dictionary.no_below.get_or_insert(1);
    dictionary.no_above.get_or_insert(1.0);
    let topics = raw.topics.get_or_insert_with(RawTopics::default);
    topics.k.get_or_insert(4);
    let k = topics.k.expect("defaulted");
    if k < 1 {
        return Err(PipelineError::Config("topics.k: must be at least 1".into()));
    }
    topics.alpha.get_or_insert(50.0 / k as f64);
    topics.beta.get_or_insert(0.01);
    topics.iterations.get_or_insert(1000);
    topics.burn_in.get_or_insert(100);
    topics.seed.get_or_insert(42);
    topics.average.get_or_insert(false);
    let report = raw.report.get_or_insert_with(RawReport::default);
    report.top_n.get_or_insert(30);
    report.lambdas.get_or_insert_with(|| vec![0.0, 0.6, 1.0]);
    raw.out_dir.get_or_insert_with(|| "out".to_string());
    if let Some(nvd) = raw.nvd.as_mut() {
        nvd.base_url.get_or_insert_with(|| DEFAULT_NVD_BASE_URL.to_string());
        nvd.min_interval_ms.get_or_insert(6000);
    }

    if let Some(seed) = overrides.seed {
        raw.topics.as_mut().expect("defaulted").seed = Some(seed);
    }
    if let Some(format) = overrides.corpus_format {
        raw.corpus.format = Some(
            match format {
                CorpusFormat::Jsonl => "jsonl",
                CorpusFormat::Csv => "csv",
            }
            .to_string(),
        );
    }
    if let Some(mode) = &overrides.nvd_mode {
        match raw.nvd.as_mut() {
            Some(nvd) => nvd.mode = mode.clone(),
            None => {
                return Err(PipelineError::Config(
                    "--nvd-mode given but the config has no nvd section".into(),
                ))
            }
        }
    }
    if let Some(out) = &overrides.out_dir {
        raw.out_dir = Some(out.display().to_string());
    }

    // The output directory does not influence any computed value, so it is
    // excluded from the hash; moving the artifacts must not invalidate them.
    let mut canonical = serde_json::to_value(&raw).expect("config serializes");
    canonical.as_object_mut().expect("config is an object").remove("out_dir");
    let config_hash = sha256_hex(canonical.to_string().as_bytes());

    // Resolve and range-check.
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let corpus_format: CorpusFormat = raw
        .corpus
        .format
        .as_deref()
        .expect("defaulted")
        .parse()
        .map_err(|e| PipelineError::Config(format!("corpus.format: {e}")))?;
    let corpus_path = resolve(base, &raw.corpus.path);
    require_exists(&corpus_path, "corpus.path")?;

    let languages = match &raw.languages {
        None => None,
        Some(raw_languages) => {
            if raw_languages.profiles.is_empty() {
                return Err(PipelineError::Config(
                    "languages.profiles: must not be empty".into(),
                ));
            }
            let mut profiles = Vec::new();
            for profile in &raw_languages.profiles {
                let wordlist = resolve(base, &profile.wordlist);
                require_exists(&wordlist, &format!("languages.profiles.{}", profile.name))?;
                profiles.push((profile.name.clone(), wordlist));
            }
            let keep = raw_languages.keep.clone().expect("defaulted");
            if !profiles.iter().any(|(name, _)| *name == keep) {
                return Err(PipelineError::Config(format!(
                    "languages.keep: {keep:?} is not one of the configured profiles"
                )));
            }
            Some(LanguagesConfig { profiles, keep })
        }
    };

    let textprep = raw.textprep.as_ref().expect("defaulted");
    let mut stopwords = BTreeMap::new();
    for (lang, p) in textprep.stopwords.as_ref().expect("defaulted") {
        let resolved = resolve(base, p);
        require_exists(&resolved, &format!("textprep.stopwords.{lang}"))?;
        stopwords.insert(lang.clone(), resolved);
    }
    let emoticons = match &textprep.emoticons {
        Some(p) => {
            let resolved = resolve(base, p);
            require_exists(&resolved, "textprep.emoticons")?;
            Some(resolved)
        }
        None => None,
    };
    let lemmas = match &textprep.lemmas {
        Some(p) => {
            let resolved = resolve(base, p);
            require_exists(&resolved, "textprep.lemmas")?;
            Some(resolved)
        }
        None => None,
    };
    let alphabets = textprep.alphabets.clone().expect("defaulted");
    for name in &alphabets {
        if Alphabet::by_name(name).is_none() {
            return Err(PipelineError::Config(format!(
                "textprep.alphabets: unknown alphabet {name:?} (known: latin, cyrillic)"
            )));
        }
    }

    let codebook = match &raw.codebook {
        Some(p) => {
            let resolved = resolve(base, p);
            require_exists(&resolved, "codebook")?;
            Some(resolved)
        }
        None => None,
    };
    let labels = match &raw.labels {
        Some(p) => {
            let resolved = resolve(base, p);
            require_exists(&resolved, "labels")?;
            Some(resolved)
        }
        None => None,
    };

    let nvd = match &raw.nvd {
        None => NvdMode::Offline,
        Some(raw_nvd) => match raw_nvd.mode.as_str() {
            "fixture" => {
                let source = raw_nvd.source.as_ref().ok_or_else(|| {
                    PipelineError::Config("nvd.source: required in fixture mode".into())
                })?;
                let source = resolve(base, source);
                require_exists(&source, "nvd.source")?;
                NvdMode::Fixture { source }
            }
            "live" => {
                let cache = raw_nvd.cache.as_ref().ok_or_else(|| {
                    PipelineError::Config("nvd.cache: required in live mode".into())
                })?;
                NvdMode::Live {
                    base_url: raw_nvd.base_url.clone().expect("defaulted"),
                    cache: resolve(base, cache),
                    min_interval: Duration::from_millis(
                        raw_nvd.min_interval_ms.expect("defaulted"),
                    ),
                }
            }
            other => {
                return Err(PipelineError::Config(format!(
                    "nvd.mode: unknown mode {other:?} (expected fixture or live)"
                )))
            }
        },
    };

    let dictionary = raw.dictionary.as_ref().expect("defaulted");
    let no_below = dictionary.no_below.expect("defaulted");
    let no_above = dictionary.no_above.expect("defaulted");
    if !(0.0..=1.0).contains(&no_above) {
        return Err(PipelineError::Config(format!(
            "dictionary.no_above: must lie in [0,1], got {no_above}"
        )));
    }

    let topics = raw.topics.as_ref().expect("defaulted");
    let lda = LdaConfig {
        k,
        alpha: topics.alpha.expect("defaulted"),
        beta: topics.beta.expect("defaulted"),
        iterations: topics.iterations.expect("defaulted"),
        burn_in: topics.burn_in.expect("defaulted"),
        seed: topics.seed.expect("defaulted"),
        average_after_burn_in: topics.average.expect("defaulted"),
    };
    lda.validate().map_err(|e| PipelineError::Config(format!("topics: {e}")))?;

    let report = raw.report.as_ref().expect("defaulted");
    let top_n = report.top_n.expect("defaulted");
    if top_n == 0 {
        return Err(PipelineError::Config("report.top_n: must be at least 1".into()));
    }
    let lambdas = report.lambdas.clone().expect("defaulted");
    if lambdas.is_empty() {
        return Err(PipelineError::Config("report.lambdas: must not be empty".into()));
    }
    for (i, &lambda) in lambdas.iter().enumerate() {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(PipelineError::Config(format!(
                "report.lambdas[{i}]: must lie in [0,1], got {lambda}"
            )));
        }
    }

    let out_dir = resolve(base, raw.out_dir.as_ref().expect("defaulted"));

    Ok(PipelineConfig {
        corpus_path,
        corpus_format,
        max_dangling: raw.corpus.max_dangling.expect("defaulted"),
        languages,
        stopwords,
        emoticons,
        lemmas,
        alphabets,
        codebook,
        labels,
        nvd,
        no_below,
        no_above,
        lda,
        top_n,
        lambdas,
        out_dir,
        config_hash,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

// ---- loaded resources ----

/// Config-referenced resources loaded into memory once per invocation.
pub struct Resources {
    pub filter_cfg: FilterConfig,
    pub lemmas: LemmaTable,
    pub languages: Option<LanguageSet>,
    pub keep_language: String,
    pub codebook: Option<Codebook>,
    pub labels: BTreeMap<String, TopicLabel>,
}

impl Resources {
    pub fn load(cfg: &PipelineConfig) -> Result<Resources, PipelineError> {
        let mut filter_cfg = FilterConfig {
            alphabets: cfg
                .alphabets
                .iter()
                .map(|name| Alphabet::by_name(name).expect("validated"))
                .collect(),
            ..FilterConfig::default()
        };
        for (lang, path) in &cfg.stopwords {
            let words = read_word_file(path)?;
            filter_cfg.stopwords.insert(lang.clone(), words);
        }
        if let Some(path) = &cfg.emoticons {
            filter_cfg.emoticons =
                read_word_file(path)?.into_iter().map(|w| w.to_lowercase()).collect();
            // The emoticon set carries a required minimum.
            for required in [":)", ":c", ":-)"] {
                filter_cfg.emoticons.insert(required.to_string());
            }
        }
        let lemmas = match &cfg.lemmas {
            Some(path) => LemmaTable::load(path)?,
            None => LemmaTable::default(),
        };
        let (languages, keep_language) = match &cfg.languages {
            Some(lang_cfg) => {
                let mut profiles = Vec::new();
                for (name, path) in &lang_cfg.profiles {
                    profiles.push(LanguageProfile::load(name, path)?);
                }
                (Some(LanguageSet::new(profiles)?), lang_cfg.keep.clone())
            }
            None => (None, "english".to_string()),
        };
        let codebook = match &cfg.codebook {
            Some(path) => Some(Codebook::load(path)?),
            None => None,
        };
        let labels = match &cfg.labels {
            Some(path) => load_labels(path)?,
            None => BTreeMap::new(),
        };
        Ok(Resources { filter_cfg, lemmas, languages, keep_language, codebook, labels })
    }
}

fn read_word_file(path: &Path) -> Result<std::collections::BTreeSet<String>, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect())
}

// ---- artifacts ----

pub const ARTIFACT_INGEST: &str = "corpus.ingest.json";
pub const ARTIFACT_STATS: &str = "corpus.stats.json";
pub const ARTIFACT_THREADS: &str = "threads.jsonl";
pub const ARTIFACT_CVES: &str = "cves.enriched.json";
pub const ARTIFACT_MODEL: &str = "model.lda";
pub const ARTIFACT_DICTIONARY: &str = "dictionary.tsv";
pub const ARTIFACT_BOW: &str = "corpus.bow";
pub const ARTIFACT_REPORT_JSON: &str = "report.json";
pub const ARTIFACT_REPORT_HTML: &str = "report.html";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub forums: usize,
    pub boards: usize,
    pub threads: usize,
    pub posts: usize,
    pub dangling: Vec<DanglingRef>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IngestArtifact {
    provenance: Provenance,
    summary: IngestSummary,
}

#[derive(Debug, Serialize, Deserialize)]
struct StatsArtifact {
    provenance: Provenance,
    stats: CorpusStats,
}

#[derive(Debug, Serialize, Deserialize)]
struct ThreadsHeader {
    provenance: Provenance,
    report: FilterReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct CvesArtifact {
    provenance: Provenance,
    records: Vec<CveRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelArtifact {
    provenance: Provenance,
    dictionary: Dictionary,
    model: LdaModel,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| PipelineError::Data(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| PipelineError::Data(format!("cannot write {}: {e}", path.display())))
}

fn read_artifact<T: for<'de> Deserialize<'de>>(
    out_dir: &Path,
    name: &str,
    producing_command: &str,
) -> Result<T, PipelineError> {
    let path = out_dir.join(name);
    let text = match fs::read_to_string(&path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(PipelineError::MissingArtifact {
                artifact: artifact_nickname(name).to_string(),
                command: producing_command.to_string(),
            })
        }
        Err(e) => {
            return Err(PipelineError::Data(format!("cannot read {}: {e}", path.display())))
        }
    };
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Data(format!("malformed artifact {}: {e}", path.display())))
}

fn artifact_nickname(name: &str) -> &'static str {
    match name {
        ARTIFACT_INGEST => "corpus-ingest",
        ARTIFACT_STATS => "corpus-stats",
        ARTIFACT_THREADS => "thread-documents",
        ARTIFACT_CVES => "enriched-cves",
        ARTIFACT_MODEL => "topic-model",
        _ => "unknown",
    }
}

fn ensure_out_dir(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| PipelineError::Data(format!("cannot create {}: {e}", cfg.out_dir.display())))
}

fn check_provenance(
    provenance: &Provenance,
    cfg: &PipelineConfig,
    artifact: &str,
) -> Result<(), PipelineError> {
    if provenance.config_hash != cfg.config_hash {
        return Err(PipelineError::Config(format!(
            "artifact {artifact} was produced with config hash {} but the current config hashes \
             to {}; re-run the pipeline",
            provenance.config_hash, cfg.config_hash
        )));
    }
    Ok(())
}

// ---- stages ----

pub fn load_pipeline_corpus(cfg: &PipelineConfig) -> Result<Corpus, PipelineError> {
    let opts = LoadOptions { format: cfg.corpus_format, max_dangling: cfg.max_dangling };
    Ok(load_corpus(&cfg.corpus_path, &opts)?)
}

/// Load, link and validate the corpus; write the ingest summary artifact.
pub fn stage_ingest(cfg: &PipelineConfig) -> Result<IngestSummary, PipelineError> {
    let corpus = load_pipeline_corpus(cfg)?;
    let summary = IngestSummary {
        forums: corpus.num_forums(),
        boards: corpus.num_boards(),
        threads: corpus.num_threads(),
        posts: corpus.num_posts(),
        dangling: corpus.warnings().to_vec(),
    };
    ensure_out_dir(cfg)?;
    write_json(
        &cfg.out_dir.join(ARTIFACT_INGEST),
        &IngestArtifact { provenance: cfg.provenance(), summary: summary.clone() },
    )?;
    Ok(summary)
}

/// Compute the statistics table and write corpus.stats.json.
pub fn stage_stats(cfg: &PipelineConfig) -> Result<CorpusStats, PipelineError> {
    let corpus = load_pipeline_corpus(cfg)?;
    let stats = corpus_stats(&corpus);
    ensure_out_dir(cfg)?;
    write_json(
        &cfg.out_dir.join(ARTIFACT_STATS),
        &StatsArtifact { provenance: cfg.provenance(), stats: stats.clone() },
    )?;
    Ok(stats)
}

/// Filter CVE-citing threads, label them, and write threads.jsonl (header
/// line with provenance and filter report, then one document per line).
pub fn stage_filter(
    cfg: &PipelineConfig,
    resources: &Resources,
) -> Result<(Vec<ThreadDocument>, FilterReport), PipelineError> {
    let corpus = load_pipeline_corpus(cfg)?;
    let opts = FilterOptions {
        filter_cfg: &resources.filter_cfg,
        languages: resources.languages.as_ref(),
        keep_language: &resources.keep_language,
    };
    let (mut docs, report) = filter_corpus(&corpus, &opts);
    for doc in &mut docs {
        let rule_label = resources
            .codebook
            .as_ref()
            .map(|cb| label_topic(doc, cb, &resources.filter_cfg));
        // Manual annotations override the keyword-rule assist.
        doc.label = resources.labels.get(&doc.thread_id).copied().or(rule_label);
    }

    ensure_out_dir(cfg)?;
    let mut text = serde_json::to_string(&ThreadsHeader {
        provenance: cfg.provenance(),
        report: report.clone(),
    })
    .expect("header serializes");
    text.push('\n');
    for doc in &docs {
        text.push_str(&serde_json::to_string(doc).expect("document serializes"));
        text.push('\n');
    }
    let path = cfg.out_dir.join(ARTIFACT_THREADS);
    fs::write(&path, text)
        .map_err(|e| PipelineError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok((docs, report))
}

fn read_threads_artifact(
    cfg: &PipelineConfig,
) -> Result<(Vec<ThreadDocument>, FilterReport, Provenance), PipelineError> {
    let path = cfg.out_dir.join(ARTIFACT_THREADS);
    let text = match fs::read_to_string(&path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(PipelineError::MissingArtifact {
                artifact: "thread-documents".into(),
                command: "filter".into(),
            })
        }
        Err(e) => {
            return Err(PipelineError::Data(format!("cannot read {}: {e}", path.display())))
        }
    };
    let mut lines = text.lines();
    let header: ThreadsHeader = lines
        .next()
        .ok_or_else(|| PipelineError::Data(format!("{}: empty artifact", path.display())))
        .and_then(|line| {
            serde_json::from_str(line)
                .map_err(|e| PipelineError::Data(format!("{}: bad header: {e}", path.display())))
        })?;
    let mut docs = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: ThreadDocument = serde_json::from_str(line).map_err(|e| {
            PipelineError::Data(format!("{}:{}: bad document: {e}", path.display(), i + 2))
        })?;
        docs.push(doc);
    }
    Ok((docs, header.report, header.provenance))
}

/// Enrich the CVEs cited by the filtered threads and write cves.enriched.json.
pub fn stage_enrich(cfg: &PipelineConfig) -> Result<Vec<CveRecord>, PipelineError> {
    let (docs, _, provenance) = read_threads_artifact(cfg)?;
    check_provenance(&provenance, cfg, ARTIFACT_THREADS)?;
    let mut unique: Vec<CveId> = Vec::new();
    for doc in &docs {
        for cve in &doc.cves {
            if !unique.contains(cve) {
                unique.push(cve.clone());
            }
        }
    }
    let records = match &cfg.nvd {
        NvdMode::Offline => unique
            .iter()
            .map(|cve| CveRecord {
                cve: cve.clone(),
                cvss_v2: None,
                cvss_v31: None,
                description: None,
            })
            .collect(),
        NvdMode::Fixture { source } => enrich_nvd(&unique, &NvdSource::Fixture(source.clone()))?,
        NvdMode::Live { base_url, cache, min_interval } => enrich_nvd(
            &unique,
            &NvdSource::Live {
                base_url: base_url.clone(),
                cache_dir: cache.clone(),
                min_interval: *min_interval,
            },
        )?,
    };
    ensure_out_dir(cfg)?;
    write_json(
        &cfg.out_dir.join(ARTIFACT_CVES),
        &CvesArtifact { provenance: cfg.provenance(), records: records.clone() },
    )?;
    Ok(records)
}

/// Everything train produces besides the model artifact itself.
pub struct TrainOutput {
    pub dictionary: Dictionary,
    pub model: LdaModel,
    pub bows: Vec<BowDoc>,
}

fn preprocess_thread_docs(
    docs: &[ThreadDocument],
    resources: &Resources,
) -> Vec<TokenizedDoc> {
    docs.iter()
        .map(|doc| {
            crate::textprep::preprocess_document(
                &doc.thread_id,
                &doc.merged_text,
                &resources.filter_cfg,
                &resources.lemmas,
                &resources.keep_language,
            )
        })
        .collect()
}

/// Preprocess the thread documents, build and prune the dictionary, train
/// the model, and write model.lda.
pub fn stage_train(
    cfg: &PipelineConfig,
    resources: &Resources,
) -> Result<TrainOutput, PipelineError> {
    let (docs, _, provenance) = read_threads_artifact(cfg)?;
    check_provenance(&provenance, cfg, ARTIFACT_THREADS)?;
    if docs.is_empty() {
        return Err(PipelineError::Data(
            "no thread documents survived filtering; nothing to train on".into(),
        ));
    }
    let tokenized = preprocess_thread_docs(&docs, resources);
    let dictionary = build_dictionary(&tokenized)?;
    let dictionary = filter_extremes(&dictionary, cfg.no_below, cfg.no_above)?;
    let bows: Vec<BowDoc> = tokenized.iter().map(|d| doc2bow(d, &dictionary)).collect();
    let model = train_lda(&bows, &dictionary, &cfg.lda)?;
    ensure_out_dir(cfg)?;
    write_json(
        &cfg.out_dir.join(ARTIFACT_MODEL),
        &ModelArtifact {
            provenance: cfg.provenance(),
            dictionary: dictionary.clone(),
            model: model.clone(),
        },
    )?;
    let provenance_line = format!(
        "#provenance\t{}\n",
        serde_json::to_string(&cfg.provenance()).expect("provenance serializes")
    );
    let dict_path = cfg.out_dir.join(ARTIFACT_DICTIONARY);
    fs::write(&dict_path, format!("{provenance_line}{}", dictionary.to_tsv()))
        .map_err(|e| PipelineError::Data(format!("cannot write {}: {e}", dict_path.display())))?;
    let bow_path = cfg.out_dir.join(ARTIFACT_BOW);
    fs::write(
        &bow_path,
        format!("{provenance_line}{}", crate::vectorize::write_bow_corpus(&bows)),
    )
    .map_err(|e| PipelineError::Data(format!("cannot write {}: {e}", bow_path.display())))?;
    Ok(TrainOutput { dictionary, model, bows })
}

/// Inputs assembled for the report stage after provenance checks.
pub struct ReportInputs {
    pub summary: IngestSummary,
    pub stats: CorpusStats,
    pub docs: Vec<ThreadDocument>,
    pub filter_report: FilterReport,
    pub records: Vec<CveRecord>,
    pub dictionary: Dictionary,
    pub model: LdaModel,
    pub bows: Vec<BowDoc>,
    pub tfidf_mean: Vec<(u32, f64)>,
    pub labels: BTreeMap<String, TopicLabel>,
}

/// Read every upstream artifact, verify provenance, and recompute the
/// derived pieces the report needs.
pub fn collect_report_inputs(
    cfg: &PipelineConfig,
    resources: &Resources,
) -> Result<ReportInputs, PipelineError> {
    let ingest: IngestArtifact = read_artifact(&cfg.out_dir, ARTIFACT_INGEST, "ingest")?;
    check_provenance(&ingest.provenance, cfg, ARTIFACT_INGEST)?;
    let stats: StatsArtifact = read_artifact(&cfg.out_dir, ARTIFACT_STATS, "stats")?;
    check_provenance(&stats.provenance, cfg, ARTIFACT_STATS)?;
    let (docs, filter_report, threads_provenance) = read_threads_artifact(cfg)?;
    check_provenance(&threads_provenance, cfg, ARTIFACT_THREADS)?;
    let cves: CvesArtifact = read_artifact(&cfg.out_dir, ARTIFACT_CVES, "enrich")?;
    check_provenance(&cves.provenance, cfg, ARTIFACT_CVES)?;
    let model_artifact: ModelArtifact = read_artifact(&cfg.out_dir, ARTIFACT_MODEL, "train")?;
    check_provenance(&model_artifact.provenance, cfg, ARTIFACT_MODEL)?;
    if model_artifact.model.dictionary_hash != model_artifact.dictionary.hash() {
        return Err(PipelineError::Data(
            "model.lda: embedded dictionary does not match the model's dictionary hash".into(),
        ));
    }

    // Rebuild bows deterministically for perplexity and TF-IDF export.
    let tokenized = preprocess_thread_docs(&docs, resources);
    let bows: Vec<BowDoc> =
        tokenized.iter().map(|d| doc2bow(d, &model_artifact.dictionary)).collect();
    let tfidf = tfidf_transform(&bows, &model_artifact.dictionary);
    let mut mean: BTreeMap<u32, f64> = BTreeMap::new();
    for doc in &tfidf {
        for &(id, weight) in &doc.entries {
            *mean.entry(id).or_insert(0.0) += weight;
        }
    }
    let doc_count = tfidf.len().max(1) as f64;
    let mut tfidf_mean: Vec<(u32, f64)> =
        mean.into_iter().map(|(id, sum)| (id, sum / doc_count)).collect();
    tfidf_mean.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
    tfidf_mean.truncate(cfg.top_n);

    Ok(ReportInputs {
        summary: ingest.summary,
        stats: stats.stats,
        docs,
        filter_report,
        records: cves.records,
        dictionary: model_artifact.dictionary,
        model: model_artifact.model,
        bows,
        tfidf_mean,
        labels: resources.labels.clone(),
    })
}
