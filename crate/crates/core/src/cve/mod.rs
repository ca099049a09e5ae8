//! CVE reference extraction, thread-document assembly and topic labeling.
//!
//! A thread becomes a document only if its title or one of its posts cites at
//! least one CVE identifier; the whole thread is then merged into a single
//! text sample. Extraction uses the case-insensitive pattern
//! `cve-[0-9]{4}-[0-9]{4,}` over raw text, before any normalization.

mod nvd;

pub use nvd::{
    enrich_nvd, severity_histogram, v2_severity, v31_severity, CvssScore, CvssVersion, CveRecord,
    NvdError, NvdSource, Severity, SeverityBucket,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Post, Thread};
use crate::textprep::{
    detect_language, normalize, tokenize, DetectedLanguage, FilterConfig, LanguageSet,
};

#[derive(Debug, Error)]
pub enum CveError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    BadLabelRow { path: String, line: usize, message: String },
    #[error("{path}:{line}: duplicate label for thread {thread_id}")]
    DuplicateLabel { path: String, line: usize, thread_id: String },
    #[error("codebook {path}: {message}")]
    BadCodebook { path: String, message: String },
}

/// A CVE identifier. The numeric part keeps its written form so leading
/// zeros survive; equality and ordering follow the canonical string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CveId {
    pub year: u16,
    pub number: String,
}

impl CveId {
    pub fn canonical(&self) -> String {
        format!("CVE-{:04}-{}", self.year, self.number)
    }

    /// Parse a canonical-form id (any case). Returns None unless the text is
    /// exactly one CVE reference.
    pub fn parse(text: &str) -> Option<CveId> {
        let ids = extract_cves(text);
        match ids.as_slice() {
            [only] if only.canonical().len() == text.len() => Some(only.clone()),
            _ => None,
        }
    }
}

impl fmt::Display for CveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

static CVE_PATTERN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)cve-([0-9]{4})-([0-9]{4,})").expect("valid pattern"));

/// Every non-overlapping CVE reference in order of first appearance,
/// canonicalized and de-duplicated.
pub fn extract_cves(text: &str) -> Vec<CveId> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for caps in CVE_PATTERN.captures_iter(text) {
        let id = CveId {
            year: caps[1].parse().expect("four digits fit u16"),
            number: caps[2].to_string(),
        };
        if seen.insert(id.clone()) {
            out.push(id);
        }
    }
    out
}

/// The four codebook discussion topics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TopicLabel {
    PoC,
    Weaponization,
    Exploitation,
    Other,
}

impl TopicLabel {
    pub const ALL: [TopicLabel; 4] =
        [TopicLabel::PoC, TopicLabel::Weaponization, TopicLabel::Exploitation, TopicLabel::Other];

    pub fn as_str(&self) -> &'static str {
        match self {
            TopicLabel::PoC => "PoC",
            TopicLabel::Weaponization => "Weaponization",
            TopicLabel::Exploitation => "Exploitation",
            TopicLabel::Other => "Other",
        }
    }
}

impl std::str::FromStr for TopicLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "PoC" => Ok(TopicLabel::PoC),
            "Weaponization" => Ok(TopicLabel::Weaponization),
            "Exploitation" => Ok(TopicLabel::Exploitation),
            "Other" => Ok(TopicLabel::Other),
            other => Err(format!(
                "unknown label {other:?}; allowed labels: PoC, Weaponization, Exploitation, Other"
            )),
        }
    }
}

impl fmt::Display for TopicLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One CVE-citing thread merged into a single text sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadDocument {
    pub thread_id: String,
    pub forum_id: Option<String>,
    pub board_id: String,
    /// Title plus post bodies joined by single newlines, in post order.
    pub merged_text: String,
    /// De-duplicated, in order of first appearance in the merged text.
    pub cves: Vec<CveId>,
    pub label: Option<TopicLabel>,
}

/// Merge a thread into a document if the title or any post cites a CVE.
pub fn merge_thread_posts(
    thread: &Thread,
    posts: &[&Post],
    forum_id: Option<&str>,
) -> Option<ThreadDocument> {
    let mut segments: Vec<&str> = Vec::with_capacity(posts.len() + 1);
    if let Some(title) = &thread.title {
        segments.push(title);
    }
    for post in posts {
        if let Some(body) = &post.body {
            segments.push(body);
        }
    }
    let merged_text = segments.join("\n");
    let cves = extract_cves(&merged_text);
    if cves.is_empty() {
        return None;
    }
    Some(ThreadDocument {
        thread_id: thread.thread_id.clone(),
        forum_id: forum_id.map(String::from),
        board_id: thread.board_id.clone(),
        merged_text,
        cves,
        label: None,
    })
}

/// Summary counters produced by [`filter_corpus`]. Unique CVEs are reported
/// both per kept thread (union over thread documents) and per post, since the
/// two tallies differ once threads are dropped for language.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub threads_total: usize,
    pub threads_citing: usize,
    pub threads_kept: usize,
    pub threads_dropped_language: usize,
    pub posts_scanned: usize,
    pub posts_citing: usize,
    pub unique_cves_kept_threads: usize,
    pub unique_cves_posts: usize,
}

/// Options for [`filter_corpus`]. When `languages` is present, only threads
/// whose detected language equals `keep_language` survive; without it no
/// language restriction applies.
pub struct FilterOptions<'a> {
    pub filter_cfg: &'a FilterConfig,
    pub languages: Option<&'a LanguageSet>,
    pub keep_language: &'a str,
}

/// Apply [`merge_thread_posts`] to every thread of the corpus, restricted to
/// threads in the configured keep language. Threads are visited in ascending
/// thread_id order, so output order is deterministic.
pub fn filter_corpus(corpus: &Corpus, opts: &FilterOptions<'_>) -> (Vec<ThreadDocument>, FilterReport) {
    let mut report = FilterReport::default();
    let mut docs = Vec::new();
    let mut cves_kept: BTreeSet<CveId> = BTreeSet::new();
    let mut cves_posts: BTreeSet<CveId> = BTreeSet::new();

    for post in corpus.posts() {
        report.posts_scanned += 1;
        if let Some(body) = &post.body {
            let found = extract_cves(body);
            if !found.is_empty() {
                report.posts_citing += 1;
                cves_posts.extend(found);
            }
        }
    }

    for thread in corpus.threads() {
        report.threads_total += 1;
        let posts = corpus.thread_posts(thread);
        let forum_id = corpus.board(&thread.board_id).map(|b| b.forum_id.clone());
        let Some(doc) = merge_thread_posts(thread, &posts, forum_id.as_deref()) else {
            continue;
        };
        report.threads_citing += 1;
        if let Some(langs) = opts.languages {
            let tokens = tokenize(&normalize(&doc.merged_text, opts.filter_cfg));
            let detected = detect_language(&tokens, langs);
            if detected != DetectedLanguage::Language(opts.keep_language.to_string()) {
                report.threads_dropped_language += 1;
                continue;
            }
        }
        report.threads_kept += 1;
        cves_kept.extend(doc.cves.iter().cloned());
        docs.push(doc);
    }

    report.unique_cves_kept_threads = cves_kept.len();
    report.unique_cves_posts = cves_posts.len();
    (docs, report)
}

/// Keyword rules for one label; a rule fires when any of its phrases occurs
/// as a consecutive token run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRule {
    pub label: TopicLabel,
    pub phrases: Vec<Vec<String>>,
}

/// The labeling codebook: keyword rule sets evaluated in precedence order
/// (most severe first), with Other as the keywordless fallback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codebook {
    /// In precedence order; Other is implicit and last.
    pub rules: Vec<LabelRule>,
}

impl Codebook {
    /// Parse the rules file: `[label]` section headers (poc, weaponization,
    /// exploitation) with one keyword or phrase per line, `#` comments.
    /// Precedence is fixed: Exploitation, then Weaponization, then PoC.
    pub fn load(path: &Path) -> Result<Self, CveError> {
        let text = fs::read_to_string(path).map_err(|source| CveError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text).map_err(|message| CveError::BadCodebook {
            path: path.display().to_string(),
            message,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut sections: BTreeMap<TopicLabel, Vec<Vec<String>>> = BTreeMap::new();
        let mut current: Option<TopicLabel> = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let label = match name.to_lowercase().as_str() {
                    "poc" => TopicLabel::PoC,
                    "weaponization" => TopicLabel::Weaponization,
                    "exploitation" => TopicLabel::Exploitation,
                    other => return Err(format!("unknown section [{other}]")),
                };
                if sections.contains_key(&label) {
                    return Err(format!("duplicate section [{name}]"));
                }
                sections.insert(label, Vec::new());
                current = Some(label);
                continue;
            }
            let Some(label) = current else {
                return Err(format!("keyword {line:?} before any [section]"));
            };
            let phrase: Vec<String> =
                line.to_lowercase().split_whitespace().map(String::from).collect();
            sections.get_mut(&label).expect("section opened").push(phrase);
        }
        for label in [TopicLabel::Exploitation, TopicLabel::Weaponization, TopicLabel::PoC] {
            if !sections.contains_key(&label) {
                return Err(format!("missing section [{}]", label.as_str().to_lowercase()));
            }
        }
        let rules = [TopicLabel::Exploitation, TopicLabel::Weaponization, TopicLabel::PoC]
            .into_iter()
            .map(|label| LabelRule { label, phrases: sections.remove(&label).expect("present") })
            .collect();
        Ok(Codebook { rules })
    }
}

fn phrase_matches(tokens: &[String], phrase: &[String]) -> bool {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return false;
    }
    tokens.windows(phrase.len()).any(|w| w == phrase)
}

/// Label a document by the first rule set that fires, in precedence order;
/// Other when nothing matches. Matching runs on normalized tokens of the
/// merged text (keyword lists hold surface forms, so no lemmatization here).
pub fn label_topic(doc: &ThreadDocument, codebook: &Codebook, cfg: &FilterConfig) -> TopicLabel {
    let tokens = tokenize(&normalize(&doc.merged_text, cfg));
    for rule in &codebook.rules {
        if rule.phrases.iter().any(|p| phrase_matches(&tokens, p)) {
            return rule.label;
        }
    }
    TopicLabel::Other
}

/// Load manual annotations from a `thread_id,label` CSV. An optional header
/// row is accepted. Duplicate thread ids and unknown label spellings are
/// rejected.
pub fn load_labels(path: &Path) -> Result<BTreeMap<String, TopicLabel>, CveError> {
    let text = fs::read_to_string(path).map_err(|source| CveError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if idx == 0 && line == "thread_id,label" {
            continue;
        }
        let (thread_id, label) = line.split_once(',').ok_or_else(|| CveError::BadLabelRow {
            path: path.display().to_string(),
            line: idx + 1,
            message: "expected thread_id,label".into(),
        })?;
        let label: TopicLabel =
            label.trim().parse().map_err(|message| CveError::BadLabelRow {
                path: path.display().to_string(),
                line: idx + 1,
                message,
            })?;
        if out.insert(thread_id.trim().to_string(), label).is_some() {
            return Err(CveError::DuplicateLabel {
                path: path.display().to_string(),
                line: idx + 1,
                thread_id: thread_id.trim().to_string(),
            });
        }
    }
    Ok(out)
}
