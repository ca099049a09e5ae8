//! Mining vulnerability-exploitation discussions from forum dumps.
//!
//! The crate covers the full pipeline: ingesting a hierarchical forum corpus
//! (forums → boards → threads → posts), normalizing and tokenizing post text,
//! wordlist-based language identification, extracting CVE references and
//! merging citing threads into documents, labeling those documents against a
//! keyword codebook, enriching CVEs with CVSS scores from NVD data, building
//! bag-of-words / TF-IDF representations, training an LDA topic model with a
//! collapsed Gibbs sampler, and computing the topic analytics (marginal
//! distribution, saliency, relevance, topic distances and a 2-D projection)
//! that feed the JSON/HTML reports.

pub mod analytics;
pub mod corpus;
pub mod cve;
pub mod lda;
pub mod pipeline;
pub mod report;
pub mod textprep;
pub mod vectorize;
