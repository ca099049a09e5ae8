//! Report assembly: a schema-versioned JSON bundle plus a static,
//! self-contained HTML rendering with inline SVG figures.
//!
//! Everything emitted here must be byte-reproducible for a given config and
//! fixtures: floats are rounded to 12 significant digits before
//! serialization, map keys are ordered, and no timestamps are recorded.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analytics::{
    align_topics_to_labels, marginal_topic_distribution, project_topics, relevance,
    token_shares_percent, top_salient_terms, topic_distance_matrix,
};
use crate::corpus::CorpusStats;
use crate::cve::{severity_histogram, CvssVersion, SeverityBucket};
use crate::lda::perplexity;
use crate::pipeline::{
    collect_report_inputs, IngestSummary, PipelineConfig, PipelineError, Provenance, ReportInputs,
    Resources, ARTIFACT_REPORT_HTML, ARTIFACT_REPORT_JSON, REPORT_SCHEMA_VERSION,
};

/// Round to 12 significant digits so reports do not wobble in the last ulp
/// across platforms' libm implementations.
fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    pub token: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadEntry {
    pub thread_id: String,
    pub forum_id: Option<String>,
    pub cves: Vec<String>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSection {
    pub threads_total: usize,
    pub threads_citing: usize,
    pub threads_kept: usize,
    pub threads_dropped_language: usize,
    pub posts_scanned: usize,
    pub posts_citing: usize,
    pub unique_cves_kept_threads: usize,
    pub unique_cves_posts: usize,
    pub label_distribution: BTreeMap<String, usize>,
    pub threads: Vec<ThreadEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeveritySection {
    pub total_records: usize,
    pub v2: BTreeMap<String, usize>,
    pub v31: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRelevance {
    pub lambda: f64,
    pub per_topic: Vec<Vec<TermEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionEntry {
    pub topic: usize,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSection {
    pub mapping: BTreeMap<String, String>,
    pub agreement: u64,
    pub labeled_docs: u64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicsSection {
    pub k: usize,
    pub vocabulary: usize,
    pub marginal: Vec<f64>,
    pub token_shares_pct: Vec<f64>,
    pub training_perplexity: Option<f64>,
    pub salient_terms: Vec<TermEntry>,
    pub relevance: Vec<LambdaRelevance>,
    pub tfidf_top_terms: Vec<TermEntry>,
    pub distance_matrix: Vec<Vec<f64>>,
    pub projection: Vec<ProjectionEntry>,
    pub projection_warning: Option<String>,
    pub alignment: Option<AlignmentSection>,
    pub model_warnings: Vec<String>,
}

/// The full report: everything behind the JSON and HTML outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub ingest: IngestSummary,
    pub stats: CorpusStats,
    pub filter: FilterSection,
    pub severity: SeveritySection,
    pub topics: TopicsSection,
}

fn histogram_strings(
    histogram: &BTreeMap<SeverityBucket, usize>,
) -> BTreeMap<String, usize> {
    histogram.iter().map(|(bucket, &count)| (bucket.as_str().to_string(), count)).collect()
}

fn term_entries(ranked: &[(u32, f64)], inputs: &ReportInputs) -> Vec<TermEntry> {
    ranked
        .iter()
        .map(|&(id, score)| TermEntry {
            token: inputs.dictionary.token(id).unwrap_or("?").to_string(),
            score: round_sig(score),
        })
        .collect()
}

/// Assemble the bundle from collected stage outputs.
pub fn build_report(cfg: &PipelineConfig, inputs: &ReportInputs) -> Result<ReportBundle, PipelineError> {
    let mut label_distribution: BTreeMap<String, usize> = BTreeMap::new();
    for doc in &inputs.docs {
        let key = doc.label.map(|l| l.as_str().to_string()).unwrap_or_else(|| "unlabeled".into());
        *label_distribution.entry(key).or_insert(0) += 1;
    }
    let threads: Vec<ThreadEntry> = inputs
        .docs
        .iter()
        .map(|doc| ThreadEntry {
            thread_id: doc.thread_id.clone(),
            forum_id: doc.forum_id.clone(),
            cves: doc.cves.iter().map(|c| c.canonical()).collect(),
            label: doc.label.map(|l| l.as_str().to_string()),
        })
        .collect();

    let filter = FilterSection {
        threads_total: inputs.filter_report.threads_total,
        threads_citing: inputs.filter_report.threads_citing,
        threads_kept: inputs.filter_report.threads_kept,
        threads_dropped_language: inputs.filter_report.threads_dropped_language,
        posts_scanned: inputs.filter_report.posts_scanned,
        posts_citing: inputs.filter_report.posts_citing,
        unique_cves_kept_threads: inputs.filter_report.unique_cves_kept_threads,
        unique_cves_posts: inputs.filter_report.unique_cves_posts,
        label_distribution,
        threads,
    };

    let severity = SeveritySection {
        total_records: inputs.records.len(),
        v2: histogram_strings(&severity_histogram(&inputs.records, CvssVersion::V2)),
        v31: histogram_strings(&severity_histogram(&inputs.records, CvssVersion::V31)),
    };

    let model = &inputs.model;
    let marginal: Vec<f64> =
        marginal_topic_distribution(model).into_iter().map(round_sig).collect();
    let shares = token_shares_percent(model);
    let salient = top_salient_terms(model, cfg.top_n);

    let mut lambda_sections = Vec::new();
    for &lambda in &cfg.lambdas {
        let ranked = relevance(model, lambda)
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        let per_topic: Vec<Vec<TermEntry>> = ranked
            .iter()
            .map(|topic_ranking| {
                let top: Vec<(u32, f64)> =
                    topic_ranking.iter().take(cfg.top_n).copied().collect();
                term_entries(&top, inputs)
            })
            .collect();
        lambda_sections.push(LambdaRelevance { lambda, per_topic });
    }

    let distances = topic_distance_matrix(model);
    let projection = project_topics(&distances, &marginal_topic_distribution(model))
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    let distance_matrix: Vec<Vec<f64>> = distances
        .iter()
        .map(|row| row.iter().map(|&d| round_sig(d)).collect())
        .collect();
    let projection_entries: Vec<ProjectionEntry> = projection
        .points
        .iter()
        .map(|p| ProjectionEntry {
            topic: p.topic,
            x: round_sig(p.x),
            y: round_sig(p.y),
            radius: round_sig(p.radius),
        })
        .collect();

    let alignment = if inputs.labels.is_empty() {
        None
    } else {
        let alignment = align_topics_to_labels(model, &inputs.labels);
        let labeled_docs: u64 = alignment.contingency.iter().flatten().sum();
        Some(AlignmentSection {
            mapping: alignment
                .mapping
                .iter()
                .map(|(topic, label)| (topic.to_string(), label.as_str().to_string()))
                .collect(),
            agreement: alignment.agreement,
            labeled_docs,
            warning: alignment.warning,
        })
    };

    let nonempty_bows: Vec<_> =
        inputs.bows.iter().filter(|b| !b.entries.is_empty()).cloned().collect();
    let training_perplexity = if nonempty_bows.is_empty() {
        None
    } else {
        Some(round_sig(
            perplexity(model, &nonempty_bows).map_err(|e| PipelineError::Data(e.to_string()))?,
        ))
    };

    let topics = TopicsSection {
        k: model.config.k,
        vocabulary: inputs.dictionary.len(),
        marginal,
        token_shares_pct: shares,
        training_perplexity,
        salient_terms: term_entries(&salient, inputs),
        relevance: lambda_sections,
        tfidf_top_terms: term_entries(&inputs.tfidf_mean, inputs),
        distance_matrix,
        projection: projection_entries,
        projection_warning: projection.warning,
        alignment,
        model_warnings: model.warnings.clone(),
    };

    Ok(ReportBundle {
        schema_version: REPORT_SCHEMA_VERSION,
        provenance: cfg.provenance(),
        ingest: inputs.summary.clone(),
        stats: inputs.stats.clone(),
        filter,
        severity,
        topics,
    })
}

/// Run the report stage: read artifacts, assemble, write JSON and HTML.
pub fn stage_report(
    cfg: &PipelineConfig,
    resources: &Resources,
) -> Result<ReportBundle, PipelineError> {
    let inputs = collect_report_inputs(cfg, resources)?;
    let bundle = build_report(cfg, &inputs)?;
    let json = render_json(&bundle);
    let html = render_html(&bundle);
    std::fs::write(cfg.out_dir.join(ARTIFACT_REPORT_JSON), json)
        .map_err(|e| PipelineError::Data(format!("cannot write report.json: {e}")))?;
    std::fs::write(cfg.out_dir.join(ARTIFACT_REPORT_HTML), html)
        .map_err(|e| PipelineError::Data(format!("cannot write report.html: {e}")))?;
    Ok(bundle)
}

pub fn render_json(bundle: &ReportBundle) -> String {
    let mut text = serde_json::to_string_pretty(bundle).expect("bundle serializes");
    text.push('\n');
    text
}

// ---- HTML rendering ----

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_float(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e12 {
        format!("{x:.1}")
    } else {
        format!("{x:.4}")
    }
}

fn bar_chart(title: &str, items: &[(String, f64)], unit: &str) -> String {
    let max = items.iter().map(|&(_, v)| v).fold(0.0f64, f64::max).max(1e-12);
    let bar_height = 22;
    let height = items.len() * bar_height + 10;
    let mut svg = format!(
        "<figure><figcaption>{}</figcaption><svg viewBox=\"0 0 520 {height}\" width=\"520\" height=\"{height}\" role=\"img\">",
        escape(title)
    );
    for (i, (label, value)) in items.iter().enumerate() {
        let y = i * bar_height + 5;
        let w = (value / max * 300.0).max(0.0);
        svg.push_str(&format!(
            "<text x=\"110\" y=\"{ty}\" text-anchor=\"end\" font-size=\"12\">{label}</text>\
             <rect x=\"120\" y=\"{y}\" width=\"{w:.2}\" height=\"16\" fill=\"#4878a8\"></rect>\
             <text x=\"{vx:.2}\" y=\"{ty}\" font-size=\"12\">{value}{unit}</text>",
            ty = y + 13,
            label = escape(label),
            vx = 126.0 + w,
            value = fmt_float(*value),
        ));
    }
    svg.push_str("</svg></figure>");
    svg
}

fn projection_figure(points: &[ProjectionEntry]) -> String {
    let size = 360.0;
    let mut svg = format!(
        "<figure><figcaption>Topic projection (radius = marginal share)</figcaption>\
         <svg viewBox=\"0 0 {size} {size}\" width=\"360\" height=\"360\" role=\"img\">"
    );
    let extent = points
        .iter()
        .flat_map(|p| [p.x.abs(), p.y.abs()])
        .fold(1e-9f64, f64::max);
    let scale = (size / 2.0 - 60.0) / extent;
    svg.push_str(&format!(
        "<line x1=\"0\" y1=\"{h}\" x2=\"{size}\" y2=\"{h}\" stroke=\"#ccc\"></line>\
         <line x1=\"{h}\" y1=\"0\" x2=\"{h}\" y2=\"{size}\" stroke=\"#ccc\"></line>",
        h = size / 2.0
    ));
    for p in points {
        let cx = size / 2.0 + p.x * scale;
        let cy = size / 2.0 - p.y * scale;
        let r = (p.radius * 120.0).max(6.0);
        svg.push_str(&format!(
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"#4878a8\" fill-opacity=\"0.45\" stroke=\"#2a4a6a\"></circle>\
             <text x=\"{cx:.2}\" y=\"{ty:.2}\" text-anchor=\"middle\" font-size=\"13\">topic {t}</text>",
            ty = cy + 4.0,
            t = p.topic,
        ));
    }
    svg.push_str("</svg></figure>");
    svg
}

fn term_table(terms: &[TermEntry]) -> String {
    let mut html = String::from("<table><tr><th>term</th><th>score</th></tr>");
    for entry in terms {
        html.push_str(&format!(
            "<tr><td>{}</td><td>{}</td></tr>",
            escape(&entry.token),
            fmt_float(entry.score)
        ));
    }
    html.push_str("</table>");
    html
}

/// Fully self-contained static page: inline CSS, inline SVG, no scripts,
/// no external references.
pub fn render_html(bundle: &ReportBundle) -> String {
    let mut page = String::from(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n\
         <title>Forum CVE topic report</title>\n<style>\n\
         body{font-family:sans-serif;margin:2rem auto;max-width:70rem;color:#222}\n\
         table{border-collapse:collapse;margin:0.6rem 0}\n\
         td,th{border:1px solid #bbb;padding:0.25rem 0.6rem;font-size:0.9rem;text-align:left}\n\
         figure{display:inline-block;vertical-align:top;margin:0.8rem 1.2rem 0.8rem 0}\n\
         figcaption{font-weight:bold;margin-bottom:0.3rem}\n\
         h2{border-bottom:2px solid #4878a8;padding-bottom:0.2rem;margin-top:2rem}\n\
         .prov{color:#555;font-size:0.85rem}\n\
         .cols{display:flex;flex-wrap:wrap;gap:1rem}\n\
         </style>\n</head>\n<body>\n<h1>Forum CVE topic report</h1>\n",
    );

    page.push_str(&format!(
        "<p class=\"prov\">tool {} · config {} · seed {}</p>\n",
        escape(&bundle.provenance.tool_version),
        escape(&bundle.provenance.config_hash),
        bundle.provenance.seed
    ));

    // Corpus statistics
    page.push_str("<h2>Corpus</h2>\n<table><tr><th>forum</th><th>users</th><th>boards</th><th>threads</th><th>posts</th></tr>");
    for row in &bundle.stats.per_forum {
        page.push_str(&format!(
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            escape(&row.name),
            row.users,
            row.boards,
            row.threads,
            row.posts
        ));
    }
    let totals = &bundle.stats.totals;
    page.push_str(&format!(
        "<tr><th>total</th><th>{}</th><th>{}</th><th>{}</th><th>{}</th></tr></table>\n",
        totals.users, totals.boards, totals.threads, totals.posts
    ));
    page.push_str(&format!(
        "<p>Anomalies: {} null titles, {} empty posts, {} null authors. \
         Ingest saw {} forums, {} boards, {} threads, {} posts, {} dangling references.</p>\n",
        bundle.stats.anomalies.null_titles,
        bundle.stats.anomalies.empty_posts,
        bundle.stats.anomalies.null_authors,
        bundle.ingest.forums,
        bundle.ingest.boards,
        bundle.ingest.threads,
        bundle.ingest.posts,
        bundle.ingest.dangling.len(),
    ));

    // Filtering
    let filter = &bundle.filter;
    page.push_str("<h2>CVE filtering</h2>\n");
    page.push_str(&format!(
        "<p>{} of {} threads cite a CVE; {} kept after the language filter \
         ({} dropped). {} of {} posts cite CVEs. Unique CVEs: {} over kept threads, \
         {} over all posts.</p>\n",
        filter.threads_citing,
        filter.threads_total,
        filter.threads_kept,
        filter.threads_dropped_language,
        filter.posts_citing,
        filter.posts_scanned,
        filter.unique_cves_kept_threads,
        filter.unique_cves_posts,
    ));
    let label_items: Vec<(String, f64)> = filter
        .label_distribution
        .iter()
        .map(|(label, &count)| (label.clone(), count as f64))
        .collect();
    if !label_items.is_empty() {
        page.push_str(&bar_chart("Thread labels", &label_items, ""));
    }
    page.push_str("<table><tr><th>thread</th><th>forum</th><th>label</th><th>CVEs</th></tr>");
    for thread in &filter.threads {
        page.push_str(&format!(
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            escape(&thread.thread_id),
            escape(thread.forum_id.as_deref().unwrap_or("-")),
            escape(thread.label.as_deref().unwrap_or("-")),
            escape(&thread.cves.join(" ")),
        ));
    }
    page.push_str("</table>\n");

    // Severity histograms
    page.push_str("<h2>CVSS severity</h2>\n<div class=\"cols\">");
    for (title, histogram) in
        [("CVSS v2", &bundle.severity.v2), ("CVSS v3.1", &bundle.severity.v31)]
    {
        let items: Vec<(String, f64)> =
            histogram.iter().map(|(bucket, &count)| (bucket.clone(), count as f64)).collect();
        page.push_str(&bar_chart(title, &items, ""));
    }
    page.push_str("</div>\n");

    // Topics
    let topics = &bundle.topics;
    page.push_str("<h2>Topic model</h2>\n");
    page.push_str(&format!(
        "<p>K = {} topics over a vocabulary of {} terms.{}</p>\n",
        topics.k,
        topics.vocabulary,
        topics
            .training_perplexity
            .map(|p| format!(" Training-set perplexity {:.2}.", p))
            .unwrap_or_default()
    ));
    let share_items: Vec<(String, f64)> = topics
        .token_shares_pct
        .iter()
        .enumerate()
        .map(|(topic, &share)| (format!("topic {topic}"), share))
        .collect();
    page.push_str("<div class=\"cols\">");
    page.push_str(&bar_chart("Token share per topic", &share_items, "%"));
    page.push_str(&projection_figure(&topics.projection));
    page.push_str("</div>\n");
    if let Some(warning) = &topics.projection_warning {
        page.push_str(&format!("<p class=\"prov\">{}</p>\n", escape(warning)));
    }

    page.push_str("<h3>Most salient terms</h3>\n");
    let salient_items: Vec<(String, f64)> =
        topics.salient_terms.iter().map(|t| (t.token.clone(), t.score)).collect();
    page.push_str(&bar_chart("Saliency", &salient_items, ""));

    for section in &topics.relevance {
        page.push_str(&format!("<h3>Relevant terms (λ = {})</h3>\n<div class=\"cols\">", section.lambda));
        for (topic, terms) in section.per_topic.iter().enumerate() {
            page.push_str(&format!("<figure><figcaption>topic {topic}</figcaption>"));
            page.push_str(&term_table(terms));
            page.push_str("</figure>");
        }
        page.push_str("</div>\n");
    }

    page.push_str("<h3>Top TF-IDF terms</h3>\n");
    page.push_str(&term_table(&topics.tfidf_top_terms));

    page.push_str("<h3>Topic distances (Jensen–Shannon)</h3>\n<table><tr><th></th>");
    for topic in 0..topics.distance_matrix.len() {
        page.push_str(&format!("<th>{topic}</th>"));
    }
    page.push_str("</tr>");
    for (i, row) in topics.distance_matrix.iter().enumerate() {
        page.push_str(&format!("<tr><th>{i}</th>"));
        for value in row {
            page.push_str(&format!("<td>{}</td>", fmt_float(*value)));
        }
        page.push_str("</tr>");
    }
    page.push_str("</table>\n");

    if let Some(alignment) = &topics.alignment {
        page.push_str("<h3>Topic ↔ label alignment</h3>\n<table><tr><th>topic</th><th>label</th></tr>");
        for (topic, label) in &alignment.mapping {
            page.push_str(&format!(
                "<tr><td>{}</td><td>{}</td></tr>",
                escape(topic),
                escape(label)
            ));
        }
        page.push_str(&format!(
            "</table><p>{} of {} labeled documents agree with the mapping.</p>\n",
            alignment.agreement, alignment.labeled_docs
        ));
        if let Some(warning) = &alignment.warning {
            page.push_str(&format!("<p class=\"prov\">{}</p>\n", escape(warning)));
        }
    }

    if !topics.model_warnings.is_empty() {
        page.push_str("<h3>Warnings</h3>\n<ul>");
        for warning in &topics.model_warnings {
            page.push_str(&format!("<li>{}</li>", escape(warning)));
        }
        page.push_str("</ul>\n");
    }

    page.push_str("</body>\n</html>\n");
    page
}

/// Execute every stage in order and return the final bundle.
pub fn run_all(
    cfg: &PipelineConfig,
    resources: &Resources,
) -> Result<ReportBundle, PipelineError> {
    crate::pipeline::stage_ingest(cfg)?;
    crate::pipeline::stage_stats(cfg)?;
    crate::pipeline::stage_filter(cfg, resources)?;
    crate::pipeline::stage_enrich(cfg)?;
    crate::pipeline::stage_train(cfg, resources)?;
    stage_report(cfg, resources)
}
