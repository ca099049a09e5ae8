//! CVSS enrichment from NVD data (API 2.0 vulnerability schema subset).
//!
//! The offline fixture mode reads one JSON file per CVE from a directory and
//! is the default everywhere; the live mode queries the public JSON REST API
//! with an on-disk cache keyed by canonical CVE id, a minimum interval
//! between requests, and bounded retries.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::CveId;

#[derive(Debug, Error)]
pub enum NvdError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed NVD record for {cve}: {message}")]
    Malformed { cve: String, message: String },
    #[error("NVD request for {cve} failed after {attempts} attempts: {message}")]
    Network { cve: String, attempts: u32, message: String },
}

/// CVSS severity levels across both versions. `None` exists only in v3.1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    None,
    Low,
    Medium,
    High,
    Critical,
}

impl Severity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::None => "NONE",
            Severity::Low => "LOW",
            Severity::Medium => "MEDIUM",
            Severity::High => "HIGH",
            Severity::Critical => "CRITICAL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvssVersion {
    V2,
    V31,
}

/// CVSS v2 bands: LOW [0.0,3.9], MEDIUM [4.0,6.9], HIGH [7.0,10.0].
pub fn v2_severity(score: f64) -> Severity {
    if score < 4.0 {
        Severity::Low
    } else if score < 7.0 {
        Severity::Medium
    } else {
        Severity::High
    }
}

/// CVSS v3.1 bands: NONE {0.0}, LOW [0.1,3.9], MEDIUM [4.0,6.9],
/// HIGH [7.0,8.9], CRITICAL [9.0,10.0].
pub fn v31_severity(score: f64) -> Severity {
    if score == 0.0 {
        Severity::None
    } else if score < 4.0 {
        Severity::Low
    } else if score < 7.0 {
        Severity::Medium
    } else if score < 9.0 {
        Severity::High
    } else {
        Severity::Critical
    }
}

/// A base score with its banded severity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvssScore {
    pub score: f64,
    pub severity: Severity,
}

/// A CVE enriched with whatever CVSS metrics the source knows about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CveRecord {
    pub cve: CveId,
    pub cvss_v2: Option<CvssScore>,
    pub cvss_v31: Option<CvssScore>,
    pub description: Option<String>,
}

/// Where CVSS data comes from.
#[derive(Debug, Clone)]
pub enum NvdSource {
    /// Directory of `<CVE-ID>.json` files. A missing file means not found.
    Fixture(PathBuf),
    /// Public JSON API with an on-disk cache.
    Live { base_url: String, cache_dir: PathBuf, min_interval: Duration },
}

// ---- NVD API 2.0 subset ----

#[derive(Debug, Deserialize)]
struct ApiResponse {
    #[serde(default)]
    vulnerabilities: Vec<VulnerabilityItem>,
}

#[derive(Debug, Deserialize)]
struct VulnerabilityItem {
    cve: ApiCve,
}

#[derive(Debug, Deserialize)]
struct ApiCve {
    id: String,
    #[serde(default)]
    descriptions: Vec<ApiDescription>,
    #[serde(default)]
    metrics: ApiMetrics,
}

#[derive(Debug, Deserialize)]
struct ApiDescription {
    lang: String,
    value: String,
}

#[derive(Debug, Default, Deserialize)]
struct ApiMetrics {
    #[serde(rename = "cvssMetricV2", default)]
    cvss_metric_v2: Vec<ApiMetric>,
    #[serde(rename = "cvssMetricV31", default)]
    cvss_metric_v31: Vec<ApiMetric>,
}

#[derive(Debug, Deserialize)]
struct ApiMetric {
    #[serde(rename = "type", default)]
    metric_type: Option<String>,
    #[serde(rename = "baseSeverity", default)]
    base_severity: Option<String>,
    #[serde(rename = "cvssData")]
    cvss_data: ApiCvssData,
}

#[derive(Debug, Deserialize)]
struct ApiCvssData {
    #[serde(rename = "baseScore")]
    base_score: f64,
    #[serde(rename = "baseSeverity", default)]
    base_severity: Option<String>,
}

fn pick_metric(metrics: &[ApiMetric]) -> Option<&ApiMetric> {
    metrics
        .iter()
        .find(|m| m.metric_type.as_deref() == Some("Primary"))
        .or_else(|| metrics.first())
}

fn convert_metric(
    metric: &ApiMetric,
    band: fn(f64) -> Severity,
    cve: &CveId,
) -> Result<CvssScore, NvdError> {
    let score = metric.cvss_data.base_score;
    if !(0.0..=10.0).contains(&score) {
        return Err(NvdError::Malformed {
            cve: cve.canonical(),
            message: format!("base score {score} outside [0,10]"),
        });
    }
    let severity = band(score);
    let declared = metric.base_severity.as_deref().or(metric.cvss_data.base_severity.as_deref());
    if let Some(declared) = declared {
        if !declared.eq_ignore_ascii_case(severity.as_str()) {
            return Err(NvdError::Malformed {
                cve: cve.canonical(),
                message: format!(
                    "declared severity {declared} disagrees with banded score {score} ({})",
                    severity.as_str()
                ),
            });
        }
    }
    Ok(CvssScore { score, severity })
}

fn record_from_response(text: &str, cve: &CveId) -> Result<CveRecord, NvdError> {
    let response: ApiResponse =
        serde_json::from_str(text).map_err(|e| NvdError::Malformed {
            cve: cve.canonical(),
            message: e.to_string(),
        })?;
    let canonical = cve.canonical();
    let Some(item) = response
        .vulnerabilities
        .iter()
        .find(|v| v.cve.id.eq_ignore_ascii_case(&canonical))
    else {
        return Ok(CveRecord { cve: cve.clone(), cvss_v2: None, cvss_v31: None, description: None });
    };

    let cvss_v2 = pick_metric(&item.cve.metrics.cvss_metric_v2)
        .map(|m| convert_metric(m, v2_severity, cve))
        .transpose()?;
    let cvss_v31 = pick_metric(&item.cve.metrics.cvss_metric_v31)
        .map(|m| convert_metric(m, v31_severity, cve))
        .transpose()?;
    let description = item
        .cve
        .descriptions
        .iter()
        .find(|d| d.lang == "en")
        .or_else(|| item.cve.descriptions.first())
        .map(|d| d.value.clone());

    Ok(CveRecord { cve: cve.clone(), cvss_v2, cvss_v31, description })
}

fn not_found(cve: &CveId) -> CveRecord {
    CveRecord { cve: cve.clone(), cvss_v2: None, cvss_v31: None, description: None }
}

fn fixture_lookup(dir: &Path, cve: &CveId) -> Result<CveRecord, NvdError> {
    let path = dir.join(format!("{}.json", cve.canonical()));
    match fs::read_to_string(&path) {
        Ok(text) => record_from_response(&text, cve),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(not_found(cve)),
        Err(source) => Err(NvdError::Io { path: path.display().to_string(), source }),
    }
}

struct LiveClient {
    base_url: String,
    cache_dir: PathBuf,
    min_interval: Duration,
    last_request: Option<Instant>,
}

impl LiveClient {
    fn lookup(&mut self, cve: &CveId) -> Result<CveRecord, NvdError> {
        let cache_path = self.cache_dir.join(format!("{}.json", cve.canonical()));
        if let Ok(text) = fs::read_to_string(&cache_path) {
            return record_from_response(&text, cve);
        }
        let text = self.fetch(cve)?;
        fs::create_dir_all(&self.cache_dir).map_err(|source| NvdError::Io {
            path: self.cache_dir.display().to_string(),
            source,
        })?;
        fs::write(&cache_path, &text).map_err(|source| NvdError::Io {
            path: cache_path.display().to_string(),
            source,
        })?;
        record_from_response(&text, cve)
    }

    fn fetch(&mut self, cve: &CveId) -> Result<String, NvdError> {
        let url = format!("{}?cveId={}", self.base_url, cve.canonical());
        let attempts = 3;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if let Some(last) = self.last_request {
                let elapsed = last.elapsed();
                if elapsed < self.min_interval {
                    std::thread::sleep(self.min_interval - elapsed);
                }
            }
            self.last_request = Some(Instant::now());
            match ureq::get(&url).call() {
                Ok(mut response) => {
                    return response.body_mut().read_to_string().map_err(|e| NvdError::Network {
                        cve: cve.canonical(),
                        attempts: attempt + 1,
                        message: e.to_string(),
                    });
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(NvdError::Network { cve: cve.canonical(), attempts, message: last_error })
    }
}

/// Produce one record per input CVE, in input order. Absent CVEs get a record
/// with both CVSS versions missing; they land in the NOT_FOUND histogram
/// bucket later.
pub fn enrich_nvd(cves: &[CveId], source: &NvdSource) -> Result<Vec<CveRecord>, NvdError> {
    match source {
        NvdSource::Fixture(dir) => cves.iter().map(|c| fixture_lookup(dir, c)).collect(),
        NvdSource::Live { base_url, cache_dir, min_interval } => {
            let mut client = LiveClient {
                base_url: base_url.clone(),
                cache_dir: cache_dir.clone(),
                min_interval: *min_interval,
                last_request: None,
            };
            cves.iter().map(|c| client.lookup(c)).collect()
        }
    }
}

/// Histogram key: a severity band or the bucket for CVEs lacking the
/// requested CVSS version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeverityBucket {
    #[serde(rename = "NONE")]
    None,
    #[serde(rename = "LOW")]
    Low,
    #[serde(rename = "MEDIUM")]
    Medium,
    #[serde(rename = "HIGH")]
    High,
    #[serde(rename = "CRITICAL")]
    Critical,
    #[serde(rename = "NOT_FOUND")]
    NotFound,
}

impl SeverityBucket {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeverityBucket::None => "NONE",
            SeverityBucket::Low => "LOW",
            SeverityBucket::Medium => "MEDIUM",
            SeverityBucket::High => "HIGH",
            SeverityBucket::Critical => "CRITICAL",
            SeverityBucket::NotFound => "NOT_FOUND",
        }
    }

    fn from_severity(severity: Severity) -> Self {
        match severity {
            Severity::None => SeverityBucket::None,
            Severity::Low => SeverityBucket::Low,
            Severity::Medium => SeverityBucket::Medium,
            Severity::High => SeverityBucket::High,
            Severity::Critical => SeverityBucket::Critical,
        }
    }
}

/// Bucket records by severity band of the requested version; records lacking
/// that version land in NOT_FOUND. Every bucket of the version is present in
/// the output, and counts always sum to the number of records.
pub fn severity_histogram(
    records: &[CveRecord],
    version: CvssVersion,
) -> BTreeMap<SeverityBucket, usize> {
    let mut histogram: BTreeMap<SeverityBucket, usize> = match version {
        CvssVersion::V2 => [SeverityBucket::Low, SeverityBucket::Medium, SeverityBucket::High],
        CvssVersion::V31 => [SeverityBucket::Low, SeverityBucket::Medium, SeverityBucket::High],
    }
    .into_iter()
    .map(|b| (b, 0))
    .collect();
    if matches!(version, CvssVersion::V31) {
        histogram.insert(SeverityBucket::None, 0);
        histogram.insert(SeverityBucket::Critical, 0);
    }
    histogram.insert(SeverityBucket::NotFound, 0);

    for record in records {
        let score = match version {
            CvssVersion::V2 => record.cvss_v2,
            CvssVersion::V31 => record.cvss_v31,
        };
        let bucket = match score {
            Some(s) => SeverityBucket::from_severity(s.severity),
            None => SeverityBucket::NotFound,
        };
        *histogram.entry(bucket).or_insert(0) += 1;
    }
    histogram
}
