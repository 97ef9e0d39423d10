//! Report ingestion: FindBugs/SpotBugs XML, SARIF 2.1.0 and the canonical
//! `findings-v1` JSON form.
//!
//! Every parser validates the whole report before returning; a single bad
//! element rejects the report.

mod canonical;
mod findbugs;
mod sarif;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use canonical::{parse_canonical, serialize_run, to_canonical_json, CANONICAL_SCHEMA};
pub use findbugs::parse_findbugs_xml;
pub use sarif::{parse_sarif, sarif_rank_to_severity, SARIF_VERSION};

use crate::model::MetricsSnapshot;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error("invalid {field} on {element} #{index}: {reason}")]
    InvalidField {
        element: String,
        /// 0-based position of the offending element in document order.
        index: usize,
        field: String,
        reason: String,
    },
    #[error("unsupported report version `{0}`")]
    UnsupportedVersion(String),
}

impl IngestError {
    pub(crate) fn invalid(element: &str, index: usize, field: &str, reason: impl Into<String>) -> Self {
        IngestError::InvalidField { element: element.to_owned(), index, field: field.to_owned(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReportFormat {
    FindbugsXml,
    Sarif,
    CanonicalJson,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "findbugs" | "spotbugs" | "findbugs_xml" => Ok(ReportFormat::FindbugsXml),
            "sarif" => Ok(ReportFormat::Sarif),
            "canonical" | "json" | "canonical_json" => Ok(ReportFormat::CanonicalJson),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

/// Caller-supplied run metadata for formats that do not carry it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunMeta {
    pub timestamp: DateTime<Utc>,
    /// Overrides the version found in the report, if any.
    pub tool_version: Option<String>,
}

impl RunMeta {
    pub fn at(timestamp: DateTime<Utc>) -> Self {
        Self { timestamp, tool_version: None }
    }
}

/// Parse a report of the given format.
pub fn parse_report(
    format: ReportFormat,
    bytes: &[u8],
    meta: &RunMeta,
) -> Result<crate::model::AnalysisRun, IngestError> {
    match format {
        ReportFormat::FindbugsXml => parse_findbugs_xml(bytes, meta),
        ReportFormat::Sarif => parse_sarif(bytes, meta),
        ReportFormat::CanonicalJson => parse_canonical(bytes),
    }
}

/// Content-addressed run id: the same report bytes always yield the same id.
pub fn content_run_id(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..12])
}

/// Parse a metrics snapshot file: a flat JSON object of metric name to number.
pub fn parse_metrics(bytes: &[u8], run_id: &str) -> Result<MetricsSnapshot, IngestError> {
    let values: BTreeMap<String, f64> =
        serde_json::from_slice(bytes).map_err(|e| IngestError::MalformedReport(format!("metrics snapshot: {e}")))?;
    let snapshot = MetricsSnapshot { run_id: run_id.to_owned(), values };
    validate_metrics(&snapshot)?;
    Ok(snapshot)
}

pub fn validate_metrics(snapshot: &MetricsSnapshot) -> Result<(), IngestError> {
    for (index, (name, value)) in snapshot.values.iter().enumerate() {
        if name.is_empty() {
            return Err(IngestError::invalid("metric", index, "name", "empty metric name"));
        }
        if !value.is_finite() {
            return Err(IngestError::invalid("metric", index, name, "value is not finite"));
        }
    }
    Ok(())
}
