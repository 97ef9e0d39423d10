//! Domain types shared by every part of the triage engine.
//!
//! Everything here is an immutable value. Severity follows the FindBugs rank
//! scale (1 = most severe, 20 = least severe) and confidence the three
//! FindBugs priorities.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_RANK: u8 = 1;
pub const MAX_RANK: u8 = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("severity rank {0} outside 1..=20")]
    RankOutOfRange(i64),
    #[error("source location end line {end} precedes start line {start}")]
    InvertedLines { start: u32, end: u32 },
    #[error("line numbers must be positive")]
    ZeroLine,
    #[error("pattern id must not be empty")]
    EmptyPatternId,
}

/// A FindBugs-style bug rank in `1..=20`. Smaller is more severe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct SeverityRank(u8);

impl SeverityRank {
    pub fn new(rank: i64) -> Result<Self, ModelError> {
        if (MIN_RANK as i64..=MAX_RANK as i64).contains(&rank) {
            Ok(Self(rank as u8))
        } else {
            Err(ModelError::RankOutOfRange(rank))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn band(self) -> SeverityBand {
        match self.0 {
            1..=4 => SeverityBand::Scariest,
            5..=9 => SeverityBand::Scary,
            10..=14 => SeverityBand::Troubling,
            _ => SeverityBand::OfConcern,
        }
    }

    /// `true` when `self` is strictly more severe than `other`.
    pub fn is_more_severe_than(self, other: SeverityRank) -> bool {
        self.0 < other.0
    }
}

impl TryFrom<i64> for SeverityRank {
    type Error = ModelError;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        SeverityRank::new(value)
    }
}

impl From<SeverityRank> for u8 {
    fn from(rank: SeverityRank) -> u8 {
        rank.0
    }
}

impl fmt::Display for SeverityRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Severity groups used for colouring, ordered from most to least severe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SeverityBand {
    Scariest,
    Scary,
    Troubling,
    OfConcern,
}

impl SeverityBand {
    pub fn label(self) -> &'static str {
        match self {
            SeverityBand::Scariest => "scariest",
            SeverityBand::Scary => "scary",
            SeverityBand::Troubling => "troubling",
            SeverityBand::OfConcern => "of concern",
        }
    }
}

/// Detector confidence. The derived order is `Low < Normal < High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Confidence {
    Low,
    Normal,
    High,
}

impl Confidence {
    pub const ALL: [Confidence; 3] = [Confidence::High, Confidence::Normal, Confidence::Low];

    /// Opacity used when rendering a finding of this confidence.
    pub fn alpha(self) -> f64 {
        match self {
            Confidence::High => 1.0,
            Confidence::Normal => 0.6,
            Confidence::Low => 0.3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Confidence::High => "high",
            Confidence::Normal => "normal",
            Confidence::Low => "low",
        }
    }
}

impl std::str::FromStr for Confidence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "high" => Ok(Confidence::High),
            "normal" => Ok(Confidence::Normal),
            "low" => Ok(Confidence::Low),
            other => Err(format!("unknown confidence `{other}` (expected high, normal or low)")),
        }
    }
}

/// Opaque, stable identity of a finding across runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Fingerprint(String);

impl Fingerprint {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Fingerprint {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Normalize a report path: forward slashes, no leading `./`.
pub fn normalize_path(raw: &str) -> String {
    let mut path = raw.replace('\\', "/");
    while let Some(rest) = path.strip_prefix("./") {
        path = rest.to_owned();
    }
    path
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SourceLocation {
    pub file_path: String,
    pub class_name: Option<String>,
    pub method_signature: Option<String>,
    pub start_line: Option<u32>,
    pub end_line: Option<u32>,
}

impl SourceLocation {
    pub fn new(file_path: &str) -> Self {
        Self {
            file_path: normalize_path(file_path),
            class_name: None,
            method_signature: None,
            start_line: None,
            end_line: None,
        }
    }

    pub fn with_lines(mut self, start: Option<u32>, end: Option<u32>) -> Self {
        self.start_line = start;
        self.end_line = end;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.start_line == Some(0) || self.end_line == Some(0) {
            return Err(ModelError::ZeroLine);
        }
        if let (Some(start), Some(end)) = (self.start_line, self.end_line) {
            if end < start {
                return Err(ModelError::InvertedLines { start, end });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Finding {
    pub fingerprint: Fingerprint,
    pub pattern_id: String,
    pub category: String,
    pub message: String,
    pub severity: SeverityRank,
    pub confidence: Confidence,
    pub location: SourceLocation,
}

impl Finding {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.pattern_id.is_empty() {
            return Err(ModelError::EmptyPatternId);
        }
        self.location.validate()
    }
}

/// Code metrics captured alongside one analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct MetricsSnapshot {
    pub run_id: String,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnalysisRun {
    pub run_id: String,
    pub timestamp: DateTime<Utc>,
    pub tool_name: String,
    pub tool_version: String,
    /// Tool emission order; this is the level-0 presentation.
    pub findings: Vec<Finding>,
    pub metrics: Option<MetricsSnapshot>,
}

impl AnalysisRun {
    pub fn finding(&self, fingerprint: &Fingerprint) -> Option<&Finding> {
        self.findings.iter().find(|f| &f.fingerprint == fingerprint)
    }

    /// Number of findings per pattern id.
    pub fn pattern_counts(&self) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for f in &self.findings {
            *counts.entry(f.pattern_id.clone()).or_insert(0) += 1;
        }
        counts
    }
}

/// Per-project user judgments.
///
/// `dormant` holds the instant at which a marked finding stopped appearing
/// in the latest run; such entries are kept until the retention horizon so a
/// reintroduced finding regains its marks.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TriageState {
    pub false_positives: BTreeMap<Fingerprint, DateTime<Utc>>,
    pub severity_overrides: BTreeMap<Fingerprint, SeverityRank>,
    #[serde(default)]
    pub dormant: BTreeMap<Fingerprint, DateTime<Utc>>,
}

impl TriageState {
    pub fn is_false_positive(&self, fingerprint: &Fingerprint) -> bool {
        self.false_positives.contains_key(fingerprint)
    }

    pub fn mark_false_positive(&mut self, fingerprint: Fingerprint, at: DateTime<Utc>) {
        self.false_positives.entry(fingerprint).or_insert(at);
    }

    pub fn unmark_false_positive(&mut self, fingerprint: &Fingerprint) -> bool {
        self.false_positives.remove(fingerprint).is_some()
    }

    pub fn set_override(&mut self, fingerprint: Fingerprint, rank: SeverityRank) {
        self.severity_overrides.insert(fingerprint, rank);
    }

    pub fn is_empty(&self) -> bool {
        self.false_positives.is_empty() && self.severity_overrides.is_empty()
    }
}

/// The user-chosen rank if one exists, otherwise the tool's rank.
pub fn effective_severity(finding: &Finding, triage: &TriageState) -> SeverityRank {
    triage.severity_overrides.get(&finding.fingerprint).copied().unwrap_or(finding.severity)
}

/// How false-positive findings are drawn when they are visible at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FpMode {
    Highlight,
    #[default]
    Dim,
}

impl std::str::FromStr for FpMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "highlight" => Ok(FpMode::Highlight),
            "dim" => Ok(FpMode::Dim),
            other => Err(format!("unknown false-positive mode `{other}` (expected highlight or dim)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FpTreatment {
    None,
    Highlight,
    Dim,
}

impl From<FpMode> for FpTreatment {
    fn from(mode: FpMode) -> Self {
        match mode {
            FpMode::Highlight => FpTreatment::Highlight,
            FpMode::Dim => FpTreatment::Dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DisplayStyle {
    pub color_band: SeverityBand,
    pub alpha: f64,
    pub fp_treatment: FpTreatment,
}

pub fn display_style(finding: &Finding, triage: &TriageState, fp_mode: FpMode) -> DisplayStyle {
    let fp_treatment = if triage.is_false_positive(&finding.fingerprint) { fp_mode.into() } else { FpTreatment::None };
    DisplayStyle {
        color_band: effective_severity(finding, triage).band(),
        alpha: finding.confidence.alpha(),
        fp_treatment,
    }
}
