use serde::Deserialize;
use serde_json::Value;

use super::{content_run_id, IngestError, RunMeta};
use crate::identity::assign_fingerprints;
use crate::model::{AnalysisRun, Confidence, Finding, Fingerprint, SeverityRank, SourceLocation};

pub const SARIF_VERSION: &str = "2.1.0";
const ELEMENT: &str = "result";

#[derive(Debug, Deserialize)]
struct SarifLog {
    version: Option<String>,
    #[serde(default)]
    runs: Vec<SarifRun>,
}

#[derive(Debug, Deserialize)]
struct SarifRun {
    tool: SarifTool,
    #[serde(default)]
    results: Vec<SarifResult>,
}

#[derive(Debug, Deserialize)]
struct SarifTool {
    driver: SarifDriver,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct SarifDriver {
    #[serde(default)]
    name: String,
    version: Option<String>,
    semantic_version: Option<String>,
    #[serde(default)]
    rules: Vec<SarifRule>,
}

#[derive(Debug, Deserialize)]
struct SarifRule {
    id: String,
    #[serde(default)]
    properties: Option<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct SarifResult {
    rule_id: Option<String>,
    rule: Option<RuleReference>,
    level: Option<String>,
    rank: Option<f64>,
    message: Option<SarifMessage>,
    #[serde(default)]
    locations: Vec<SarifLocation>,
    #[serde(default)]
    properties: Option<Value>,
}

#[derive(Debug, Deserialize)]
struct RuleReference {
    id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SarifMessage {
    text: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct SarifLocation {
    physical_location: Option<PhysicalLocation>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct PhysicalLocation {
    artifact_location: Option<ArtifactLocation>,
    region: Option<Region>,
}

#[derive(Debug, Deserialize)]
struct ArtifactLocation {
    uri: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Region {
    start_line: Option<i64>,
    end_line: Option<i64>,
}

/// Map a SARIF `rank` (0..=100, higher = more important) onto the 1..=20
/// severity scale: `round(1 + 19 * (1 - rank / 100))`, rounding half away
/// from zero.
pub fn sarif_rank_to_severity(rank: f64) -> Option<SeverityRank> {
    if !(0.0..=100.0).contains(&rank) {
        return None;
    }
    let value = (1.0 + 19.0 * (1.0 - rank / 100.0)).round() as i64;
    SeverityRank::new(value).ok()
}

/// Parse the first run of a SARIF 2.1.0 log.
///
/// `level` error/warning/note maps to high/normal/low confidence (an absent
/// level is SARIF's default `warning`; `none` is treated like `note`). Without
/// a `rank`, severity is the band midpoint of the level: 4, 10 or 16.
pub fn parse_sarif(bytes: &[u8], meta: &RunMeta) -> Result<AnalysisRun, IngestError> {
    let log: SarifLog =
        serde_json::from_slice(bytes).map_err(|e| IngestError::MalformedReport(format!("not a SARIF log: {e}")))?;
    match log.version.as_deref() {
        Some(SARIF_VERSION) => {}
        Some(other) => return Err(IngestError::UnsupportedVersion(other.to_owned())),
        None => return Err(IngestError::MalformedReport("missing SARIF version".into())),
    }
    let run =
        log.runs.into_iter().next().ok_or_else(|| IngestError::MalformedReport("SARIF log has no runs".into()))?;

    let mut findings = Vec::with_capacity(run.results.len());
    for (index, result) in run.results.iter().enumerate() {
        findings.push(parse_result(result, index, &run.tool.driver.rules)?);
    }
    assign_fingerprints(&mut findings);

    let driver = run.tool.driver;
    let tool_version = meta.tool_version.clone().or(driver.version).or(driver.semantic_version).unwrap_or_default();
    Ok(AnalysisRun {
        run_id: content_run_id(bytes),
        timestamp: meta.timestamp,
        tool_name: driver.name,
        tool_version,
        findings,
        metrics: None,
    })
}

fn category_of(properties: Option<&Value>) -> Option<String> {
    let props = properties?;
    if let Some(c) = props.get("category").and_then(Value::as_str) {
        return Some(c.to_owned());
    }
    props.get("tags").and_then(Value::as_array).and_then(|tags| tags.first()).and_then(Value::as_str).map(str::to_owned)
}

fn parse_result(result: &SarifResult, index: usize, rules: &[SarifRule]) -> Result<Finding, IngestError> {
    let invalid = |field: &str, reason: String| IngestError::invalid(ELEMENT, index, field, reason);

    let pattern_id = result
        .rule_id
        .clone()
        .or_else(|| result.rule.as_ref().and_then(|r| r.id.clone()))
        .filter(|id| !id.is_empty())
        .ok_or_else(|| invalid("ruleId", "missing".into()))?;

    let (confidence, midpoint) = match result.level.as_deref().unwrap_or("warning") {
        "error" => (Confidence::High, 4),
        "warning" => (Confidence::Normal, 10),
        "note" | "none" => (Confidence::Low, 16),
        other => return Err(invalid("level", format!("unknown level `{other}`"))),
    };

    // SARIF uses -1 for "no rank".
    let severity = match result.rank {
        None | Some(-1.0) => SeverityRank::new(midpoint).expect("midpoints are valid ranks"),
        Some(r) => sarif_rank_to_severity(r).ok_or_else(|| invalid("rank", format!("{r} is outside 0..=100")))?,
    };

    let physical = result
        .locations
        .iter()
        .find_map(|l| l.physical_location.as_ref())
        .ok_or_else(|| invalid("locations", "no physical location".into()))?;
    let uri = physical
        .artifact_location
        .as_ref()
        .and_then(|a| a.uri.as_deref())
        .filter(|u| !u.is_empty())
        .ok_or_else(|| invalid("artifactLocation.uri", "missing".into()))?;
    let uri = uri.strip_prefix("file://").unwrap_or(uri);

    let line = |value: Option<i64>, field: &str| -> Result<Option<u32>, IngestError> {
        match value {
            None => Ok(None),
            Some(n) if n >= 1 && n <= u32::MAX as i64 => Ok(Some(n as u32)),
            Some(n) => Err(invalid(field, format!("{n} is not a positive line number"))),
        }
    };
    let region = physical.region.as_ref();
    let start = line(region.and_then(|r| r.start_line), "region.startLine")?;
    let end = line(region.and_then(|r| r.end_line), "region.endLine")?;
    let location = SourceLocation::new(uri).with_lines(start, end);
    location.validate().map_err(|e| invalid("region", e.to_string()))?;

    let message = result
        .message
        .as_ref()
        .and_then(|m| m.text.as_deref())
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .unwrap_or_else(|| pattern_id.clone());
    let category = category_of(result.properties.as_ref())
        .or_else(|| rules.iter().find(|r| r.id == pattern_id).and_then(|r| category_of(r.properties.as_ref())))
        .unwrap_or_default();

    Ok(Finding { fingerprint: Fingerprint::default(), pattern_id, category, message, severity, confidence, location })
}
