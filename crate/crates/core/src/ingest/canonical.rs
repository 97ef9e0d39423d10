use serde::{Deserialize, Serialize};

use super::{validate_metrics, IngestError};
use crate::identity::assign_fingerprints;
use crate::model::AnalysisRun;

pub const CANONICAL_SCHEMA: &str = "findings-v1";

#[derive(Serialize)]
struct Envelope<'a> {
    schema: &'a str,
    run: &'a AnalysisRun,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OwnedEnvelope {
    schema: String,
    run: AnalysisRun,
}

/// Canonical JSON encoding used for every machine-readable output: key order
/// is the declaration order of the serialized types, two-space indentation,
/// trailing newline.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("domain types always serialize");
    out.push(b'\n');
    out
}

pub fn serialize_run(run: &AnalysisRun) -> Vec<u8> {
    to_canonical_json(&Envelope { schema: CANONICAL_SCHEMA, run })
}

/// Parse a `findings-v1` document, validating every finding and checking
/// that each fingerprint matches the identity rule.
pub fn parse_canonical(bytes: &[u8]) -> Result<AnalysisRun, IngestError> {
    let envelope: OwnedEnvelope =
        serde_json::from_slice(bytes).map_err(|e| IngestError::MalformedReport(e.to_string()))?;
    if envelope.schema != CANONICAL_SCHEMA {
        return Err(IngestError::UnsupportedVersion(envelope.schema));
    }
    let run = envelope.run;

    for (index, f) in run.findings.iter().enumerate() {
        f.validate().map_err(|e| IngestError::invalid("finding", index, "finding", e.to_string()))?;
    }
    let mut expected = run.findings.clone();
    assign_fingerprints(&mut expected);
    for (index, (have, want)) in run.findings.iter().zip(&expected).enumerate() {
        if have.fingerprint != want.fingerprint {
            return Err(IngestError::invalid(
                "finding",
                index,
                "fingerprint",
                format!("`{}` does not match computed `{}`", have.fingerprint, want.fingerprint),
            ));
        }
    }
    if let Some(metrics) = &run.metrics {
        if metrics.run_id != run.run_id {
            return Err(IngestError::invalid("metrics", 0, "runId", "snapshot belongs to another run"));
        }
        validate_metrics(metrics)?;
    }
    Ok(run)
}
