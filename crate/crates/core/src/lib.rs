//! Triage engine for static-analysis findings.
//!
//! * [`ingest`] reads FindBugs XML, SARIF and the canonical JSON form.
//! * [`identity`] fingerprints findings and matches them across runs.
//! * [`triage`] applies the information levels that reduce a run to the
//!   findings worth looking at now.
//! * [`knowledge`] keeps shared comments and voted solutions per pattern.
//! * [`fixtime`] records fix durations and predicts them per pattern.
//! * [`impact`] relates finding counts to code metric movements.

pub mod fixtime;
pub mod identity;
pub mod impact;
pub mod ingest;
pub mod knowledge;
pub mod model;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod triage;

pub use model::{
    display_style, effective_severity, AnalysisRun, Confidence, DisplayStyle, Finding, Fingerprint, FpMode,
    FpTreatment, MetricsSnapshot, SeverityBand, SeverityRank, SourceLocation, TriageState,
};
