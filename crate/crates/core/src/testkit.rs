//! Seeded generators for tests. Enabled by the `testkit` feature.

use chrono::{TimeZone, Utc};
use rand::Rng;

use crate::identity::assign_fingerprints;
use crate::model::{AnalysisRun, Confidence, Finding, Fingerprint, SeverityRank, SourceLocation, TriageState};

const PATTERNS: [&str; 6] = [
    "NP_NULL_ON_SOME_PATH",
    "DM_DEFAULT_ENCODING",
    "IS2_INCONSISTENT_SYNC",
    "SE_BAD_FIELD",
    "EI_EXPOSE_REP",
    "URF_UNREAD_FIELD",
];
const METHODS: [&str; 3] = ["run()V", "load(Ljava/lang/String;)V", "close()V"];

pub fn run_with(run_id: &str, mut findings: Vec<Finding>) -> AnalysisRun {
    assign_fingerprints(&mut findings);
    AnalysisRun {
        run_id: run_id.to_owned(),
        timestamp: Utc.timestamp_opt(1_700_000_000, 0).unwrap(),
        tool_name: "findbugs".to_owned(),
        tool_version: "3.0.1".to_owned(),
        findings,
        metrics: None,
    }
}

pub fn random_finding<R: Rng>(rng: &mut R, files: usize) -> Finding {
    let pattern = PATTERNS[rng.random_range(0..PATTERNS.len())];
    let file = rng.random_range(0..files.max(1));
    let start = rng.random_range(1..400u32);
    let method = if rng.random_bool(0.7) { Some(METHODS[rng.random_range(0..METHODS.len())].to_owned()) } else { None };
    Finding {
        fingerprint: Fingerprint::default(),
        pattern_id: pattern.to_owned(),
        category: "CORRECTNESS".to_owned(),
        message: format!("{pattern} in file {file}"),
        severity: SeverityRank::new(rng.random_range(1..=20)).unwrap(),
        confidence: Confidence::ALL[rng.random_range(0..3)],
        location: SourceLocation {
            class_name: Some(format!("com.acme.C{file}")),
            method_signature: method,
            ..SourceLocation::new(&format!("com/acme/C{file}.java"))
                .with_lines(Some(start), Some(start + rng.random_range(0..5)))
        },
    }
}

/// A run with up to `max_findings` findings spread over a handful of files.
pub fn random_run<R: Rng>(rng: &mut R, run_id: &str, max_findings: usize) -> AnalysisRun {
    let n = rng.random_range(0..=max_findings);
    let files = rng.random_range(1..=6);
    run_with(run_id, (0..n).map(|_| random_finding(rng, files)).collect())
}

/// Random false-positive marks and severity overrides over the run's findings.
pub fn random_triage<R: Rng>(rng: &mut R, run: &AnalysisRun) -> TriageState {
    let mut triage = TriageState::default();
    let at = Utc.timestamp_opt(1_700_000_000, 0).unwrap();
    for f in &run.findings {
        if rng.random_bool(0.15) {
            triage.mark_false_positive(f.fingerprint.clone(), at);
        }
        if rng.random_bool(0.15) {
            triage.set_override(f.fingerprint.clone(), SeverityRank::new(rng.random_range(1..=20)).unwrap());
        }
    }
    triage
}

/// The same run with every start and end line of `file_path` moved by `delta`.
pub fn shift_file(run: &AnalysisRun, file_path: &str, delta: i64) -> AnalysisRun {
    let mut shifted = run.clone();
    for f in &mut shifted.findings {
        if f.location.file_path == file_path {
            let mv = |l: Option<u32>| l.map(|l| (l as i64 + delta).max(1) as u32);
            f.location.start_line = mv(f.location.start_line);
            f.location.end_line = mv(f.location.end_line);
        }
    }
    shifted
}

/// Five findings A..E with E marked false positive:
/// A(2, high) B(2, low) C(7, high) D(16, normal) E(12, high), in that order.
pub fn triage_fixture() -> (AnalysisRun, TriageState, [Fingerprint; 5]) {
    let spec: [(&str, i64, Confidence, u32); 5] = [
        ("NP_NULL_ON_SOME_PATH", 2, Confidence::High, 10),
        ("RCN_REDUNDANT_NULLCHECK", 2, Confidence::Low, 20),
        ("IS2_INCONSISTENT_SYNC", 7, Confidence::High, 30),
        ("DM_DEFAULT_ENCODING", 16, Confidence::Normal, 40),
        ("SE_BAD_FIELD", 12, Confidence::High, 50),
    ];
    let findings = spec
        .iter()
        .map(|(pattern, rank, confidence, line)| Finding {
            fingerprint: Fingerprint::default(),
            pattern_id: (*pattern).to_owned(),
            category: "CORRECTNESS".to_owned(),
            message: format!("{pattern} in Stock"),
            severity: SeverityRank::new(*rank).unwrap(),
            confidence: *confidence,
            location: SourceLocation {
                class_name: Some("com.acme.Stock".to_owned()),
                ..SourceLocation::new("com/acme/Stock.java").with_lines(Some(*line), Some(*line))
            },
        })
        .collect();
    let run = run_with("fixture", findings);
    let ids: [Fingerprint; 5] = std::array::from_fn(|i| run.findings[i].fingerprint.clone());
    let mut triage = TriageState::default();
    triage.mark_false_positive(ids[4].clone(), Utc.timestamp_opt(1_700_000_000, 0).unwrap());
    (run, triage, ids)
}
