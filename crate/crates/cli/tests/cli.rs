use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use warden_core::fixtime::{self, FixRecord, RecordSource};
use warden_core::ingest::{serialize_run, to_canonical_json};
use warden_core::testkit::triage_fixture;
use warden_core::triage::{apply_level, TriageConfig};
use warden_core::{AnalysisRun, Fingerprint};
use warden_server::ProjectReport;

fn warden(project: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_warden"))
        .arg("--project")
        .arg(project)
        .args(args)
        .env_remove("WARDEN_SERVER")
        .output()
        .expect("binary runs")
}

fn ok(project: &Path, args: &[&str]) -> String {
    let out = warden(project, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Project with the triage fixture ingested and its false positive marked.
fn fixture_project() -> (tempfile::TempDir, AnalysisRun, [Fingerprint; 5]) {
    let dir = tempfile::tempdir().unwrap();
    let (run, _, ids) = triage_fixture();
    let report = dir.path().join("fixture.json");
    std::fs::write(&report, serialize_run(&run)).unwrap();
    ok(dir.path(), &["ingest", "--format", "canonical", report.to_str().unwrap()]);
    ok(dir.path(), &["fp", "mark", ids[4].as_str()]);
    (dir, run, ids)
}

fn rows(stdout: &str) -> Vec<&str> {
    stdout.lines().skip(1).collect()
}

#[test]
fn level_zero_lists_every_finding_in_ingest_order() {
    let (dir, _, ids) = fixture_project();
    let out = ok(dir.path(), &["triage", "--level", "0"]);
    let rows = rows(&out);
    assert_eq!(rows.len(), 5);
    for (row, id) in rows.iter().zip(&ids) {
        assert!(row.starts_with(id.as_str()), "{row}");
    }
    assert!(rows[4].ends_with("[false positive]"));
}

#[test]
fn level_five_prints_the_relaxed_view_with_stage_labels() {
    let (dir, run, _) = fixture_project();
    let (_, triage, _) = triage_fixture();
    let config = TriageConfig { level: 5, ..TriageConfig::default() };
    let expected = apply_level(&run, &triage, &config).unwrap();
    assert_eq!(expected.entries.len(), 4);

    let out = ok(dir.path(), &["triage", "--level", "5", "--cap", "8"]);
    let rows = rows(&out);
    assert_eq!(rows.len(), expected.entries.len());
    for (row, entry) in rows.iter().zip(&expected.entries) {
        assert!(row.starts_with(entry.finding.fingerprint.as_str()), "{row}");
        assert!(row.ends_with(&format!("[{}]", entry.inclusion_stage.label())), "{row}");
    }

    let json = ok(dir.path(), &["--json", "triage", "--level", "5", "--cap", "8"]);
    assert_eq!(json.as_bytes(), to_canonical_json(&expected));
    let preset = ok(dir.path(), &["--json", "triage", "--preset", "full"]);
    assert_eq!(preset, json);
}

#[test]
fn estimate_below_the_sample_gate_is_reported_not_failed() {
    let dir = tempfile::tempdir().unwrap();
    for minutes in ["12", "30", "18.5"] {
        ok(dir.path(), &["fixtime", "record", "NP_NULL_ON_SOME_PATH", minutes]);
    }
    let out = ok(dir.path(), &["fixtime", "estimate", "NP_NULL_ON_SOME_PATH"]);
    assert_eq!(out, "insufficient data (n=3, need 5)\n");
}

#[test]
fn report_json_matches_the_library_result() {
    let (dir, run, _) = fixture_project();
    let minutes = [10.0, 10.0, 50.0, 50.0, 50.0];
    for m in minutes {
        ok(dir.path(), &["fixtime", "record", "IS2_INCONSISTENT_SYNC", &m.to_string()]);
    }
    ok(dir.path(), &["fixtime", "record", "SE_BAD_FIELD", "7"]);

    let (_, triage, _) = triage_fixture();
    let config = TriageConfig { level: 3, ..TriageConfig::default() };
    let record = |pattern: &str, minutes: f64| FixRecord {
        pattern_id: pattern.to_owned(),
        minutes,
        source: RecordSource::Manual,
        recorded_at: chrono::Utc::now(),
    };
    let mut records: Vec<FixRecord> = minutes.iter().map(|&m| record("IS2_INCONSISTENT_SYNC", m)).collect();
    records.push(record("SE_BAD_FIELD", 7.0));
    let mut patterns: Vec<&str> = run.findings.iter().map(|f| f.pattern_id.as_str()).collect();
    patterns.sort_unstable();
    let expected = ProjectReport {
        project_id: "local".to_owned(),
        view: apply_level(&run, &triage, &config).unwrap(),
        estimates: patterns.iter().map(|p| fixtime::estimate(p, &records)).collect(),
    };

    let out = ok(dir.path(), &["report", "--json", "--level", "3"]);
    assert_eq!(out.as_bytes(), to_canonical_json(&expected));
}

#[test]
fn identical_invocations_print_identical_json() {
    let (dir, _, _) = fixture_project();
    for args in [
        &["--json", "triage", "--level", "6"][..],
        &["--json", "triage", "--level", "6", "--seed", "99"],
        &["report", "--json", "--level", "5"],
        &["--json", "fixtime", "estimate", "SE_BAD_FIELD"],
    ] {
        assert_eq!(ok(dir.path(), args), ok(dir.path(), args), "{args:?}");
    }
}

#[test]
fn unknown_fingerprint_exits_one_and_names_it() {
    let (dir, _, ids) = fixture_project();
    for args in [
        &["fp", "mark", "0123456789abcdef"][..],
        &["fp", "unmark", "0123456789abcdef"],
        &["severity", "set", "0123456789abcdef", "3"],
    ] {
        let out = warden(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("0123456789abcdef"));
    }
    // A mark that exists can still be removed.
    ok(dir.path(), &["fp", "unmark", ids[4].as_str()]);
    let out = ok(dir.path(), &["triage", "--level", "1"]);
    assert_eq!(rows(&out).len(), 5);
}

#[test]
fn severity_override_reorders_the_view() {
    let (dir, _, ids) = fixture_project();
    ok(dir.path(), &["severity", "set", ids[3].as_str(), "1"]);
    let out = ok(dir.path(), &["triage", "--level", "2"]);
    assert!(rows(&out)[0].starts_with(ids[3].as_str()), "{out}");
    ok(dir.path(), &["severity", "clear", ids[3].as_str()]);
    let out = ok(dir.path(), &["triage", "--level", "2"]);
    assert!(!rows(&out)[0].starts_with(ids[3].as_str()), "{out}");
}

#[test]
fn exit_codes_separate_validation_from_io() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| warden(dir.path(), args).status.code();
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["triage", "--level", "7"]), Some(1));
    assert_eq!(code(&["triage", "--min-confidence", "certain"]), Some(1));
    assert_eq!(code(&["no-such-command"]), Some(1));
    assert_eq!(code(&["fixtime", "record", "X", "-5"]), Some(1));
    assert_eq!(code(&["ingest", "missing.xml"]), Some(2));

    let bad = dir.path().join("bad.xml");
    std::fs::write(&bad, "<BugCollection><BugInstance").unwrap();
    assert_eq!(code(&["ingest", bad.to_str().unwrap()]), Some(1));

    let missing = dir.path().join("nowhere");
    let out = warden(&missing, &["triage"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn damaged_journal_needs_explicit_repair() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["fixtime", "record", "P", "10"]);
    ok(dir.path(), &["fixtime", "record", "P", "20"]);
    let journal = dir.path().join(".warden/journal.ndjson");
    let bytes = std::fs::read(&journal).unwrap();
    std::fs::write(&journal, &bytes[..bytes.len() - 4]).unwrap();

    let out = warden(dir.path(), &["fixtime", "estimate", "P"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--repair-journal"));
    let out = ok(dir.path(), &["--repair-journal", "fixtime", "estimate", "P"]);
    assert_eq!(out, "insufficient data (n=1, need 5)\n");
}

#[test]
fn findbugs_reports_get_content_addressed_run_ids() {
    let dir = tempfile::tempdir().unwrap();
    let xml = r#"<BugCollection version="4.8.3">
  <BugInstance type="NP_NULL_ON_SOME_PATH" priority="1" rank="3" category="CORRECTNESS">
    <ShortMessage>Possible null dereference</ShortMessage>
    <SourceLine classname="com.acme.Stock" start="12" end="12" sourcepath="com/acme/Stock.java"/>
  </BugInstance>
</BugCollection>"#;
    let report = dir.path().join("bugs.xml");
    std::fs::write(&report, xml).unwrap();
    let path = report.to_str().unwrap();
    let first = ok(dir.path(), &["ingest", "--timestamp", "2024-05-01T10:00:00Z", path]);
    assert!(first.contains("1 findings"), "{first}");
    let again = warden(dir.path(), &["ingest", "--timestamp", "2024-05-01T10:00:00Z", path]);
    assert_eq!(again.status.code(), Some(1), "same report twice is the same run");
}

struct ServerProcess(Child);

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn knowledge_and_fix_times_go_to_the_server_when_configured() {
    let storage = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_warden"))
        .args(["serve", "--addr", "127.0.0.1:0", "--storage"])
        .arg(storage.path())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let stderr = child.stderr.take().unwrap();
    let server = ServerProcess(child);
    let url = BufReader::new(stderr)
        .lines()
        .map_while(Result::ok)
        .find_map(|l| l.strip_prefix("listening on ").map(str::to_owned))
        .expect("server announces its address");

    // Two unrelated project directories share the server's knowledge.
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let remote = |project: &Path, args: &[&str]| {
        let mut full = vec!["--server", url.as_str()];
        full.extend_from_slice(args);
        ok(project, &full)
    };
    for m in ["10", "10", "50", "50", "50"] {
        remote(a.path(), &["fixtime", "record", "DM_DEFAULT_ENCODING", m]);
    }
    assert_eq!(remote(b.path(), &["fixtime", "estimate", "DM_DEFAULT_ENCODING"]), "50 ± 20 min (n=5)\n");

    let added = remote(a.path(), &["--json", "solution", "add", "DM_DEFAULT_ENCODING", "Pass a charset"]);
    let id = serde_json::from_str::<serde_json::Value>(&added).unwrap()["solutionId"].as_str().unwrap().to_owned();
    remote(b.path(), &["solution", "vote", &id, "up"]);
    let listed = remote(a.path(), &["--json", "solution", "list", "DM_DEFAULT_ENCODING"]);
    assert_eq!(serde_json::from_str::<serde_json::Value>(&listed).unwrap()[0]["upVotes"], 1);

    remote(b.path(), &["comment", "add", "DM_DEFAULT_ENCODING", "seen in Stock too"]);
    assert!(remote(a.path(), &["comment", "list", "DM_DEFAULT_ENCODING"]).contains("seen in Stock too"));

    let out = warden(a.path(), &["--server", url.as_str(), "solution", "vote", "no-such-id", "up"]);
    assert_eq!(out.status.code(), Some(1));
    // Nothing was written locally.
    assert!(!a.path().join(".warden").exists());
    drop(server);

    let out = warden(a.path(), &["--server", url.as_str(), "fixtime", "estimate", "X"]);
    assert_eq!(out.status.code(), Some(2), "unreachable server is an I/O failure");
}

#[test]
fn concurrent_invocations_on_one_project_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let children: Vec<Child> = (0..8)
        .map(|i| {
            Command::new(env!("CARGO_BIN_EXE_warden"))
                .arg("--project")
                .arg(dir.path())
                .args(["fixtime", "record", "P", &(10 + i).to_string()])
                .env_remove("WARDEN_SERVER")
                .stdout(Stdio::null())
                .spawn()
                .unwrap()
        })
        .collect();
    for mut c in children {
        assert!(c.wait().unwrap().success());
    }
    let out = ok(dir.path(), &["--json", "fixtime", "estimate", "P"]);
    let estimate: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(estimate["sampleCount"], 8);
    assert_eq!(estimate["median"], 13.5);
}

#[test]
fn metrics_commands_match_the_library_fit() {
    use warden_core::impact::{build_deltas, fit_impact, recommend, MetricDirection};
    use warden_core::ingest::parse_canonical;
    use warden_core::MetricsSnapshot;

    let dir = tempfile::tempdir().unwrap();
    let (base, _, _) = triage_fixture();
    // Drop IS2 first, then DM as well; complexity falls 3 and then 2 more.
    let steps: [(&str, &[&str], f64); 3] = [
        ("r0", &[], 100.0),
        ("r1", &["IS2_INCONSISTENT_SYNC"], 97.0),
        ("r2", &["IS2_INCONSISTENT_SYNC", "DM_DEFAULT_ENCODING"], 95.0),
    ];
    let mut history = Vec::new();
    for (id, dropped, complexity) in steps {
        let mut run = base.clone();
        run.run_id = id.to_owned();
        run.findings.retain(|f| !dropped.contains(&f.pattern_id.as_str()));
        let report = dir.path().join(format!("{id}.json"));
        let metrics = dir.path().join(format!("{id}.metrics.json"));
        std::fs::write(&report, serialize_run(&run)).unwrap();
        std::fs::write(&metrics, format!("{{\"complexity\": {complexity}}}")).unwrap();
        let (report, metrics) = (report.to_str().unwrap(), metrics.to_str().unwrap());
        ok(dir.path(), &["ingest", "--format", "canonical", "--metrics", metrics, report]);

        let mut stored = parse_canonical(&serialize_run(&run)).unwrap();
        stored.metrics =
            Some(MetricsSnapshot { run_id: id.to_owned(), values: [("complexity".to_owned(), complexity)].into() });
        history.push(stored);
    }
    let model = fit_impact(&build_deltas(&history).unwrap());
    assert_eq!(ok(dir.path(), &["--json", "metrics", "impact"]).as_bytes(), to_canonical_json(&model));

    let counts = history.last().unwrap().pattern_counts();
    let recs = recommend(&model, "complexity", MetricDirection::Decrease, &counts).unwrap();
    let out = ok(dir.path(), &["--json", "metrics", "recommend", "--metric", "complexity", "--direction", "decrease"]);
    assert_eq!(out.as_bytes(), to_canonical_json(&recs));

    let out = warden(dir.path(), &["metrics", "recommend", "--metric", "coupling", "--direction", "decrease"]);
    assert_eq!(out.status.code(), Some(1));
}
