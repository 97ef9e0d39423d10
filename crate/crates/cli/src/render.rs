//! Text output. Layout only; every ordering comes from the engine.

use std::fmt::Write;

use warden_core::impact::{ImpactModel, Recommendation};
use warden_core::knowledge::{Comment, Solution};
use warden_core::triage::TriageView;
use warden_core::{effective_severity, FpTreatment, TriageState};
use warden_server::store::RunAccepted;
use warden_server::ProjectReport;

pub fn accepted(a: &RunAccepted, total: usize) -> String {
    let mut out = format!(
        "stored run {}: {total} findings ({} persisted, {} introduced, {} resolved)\n",
        a.run_id,
        a.persisted,
        a.introduced,
        a.resolved.len()
    );
    for r in &a.fix_records {
        let _ = writeln!(out, "derived fix time: {} {:.1} min", r.pattern_id, r.minutes);
    }
    out
}

pub fn view(v: &TriageView, triage: &TriageState) -> String {
    let mut out = format!("run {}  level {}  {} finding(s)\n", v.run_id, v.level_applied, v.entries.len());
    let staged = v.level_applied >= 5;
    for e in &v.entries {
        let f = &e.finding;
        let rank = effective_severity(f, triage);
        let line = f.location.start_line.map(|l| format!(":{l}")).unwrap_or_default();
        let _ = write!(
            out,
            "{}  {:>2} {:<10} {:<6}  {}  {}{line}",
            f.fingerprint,
            rank.get(),
            rank.band().label(),
            f.confidence.as_str().to_ascii_lowercase(),
            f.pattern_id,
            f.location.file_path,
        );
        if staged {
            let _ = write!(out, "  [{}]", e.inclusion_stage.label());
        }
        if e.style.fp_treatment != FpTreatment::None {
            out.push_str("  [false positive]");
        }
        out.push('\n');
    }
    out
}

pub fn report(r: &ProjectReport, triage: &TriageState) -> String {
    let mut out = view(&r.view, triage);
    out.push_str("fix-time estimates:\n");
    for e in &r.estimates {
        let _ = writeln!(out, "  {}: {}", e.pattern_id, e.summary());
    }
    out
}

pub fn comments(comments: &[Comment]) -> String {
    let mut out = String::new();
    for c in comments {
        let scope = c.fingerprint.as_ref().map(|f| format!(" on {f}")).unwrap_or_default();
        let author = c.author.as_deref().unwrap_or("anonymous");
        let _ = writeln!(out, "{}  {author}{scope}: {}", c.created_at.format("%Y-%m-%d"), c.text);
    }
    out
}

pub fn solutions(solutions: &[Solution]) -> String {
    let mut out = String::new();
    for s in solutions {
        let _ = writeln!(out, "{}  {:+} (+{}/-{})  {}", s.solution_id, s.net_score(), s.up_votes, s.down_votes, s.text);
        if let Some(code) = &s.code_snippet {
            for line in code.lines() {
                let _ = writeln!(out, "    {line}");
            }
        }
    }
    out
}

pub fn impact(model: &ImpactModel) -> String {
    let mut out = String::new();
    for (metric, fit) in &model.per_metric {
        let _ = write!(out, "{metric}  ({} observation pairs", fit.observation_pairs);
        if fit.underdetermined {
            let _ = writeln!(out, ", underdetermined: {} active patterns)", fit.active_patterns);
            continue;
        }
        let _ = writeln!(out, ", residual {:.4})", fit.residual_norm);
        for (pattern, beta) in &fit.betas {
            let _ = writeln!(out, "  {pattern}  {beta:+.4} per finding");
        }
    }
    out
}

pub fn recommendations(recs: &[Recommendation]) -> String {
    let mut out = String::new();
    for r in recs {
        let _ = writeln!(out, "{}  {:+.4}", r.pattern_id, r.projected_delta);
    }
    out
}
