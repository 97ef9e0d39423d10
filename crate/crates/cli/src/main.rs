//! `warden`: ingest analyzer reports, triage the findings and share fix
//! knowledge, offline against `<project>/.warden/` or through a sync server.
//!
//! Exit status is 0 on success, 1 when a request is rejected (bad flags,
//! malformed reports, unknown ids) and 2 when state cannot be read or written.

mod error;
mod remote;
mod render;
mod workspace;

use std::collections::BTreeMap;
use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use warden_core::fixtime::{FixEstimate, FixRecord};
use warden_core::impact::MetricDirection;
use warden_core::ingest::{parse_report, to_canonical_json, ReportFormat, RunMeta};
use warden_core::knowledge::{Comment, Solution, VoteDirection};
use warden_core::model::FpMode;
use warden_core::triage::{Preset, TriageConfig};
use warden_core::{Confidence, Fingerprint, SeverityRank};
use warden_server::{Server, ServerConfig, StoreOptions, TriageChange};

use crate::error::CliError;
use crate::remote::Remote;
use crate::workspace::{Workspace, PROJECT_ID};

#[derive(Debug, Parser)]
#[command(name = "warden", version, about = "Static-analysis warning triage")]
struct Cli {
    /// Project root; local state lives in `<project>/.warden/`.
    #[arg(long, global = true, default_value = ".")]
    project: PathBuf,
    /// Sync server for comments, solutions and fix times.
    #[arg(long, global = true, env = "WARDEN_SERVER")]
    server: Option<String>,
    /// Print canonical JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Cut a damaged journal back to its last complete event before opening.
    #[arg(long, global = true)]
    repair_journal: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a report and store it as the project's latest run.
    Ingest {
        #[arg(long, default_value = "findbugs")]
        format: ReportFormat,
        /// JSON object of metric name to value, attached to the run.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Run time for formats that do not record one (default: now).
        #[arg(long)]
        timestamp: Option<DateTime<Utc>>,
        report: PathBuf,
    },
    /// Print the triage view of the latest run.
    Triage(TriageArgs),
    /// Mark or unmark a finding as a false positive.
    Fp {
        #[command(subcommand)]
        action: FpAction,
    },
    /// Override or restore a finding's severity rank.
    Severity {
        #[command(subcommand)]
        action: SeverityAction,
    },
    Comment {
        #[command(subcommand)]
        action: CommentAction,
    },
    Solution {
        #[command(subcommand)]
        action: SolutionAction,
    },
    Fixtime {
        #[command(subcommand)]
        action: FixtimeAction,
    },
    Metrics {
        #[command(subcommand)]
        action: MetricsAction,
    },
    /// Run the sync server.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        storage: PathBuf,
    },
    /// Triage view plus fix-time estimates for every pattern in the latest run.
    Report(TriageArgs),
}

#[derive(Debug, Args)]
struct TriageArgs {
    #[arg(long)]
    level: Option<u8>,
    #[arg(long)]
    min_confidence: Option<Confidence>,
    #[arg(long)]
    max_rank: Option<i64>,
    #[arg(long)]
    cap: Option<usize>,
    /// Seed for the level-6 pick (default: derived from the run id).
    #[arg(long)]
    seed: Option<u64>,
    /// `full` (level 5, default thresholds) or `none` (level 0).
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    fp_mode: Option<FpMode>,
}

impl TriageArgs {
    fn config(&self) -> Result<TriageConfig, CliError> {
        let mut config = TriageConfig::default();
        if let Some(level) = self.level {
            config.level = level;
        }
        if let Some(c) = self.min_confidence {
            config.min_confidence = c;
        }
        if let Some(rank) = self.max_rank {
            config.max_rank = SeverityRank::new(rank).map_err(|e| CliError::invalid(e.to_string()))?;
        }
        if let Some(cap) = self.cap {
            config.cap = NonZeroUsize::new(cap).ok_or_else(|| CliError::invalid("--cap must be at least 1"))?;
        }
        config.random_seed = self.seed;
        if let Some(mode) = self.fp_mode {
            config.fp_mode = mode;
        }
        if let Some(preset) = self.preset {
            config.preset = preset;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Subcommand)]
enum FpAction {
    Mark { fingerprint: String },
    Unmark { fingerprint: String },
}

#[derive(Debug, Subcommand)]
enum SeverityAction {
    Set {
        fingerprint: String,
        #[arg(allow_negative_numbers = true)]
        rank: i64,
    },
    Clear {
        fingerprint: String,
    },
}

#[derive(Debug, Subcommand)]
enum CommentAction {
    Add {
        pattern_id: String,
        text: String,
        /// Attach the comment to one finding instead of the whole pattern.
        #[arg(long)]
        fingerprint: Option<String>,
        #[arg(long)]
        author: Option<String>,
    },
    List {
        pattern_id: String,
    },
}

#[derive(Debug, Subcommand)]
enum SolutionAction {
    Add {
        pattern_id: String,
        text: String,
        #[arg(long)]
        code_snippet: Option<String>,
    },
    Vote {
        solution_id: String,
        direction: VoteDirection,
    },
    List {
        pattern_id: String,
    },
}

#[derive(Debug, Subcommand)]
enum FixtimeAction {
    Record {
        pattern_id: String,
        #[arg(allow_negative_numbers = true)]
        minutes: f64,
    },
    Estimate {
        pattern_id: String,
    },
}

#[derive(Debug, Subcommand)]
enum MetricsAction {
    /// Fitted per-pattern effect on each metric.
    Impact,
    /// Patterns whose removal moves a metric the most in the wanted direction.
    Recommend {
        #[arg(long)]
        metric: String,
        #[arg(long)]
        direction: MetricDirection,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(error::EXIT_VALIDATION) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Either canonical JSON of `value` or the text produced by `human`.
fn emit<T: Serialize>(json: bool, value: &T, human: impl FnOnce(&T) -> String) {
    if json {
        // Canonical JSON is already newline-terminated.
        print!("{}", String::from_utf8(to_canonical_json(value)).expect("canonical JSON is UTF-8"));
    } else {
        print!("{}", human(value));
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let json = cli.json;
    let remote = cli.server.as_deref().map(Remote::new).transpose()?;
    let local = || Workspace::open(&cli.project, cli.repair_journal);
    let now = Utc::now();

    match &cli.command {
        Command::Ingest { format, metrics, timestamp, report } => {
            let bytes = read(report)?;
            let run = parse_report(*format, &bytes, &RunMeta::at(timestamp.unwrap_or(now)))?;
            let metrics = match metrics {
                Some(path) => Some(
                    serde_json::from_slice::<BTreeMap<String, f64>>(&read(path)?)
                        .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?,
                ),
                None => None,
            };
            let mut ws = local()?;
            let total = run.findings.len();
            let accepted = ws.store.add_run(PROJECT_ID, run, metrics, None, now)?;
            emit(json, &accepted, |a| render::accepted(a, total));
        }
        Command::Triage(args) => {
            let config = args.config()?;
            let ws = local()?;
            let view = ws.store.view(PROJECT_ID, &config)?;
            let triage = &ws.store.project(PROJECT_ID)?.triage;
            emit(json, &view, |v| render::view(v, triage));
        }
        Command::Report(args) => {
            let config = args.config()?;
            let ws = local()?;
            let report = ws.store.report(PROJECT_ID, &config)?;
            let triage = &ws.store.project(PROJECT_ID)?.triage;
            emit(json, &report, |r| render::report(r, triage));
        }
        Command::Fp { action } => {
            let mut ws = local()?;
            let (change, done) = match action {
                FpAction::Mark { fingerprint } => {
                    let fingerprint = known_fingerprint(&ws, fingerprint, false)?;
                    (TriageChange::FpMarked { fingerprint, at: now }, "marked as false positive")
                }
                FpAction::Unmark { fingerprint } => {
                    let fingerprint = known_fingerprint(&ws, fingerprint, true)?;
                    (TriageChange::FpUnmarked { fingerprint }, "unmarked")
                }
            };
            triage_edit(&mut ws, change, done, json, now)?;
        }
        Command::Severity { action } => {
            let mut ws = local()?;
            let (change, done) = match action {
                SeverityAction::Set { fingerprint, rank } => {
                    let rank = SeverityRank::new(*rank).map_err(|e| CliError::invalid(e.to_string()))?;
                    let fingerprint = known_fingerprint(&ws, fingerprint, false)?;
                    (TriageChange::OverrideSet { fingerprint, rank }, "severity overridden")
                }
                SeverityAction::Clear { fingerprint } => {
                    let fingerprint = known_fingerprint(&ws, fingerprint, true)?;
                    (TriageChange::OverrideCleared { fingerprint }, "severity override cleared")
                }
            };
            triage_edit(&mut ws, change, done, json, now)?;
        }
        Command::Comment { action } => match action {
            CommentAction::Add { pattern_id, text, fingerprint, author } => {
                let comment: Comment = match &remote {
                    Some(r) => r.post(
                        &["patterns", pattern_id, "comments"],
                        &json!({ "text": text, "author": author, "fingerprint": fingerprint }),
                    )?,
                    None => local()?.store.add_comment(
                        pattern_id,
                        text,
                        author.clone(),
                        fingerprint.clone().map(Fingerprint::new),
                        now,
                    )?,
                };
                emit(json, &comment, |c| format!("added comment {}\n", c.comment_id));
            }
            CommentAction::List { pattern_id } => {
                let comments: Vec<Comment> = match &remote {
                    Some(r) => r.get(&["patterns", pattern_id, "comments"])?,
                    None => local()?.store.comments(pattern_id),
                };
                emit(json, &comments, |c| render::comments(c));
            }
        },
        Command::Solution { action } => match action {
            SolutionAction::Add { pattern_id, text, code_snippet } => {
                let solution: Solution = match &remote {
                    Some(r) => r.post(
                        &["patterns", pattern_id, "solutions"],
                        &json!({ "text": text, "codeSnippet": code_snippet }),
                    )?,
                    None => local()?.store.add_solution(pattern_id, text, code_snippet.clone(), now)?,
                };
                emit(json, &solution, |s| format!("added solution {}\n", s.solution_id));
            }
            SolutionAction::Vote { solution_id, direction } => {
                let solution: Solution = match &remote {
                    Some(r) => r.post(&["solutions", solution_id, "votes"], &json!({ "direction": direction }))?,
                    None => local()?.store.vote(solution_id, *direction, now)?,
                };
                emit(json, &solution, |s| render::solutions(std::slice::from_ref(s)));
            }
            SolutionAction::List { pattern_id } => {
                let solutions: Vec<Solution> = match &remote {
                    Some(r) => r.get(&["patterns", pattern_id, "solutions"])?,
                    None => local()?.store.solutions(pattern_id),
                };
                emit(json, &solutions, |s| render::solutions(s));
            }
        },
        Command::Fixtime { action } => match action {
            FixtimeAction::Record { pattern_id, minutes } => {
                let record: FixRecord = match &remote {
                    Some(r) => r.post(&["fixtimes"], &json!({ "patternId": pattern_id, "minutes": minutes }))?,
                    None => local()?.store.record_fix(pattern_id, *minutes, now)?,
                };
                emit(json, &record, |r| format!("recorded {} min for {}\n", r.minutes, r.pattern_id));
            }
            FixtimeAction::Estimate { pattern_id } => {
                let estimate: FixEstimate = match &remote {
                    Some(r) => r.get(&["fixtimes", pattern_id, "estimate"])?,
                    None => local()?.store.estimate(pattern_id),
                };
                emit(json, &estimate, |e| format!("{}\n", e.summary()));
            }
        },
        Command::Metrics { action } => {
            let ws = local()?;
            match action {
                MetricsAction::Impact => {
                    let model = ws.store.impact(PROJECT_ID)?;
                    emit(json, &model, render::impact);
                }
                MetricsAction::Recommend { metric, direction } => {
                    let recs = ws.store.recommendations(PROJECT_ID, metric, *direction)?;
                    emit(json, &recs, |r| render::recommendations(r));
                }
            }
        }
        Command::Serve { addr, storage } => {
            let mut config = ServerConfig::new(addr.clone(), storage.clone());
            config.store = StoreOptions { repair: cli.repair_journal, ..StoreOptions::default() };
            fs::create_dir_all(storage)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let server = Server::bind(config).await?;
                eprintln!("listening on http://{}", server.local_addr());
                server
                    .run_until(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                Ok::<_, CliError>(())
            })?;
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Resolve a fingerprint named on the command line. It must occur in the
/// latest run, or, with `or_marked`, carry a mark that could be removed.
fn known_fingerprint(ws: &Workspace, raw: &str, or_marked: bool) -> Result<Fingerprint, CliError> {
    let fingerprint = Fingerprint::new(raw);
    let unknown = || CliError::invalid(format!("unknown fingerprint `{raw}`"));
    let project = ws.store.project(PROJECT_ID).map_err(|_| unknown())?;
    let in_run = project.latest_run().is_some_and(|r| r.finding(&fingerprint).is_some());
    let marked = project.triage.false_positives.contains_key(&fingerprint)
        || project.triage.severity_overrides.contains_key(&fingerprint);
    if in_run || (or_marked && marked) {
        Ok(fingerprint)
    } else {
        Err(unknown())
    }
}

fn triage_edit(
    ws: &mut Workspace,
    change: TriageChange,
    done: &str,
    json: bool,
    now: DateTime<Utc>,
) -> Result<(), CliError> {
    let fingerprint = match &change {
        TriageChange::FpMarked { fingerprint, .. }
        | TriageChange::FpUnmarked { fingerprint }
        | TriageChange::OverrideSet { fingerprint, .. }
        | TriageChange::OverrideCleared { fingerprint } => fingerprint.clone(),
    };
    let doc = ws.store.edit_triage(PROJECT_ID, None, vec![change], now)?;
    emit(json, &doc, |d| format!("{fingerprint}: {done} (triage version {})\n", d.version));
    Ok(())
}
