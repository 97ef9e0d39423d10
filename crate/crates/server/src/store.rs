//! Durable store shared by the HTTP API and the offline CLI.
//!
//! All writes go through [`Store::commit`]: the event is validated against the
//! current state, appended to the journal, then applied. Replaying the journal
//! from the last snapshot therefore rebuilds the same state.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;
use warden_core::fixtime::{self, FixEstimate, FixRecord, FixTimeError};
use warden_core::identity::{carry_forward, match_runs, RetentionPolicy, DEFAULT_LINE_WINDOW};
use warden_core::impact::{self, ImpactError, ImpactModel, MetricDirection, Recommendation};
use warden_core::ingest::{validate_metrics, IngestError};
use warden_core::knowledge::{Comment, KnowledgeBase, KnowledgeError, PurgePolicy, Solution, VoteDirection};
use warden_core::triage::{apply_level, TriageConfig, TriageError, TriageView};
use warden_core::{AnalysisRun, Fingerprint, MetricsSnapshot, SeverityRank, TriageState};

use crate::journal::{self, Journal, JournalError};

/// Events between snapshots unless configured otherwise.
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 100;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid request: {0}")]
    Invalid(String),
}

impl From<KnowledgeError> for StoreError {
    fn from(e: KnowledgeError) -> Self {
        match e {
            KnowledgeError::UnknownSolution(_) => StoreError::NotFound(e.to_string()),
            KnowledgeError::DuplicateId(_) => StoreError::Conflict(e.to_string()),
            _ => StoreError::Invalid(e.to_string()),
        }
    }
}

impl From<ImpactError> for StoreError {
    fn from(e: ImpactError) -> Self {
        match e {
            ImpactError::UnknownMetric(_) => StoreError::NotFound(e.to_string()),
            _ => StoreError::Invalid(e.to_string()),
        }
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for StoreError {
            fn from(e: $t) -> Self {
                StoreError::Invalid(e.to_string())
            }
        }
    )*};
}
invalid_from!(FixTimeError, IngestError, TriageError);

/// One edit to a project's triage state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TriageChange {
    FpMarked { fingerprint: Fingerprint, at: DateTime<Utc> },
    FpUnmarked { fingerprint: Fingerprint },
    OverrideSet { fingerprint: Fingerprint, rank: SeverityRank },
    OverrideCleared { fingerprint: Fingerprint },
}

/// A journaled state change. Events carry every id and timestamp they need,
/// so applying one never consults the clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Event {
    CommentAdded {
        comment: Comment,
    },
    SolutionAdded {
        solution: Solution,
    },
    #[serde(rename_all = "camelCase")]
    VoteCast {
        solution_id: String,
        direction: VoteDirection,
    },
    FixRecorded {
        record: FixRecord,
    },
    Purged {
        removed: Vec<String>,
    },
    #[serde(rename_all = "camelCase")]
    TriageEdited {
        project_id: String,
        changes: Vec<TriageChange>,
    },
    #[serde(rename_all = "camelCase")]
    RunAdded {
        project_id: String,
        run: AnalysisRun,
        at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectState {
    /// Uploaded runs, oldest first.
    pub runs: Vec<AnalysisRun>,
    pub triage: TriageState,
    /// Bumped by every triage edit and every run upload.
    pub triage_version: u64,
}

impl ProjectState {
    pub fn latest_run(&self) -> Option<&AnalysisRun> {
        self.runs.last()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoreState {
    pub knowledge: KnowledgeBase,
    pub fix_records: Vec<FixRecord>,
    pub projects: BTreeMap<String, ProjectState>,
}

impl StoreState {
    fn project(&self, project_id: &str) -> Result<&ProjectState, StoreError> {
        self.projects.get(project_id).ok_or_else(|| StoreError::NotFound(format!("project `{project_id}`")))
    }

    /// Check that `event` can be applied without changing anything.
    pub fn check(&self, event: &Event) -> Result<(), StoreError> {
        let non_empty = |text: &str| {
            if text.trim().is_empty() {
                Err(StoreError::from(KnowledgeError::EmptyText))
            } else {
                Ok(())
            }
        };
        match event {
            Event::CommentAdded { comment } => {
                non_empty(&comment.text)?;
                if self.knowledge.comment(&comment.comment_id).is_some() {
                    return Err(KnowledgeError::DuplicateId(comment.comment_id.clone()).into());
                }
            }
            Event::SolutionAdded { solution } => {
                non_empty(&solution.text)?;
                if self.knowledge.solution(&solution.solution_id).is_some() {
                    return Err(KnowledgeError::DuplicateId(solution.solution_id.clone()).into());
                }
            }
            Event::VoteCast { solution_id, .. } => {
                if self.knowledge.solution(solution_id).is_none() {
                    return Err(KnowledgeError::UnknownSolution(solution_id.clone()).into());
                }
            }
            Event::FixRecorded { record } => {
                if record.pattern_id.trim().is_empty() {
                    return Err(StoreError::Invalid("patternId must not be empty".into()));
                }
                if !(record.minutes.is_finite() && record.minutes > 0.0) {
                    return Err(FixTimeError::NonPositiveDuration(record.minutes).into());
                }
            }
            Event::Purged { .. } => {}
            Event::TriageEdited { project_id, .. } => {
                self.project(project_id)?;
            }
            Event::RunAdded { project_id, run, .. } => {
                if let Some(p) = self.projects.get(project_id) {
                    if p.runs.iter().any(|r| r.run_id == run.run_id) {
                        return Err(StoreError::Conflict(format!("run `{}` already uploaded", run.run_id)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Check and apply `event`; on error the state is unchanged.
    pub fn apply(&mut self, event: &Event) -> Result<(), StoreError> {
        self.check(event)?;
        match event.clone() {
            Event::CommentAdded { comment: c } => {
                self.knowledge.add_comment(
                    c.comment_id,
                    &c.pattern_id,
                    &c.text,
                    c.author,
                    c.fingerprint,
                    c.created_at,
                )?;
            }
            Event::SolutionAdded { solution: s } => {
                self.knowledge.add_solution(s.solution_id, &s.pattern_id, &s.text, s.code_snippet, s.created_at)?;
            }
            Event::VoteCast { solution_id, direction } => {
                self.knowledge.vote_solution(&solution_id, direction)?;
            }
            Event::FixRecorded { record } => self.fix_records.push(record),
            Event::Purged { removed } => self.knowledge.remove_solutions(&removed),
            Event::TriageEdited { project_id, changes } => {
                let project = self.projects.get_mut(&project_id).expect("checked");
                let triage = &mut project.triage;
                for change in changes {
                    match change {
                        TriageChange::FpMarked { fingerprint, at } => triage.mark_false_positive(fingerprint, at),
                        TriageChange::FpUnmarked { fingerprint } => {
                            triage.unmark_false_positive(&fingerprint);
                        }
                        TriageChange::OverrideSet { fingerprint, rank } => triage.set_override(fingerprint, rank),
                        TriageChange::OverrideCleared { fingerprint } => {
                            triage.severity_overrides.remove(&fingerprint);
                        }
                    }
                }
                let TriageState { false_positives, severity_overrides, dormant } = triage;
                dormant.retain(|fp, _| false_positives.contains_key(fp) || severity_overrides.contains_key(fp));
                project.triage_version += 1;
            }
            Event::RunAdded { project_id, run, at } => {
                let project = self.projects.entry(project_id).or_default();
                if let Some(prev) = project.latest_run() {
                    let diff = match_runs(prev, &run, DEFAULT_LINE_WINDOW);
                    project.triage = carry_forward(&project.triage, &diff, at, RetentionPolicy::default());
                }
                project.runs.push(run);
                project.triage_version += 1;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreOptions {
    /// Write a snapshot after this many events; 0 disables snapshots.
    pub snapshot_every: u64,
    /// Cut a damaged journal back to its last complete event instead of
    /// refusing to open.
    pub repair: bool,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self { snapshot_every: DEFAULT_SNAPSHOT_EVERY, repair: false }
    }
}

/// Working time spent on one file since the previous upload, used to derive
/// fix-time records automatically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WorkSession {
    pub file_path: String,
    pub elapsed_minutes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunAccepted {
    pub run_id: String,
    pub triage_version: u64,
    pub persisted: usize,
    /// Findings of the previous run that are gone, candidates for a fix-time prompt.
    pub resolved: Vec<warden_core::Finding>,
    pub introduced: usize,
    pub fix_records: Vec<FixRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TriageDocument {
    pub version: u64,
    pub triage: TriageState,
}

/// Replacement triage state for a project, guarded by the version it was read at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TriageUpdate {
    pub version: u64,
    #[serde(default)]
    pub false_positives: BTreeSet<Fingerprint>,
    #[serde(default)]
    pub severity_overrides: BTreeMap<Fingerprint, SeverityRank>,
}

/// Triage view of the latest run plus fix-time estimates for its patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectReport {
    pub project_id: String,
    pub view: TriageView,
    pub estimates: Vec<FixEstimate>,
}

/// Changes that turn `current` into the requested state.
pub fn triage_changes(current: &TriageState, update: &TriageUpdate, now: DateTime<Utc>) -> Vec<TriageChange> {
    let mut changes = Vec::new();
    for fp in current.false_positives.keys() {
        if !update.false_positives.contains(fp) {
            changes.push(TriageChange::FpUnmarked { fingerprint: fp.clone() });
        }
    }
    for fp in &update.false_positives {
        if !current.false_positives.contains_key(fp) {
            changes.push(TriageChange::FpMarked { fingerprint: fp.clone(), at: now });
        }
    }
    for fp in current.severity_overrides.keys() {
        if !update.severity_overrides.contains_key(fp) {
            changes.push(TriageChange::OverrideCleared { fingerprint: fp.clone() });
        }
    }
    for (fp, rank) in &update.severity_overrides {
        if current.severity_overrides.get(fp) != Some(rank) {
            changes.push(TriageChange::OverrideSet { fingerprint: fp.clone(), rank: *rank });
        }
    }
    changes
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    journal: Journal,
    state: StoreState,
    options: StoreOptions,
}

impl Store {
    /// Open or create the store in `dir`, replaying the journal on top of the
    /// latest snapshot.
    pub fn open(dir: &Path, options: StoreOptions) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(JournalError::from)?;
        let snapshot = match journal::read_snapshot::<StoreState>(dir) {
            Err(JournalError::CorruptSnapshot(reason)) if options.repair => {
                tracing::warn!(%reason, "ignoring unreadable snapshot");
                None
            }
            other => other?,
        };
        let (journal, entries) = Journal::open::<Event>(dir, options.repair)?;
        let (mut state, mut base) = snapshot.map_or((StoreState::default(), 0), |s| (s.state, s.seq));
        if base > journal.last_seq() {
            if !options.repair {
                return Err(JournalError::Corrupt {
                    last_valid_seq: journal.last_seq(),
                    reason: format!("snapshot covers sequence {base} but the journal ends earlier"),
                }
                .into());
            }
            tracing::warn!(base, "snapshot is ahead of the journal; replaying the journal alone");
            state = StoreState::default();
            base = 0;
        }
        for entry in entries.iter().filter(|e| e.seq > base) {
            state.apply(&entry.event).map_err(|err| JournalError::Corrupt {
                last_valid_seq: entry.seq - 1,
                reason: format!("event {} cannot be applied: {err}", entry.seq),
            })?;
        }
        let mut store = Self { dir: dir.to_owned(), journal, state, options };
        if options.repair && base < store.journal.last_seq() {
            store.snapshot()?;
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn state(&self) -> &StoreState {
        &self.state
    }

    /// Sequence number of the last committed event.
    pub fn last_seq(&self) -> u64 {
        self.journal.last_seq()
    }

    pub fn snapshot(&mut self) -> Result<(), StoreError> {
        journal::write_snapshot(&self.dir, self.journal.last_seq(), &self.state)?;
        Ok(())
    }

    /// Validate, journal, then apply `event`.
    pub fn commit(&mut self, event: Event, now: DateTime<Utc>) -> Result<u64, StoreError> {
        self.state.check(&event)?;
        let seq = self.journal.append(now, &event)?;
        self.state.apply(&event).expect("event was checked against this state");
        if self.options.snapshot_every > 0 && seq % self.options.snapshot_every == 0 {
            self.snapshot()?;
        }
        Ok(seq)
    }

    pub fn add_comment(
        &mut self,
        pattern_id: &str,
        text: &str,
        author: Option<String>,
        fingerprint: Option<Fingerprint>,
        now: DateTime<Utc>,
    ) -> Result<Comment, StoreError> {
        let comment = Comment {
            comment_id: Uuid::new_v4().to_string(),
            pattern_id: pattern_id.to_owned(),
            fingerprint,
            text: text.to_owned(),
            author,
            created_at: now,
        };
        self.commit(Event::CommentAdded { comment: comment.clone() }, now)?;
        Ok(comment)
    }

    pub fn add_solution(
        &mut self,
        pattern_id: &str,
        text: &str,
        code_snippet: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<Solution, StoreError> {
        let solution = Solution {
            solution_id: Uuid::new_v4().to_string(),
            pattern_id: pattern_id.to_owned(),
            text: text.to_owned(),
            code_snippet,
            up_votes: 0,
            down_votes: 0,
            created_at: now,
        };
        self.commit(Event::SolutionAdded { solution: solution.clone() }, now)?;
        Ok(solution)
    }

    pub fn vote(
        &mut self,
        solution_id: &str,
        direction: VoteDirection,
        now: DateTime<Utc>,
    ) -> Result<Solution, StoreError> {
        self.commit(Event::VoteCast { solution_id: solution_id.to_owned(), direction }, now)?;
        Ok(self.state.knowledge.solution(solution_id).expect("just voted").clone())
    }

    pub fn record_fix(&mut self, pattern_id: &str, minutes: f64, now: DateTime<Utc>) -> Result<FixRecord, StoreError> {
        let record = fixtime::record_manual(pattern_id, minutes, now)?;
        self.commit(Event::FixRecorded { record: record.clone() }, now)?;
        Ok(record)
    }

    /// Remove purgeable solutions. Nothing is journaled when nothing qualifies.
    pub fn purge(&mut self, now: DateTime<Utc>, policy: PurgePolicy) -> Result<Vec<String>, StoreError> {
        let removed = self.state.knowledge.purge_candidates(now, policy);
        if !removed.is_empty() {
            self.commit(Event::Purged { removed: removed.clone() }, now)?;
        }
        Ok(removed)
    }

    pub fn triage(&self, project_id: &str) -> Result<TriageDocument, StoreError> {
        let p = self.state.project(project_id)?;
        Ok(TriageDocument { version: p.triage_version, triage: p.triage.clone() })
    }

    /// Apply `changes`; with `expected_version` set, refuse when another
    /// writer got there first.
    pub fn edit_triage(
        &mut self,
        project_id: &str,
        expected_version: Option<u64>,
        changes: Vec<TriageChange>,
        now: DateTime<Utc>,
    ) -> Result<TriageDocument, StoreError> {
        let actual = self.state.project(project_id)?.triage_version;
        if let Some(expected) = expected_version {
            if expected != actual {
                return Err(StoreError::Conflict(format!(
                    "triage state is at version {actual}, update was based on {expected}"
                )));
            }
        }
        self.commit(Event::TriageEdited { project_id: project_id.to_owned(), changes }, now)?;
        self.triage(project_id)
    }

    pub fn replace_triage(
        &mut self,
        project_id: &str,
        update: &TriageUpdate,
        now: DateTime<Utc>,
    ) -> Result<TriageDocument, StoreError> {
        let current = &self.state.project(project_id)?.triage;
        let changes = triage_changes(current, update, now);
        self.edit_triage(project_id, Some(update.version), changes, now)
    }

    /// Store a run, optionally attaching a metrics snapshot and deriving
    /// fix-time records from a work session.
    pub fn add_run(
        &mut self,
        project_id: &str,
        mut run: AnalysisRun,
        metrics: Option<BTreeMap<String, f64>>,
        session: Option<WorkSession>,
        now: DateTime<Utc>,
    ) -> Result<RunAccepted, StoreError> {
        if project_id.trim().is_empty() {
            return Err(StoreError::Invalid("project id must not be empty".into()));
        }
        if let Some(values) = metrics {
            if run.metrics.is_some() {
                return Err(StoreError::Invalid(format!("run `{}` already carries a metrics snapshot", run.run_id)));
            }
            let snapshot = MetricsSnapshot { run_id: run.run_id.clone(), values };
            validate_metrics(&snapshot)?;
            run.metrics = Some(snapshot);
        }
        let diff = match self.state.projects.get(project_id).and_then(ProjectState::latest_run) {
            Some(prev) => match_runs(prev, &run, DEFAULT_LINE_WINDOW),
            None => Default::default(),
        };
        let derived = match &session {
            Some(s) => fixtime::derive_auto(&diff, s.elapsed_minutes, &s.file_path, now)?,
            None => Vec::new(),
        };
        let run_id = run.run_id.clone();
        self.commit(Event::RunAdded { project_id: project_id.to_owned(), run, at: now }, now)?;
        for record in &derived {
            self.commit(Event::FixRecorded { record: record.clone() }, now)?;
        }
        Ok(RunAccepted {
            run_id,
            triage_version: self.state.project(project_id)?.triage_version,
            persisted: diff.persisted.len(),
            resolved: diff.resolved,
            introduced: diff.introduced.len(),
            fix_records: derived,
        })
    }

    pub fn project(&self, project_id: &str) -> Result<&ProjectState, StoreError> {
        self.state.project(project_id)
    }

    fn latest_run(&self, project_id: &str) -> Result<(&ProjectState, &AnalysisRun), StoreError> {
        let p = self.state.project(project_id)?;
        let run = p.latest_run().ok_or_else(|| StoreError::NotFound(format!("project `{project_id}` has no runs")))?;
        Ok((p, run))
    }

    pub fn view(&self, project_id: &str, config: &TriageConfig) -> Result<TriageView, StoreError> {
        let (p, run) = self.latest_run(project_id)?;
        Ok(apply_level(run, &p.triage, config)?)
    }

    pub fn comments(&self, pattern_id: &str) -> Vec<Comment> {
        self.state.knowledge.list_comments(pattern_id)
    }

    pub fn solutions(&self, pattern_id: &str) -> Vec<Solution> {
        self.state.knowledge.list_solutions(pattern_id)
    }

    pub fn estimate(&self, pattern_id: &str) -> FixEstimate {
        fixtime::estimate(pattern_id, &self.state.fix_records)
    }

    pub fn impact(&self, project_id: &str) -> Result<ImpactModel, StoreError> {
        let p = self.state.project(project_id)?;
        Ok(impact::fit_impact(&impact::build_deltas(&p.runs)?))
    }

    /// Recommendations weighted by the latest run's findings that are not
    /// marked as false positives.
    pub fn recommendations(
        &self,
        project_id: &str,
        metric: &str,
        direction: MetricDirection,
    ) -> Result<Vec<Recommendation>, StoreError> {
        let model = self.impact(project_id)?;
        let (p, run) = self.latest_run(project_id)?;
        let mut counts = BTreeMap::new();
        for f in run.findings.iter().filter(|f| !p.triage.is_false_positive(&f.fingerprint)) {
            *counts.entry(f.pattern_id.clone()).or_insert(0u64) += 1;
        }
        Ok(impact::recommend(&model, metric, direction, &counts)?)
    }

    pub fn report(&self, project_id: &str, config: &TriageConfig) -> Result<ProjectReport, StoreError> {
        let view = self.view(project_id, config)?;
        let (_, run) = self.latest_run(project_id)?;
        let patterns: BTreeSet<&str> = run.findings.iter().map(|f| f.pattern_id.as_str()).collect();
        Ok(ProjectReport {
            project_id: project_id.to_owned(),
            view,
            estimates: patterns.into_iter().map(|p| self.estimate(p)).collect(),
        })
    }
}
