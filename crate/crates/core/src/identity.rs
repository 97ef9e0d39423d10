//! Stable finding identity and run-to-run matching.
//!
//! A fingerprint is the SHA-256 digest of
//! `(patternId, filePath, className?, methodSignature?, occurrenceIndex)`.
//! Line numbers are deliberately absent so edits above a finding do not
//! change its identity; `occurrenceIndex` separates otherwise identical
//! findings in one file by their line order.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{AnalysisRun, Finding, Fingerprint, TriageState};

pub const DEFAULT_LINE_WINDOW: u32 = 10;
pub const DEFAULT_RETENTION_DAYS: i64 = 90;

/// The identity tuple minus the occurrence index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct IdentityKey<'a> {
    pattern_id: &'a str,
    file_path: &'a str,
    class_name: Option<&'a str>,
    method_signature: Option<&'a str>,
}

impl<'a> IdentityKey<'a> {
    fn of(f: &'a Finding) -> Self {
        Self {
            pattern_id: &f.pattern_id,
            file_path: &f.location.file_path,
            class_name: f.location.class_name.as_deref(),
            method_signature: f.location.method_signature.as_deref(),
        }
    }
}

fn digest(key: &IdentityKey<'_>, occurrence: usize) -> Fingerprint {
    let mut hasher = Sha256::new();
    // Length-prefixed fields so no two tuples share an encoding.
    let mut field = |tag: u8, value: Option<&str>| {
        hasher.update([tag]);
        match value {
            Some(v) => {
                hasher.update((v.len() as u64).to_le_bytes());
                hasher.update(v.as_bytes());
            }
            None => hasher.update(u64::MAX.to_le_bytes()),
        }
    };
    field(b'p', Some(key.pattern_id));
    field(b'f', Some(key.file_path));
    field(b'c', key.class_name);
    field(b'm', key.method_signature);
    hasher.update(b"i");
    hasher.update((occurrence as u64).to_le_bytes());
    Fingerprint::new(hex::encode(&hasher.finalize()[..16]))
}

/// Sort key for occurrence numbering: line order, document order breaking ties.
/// Findings without a start line sort first.
fn line_key(f: &Finding, position: usize) -> (u32, usize) {
    (f.location.start_line.unwrap_or(0), position)
}

/// Fingerprint of `finding` given every finding reported for the same file in
/// the same run (`finding` itself included).
pub fn fingerprint(finding: &Finding, siblings_in_file: &[Finding]) -> Fingerprint {
    let key = IdentityKey::of(finding);
    let position = siblings_in_file
        .iter()
        .position(|s| std::ptr::eq(s, finding))
        .or_else(|| siblings_in_file.iter().position(|s| same_content(s, finding)));
    let own = line_key(finding, position.unwrap_or(usize::MAX));
    let occurrence = siblings_in_file
        .iter()
        .enumerate()
        .filter(|(i, s)| Some(*i) != position && IdentityKey::of(s) == key)
        .filter(|(i, s)| line_key(s, *i) < own)
        .count();
    digest(&key, occurrence)
}

fn same_content(a: &Finding, b: &Finding) -> bool {
    a.pattern_id == b.pattern_id && a.location == b.location && a.message == b.message
}

/// Assign fingerprints to every finding of a run in place.
pub fn assign_fingerprints(findings: &mut [Finding]) {
    let mut groups: BTreeMap<IdentityKey<'_>, Vec<(u32, usize)>> = BTreeMap::new();
    for (i, f) in findings.iter().enumerate() {
        groups.entry(IdentityKey::of(f)).or_default().push(line_key(f, i));
    }
    let mut assigned = vec![Fingerprint::default(); findings.len()];
    for (key, mut members) in groups {
        members.sort();
        for (occurrence, (_, index)) in members.into_iter().enumerate() {
            assigned[index] = digest(&key, occurrence);
        }
    }
    for (f, fp) in findings.iter_mut().zip(assigned) {
        f.fingerprint = fp;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PersistedPair {
    pub prev: Finding,
    pub curr: Finding,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunDiff {
    /// In current-run order.
    pub persisted: Vec<PersistedPair>,
    /// In previous-run order.
    pub resolved: Vec<Finding>,
    /// In current-run order.
    pub introduced: Vec<Finding>,
}

impl RunDiff {
    pub fn resolved_in_file<'a>(&'a self, file_path: &'a str) -> impl Iterator<Item = &'a Finding> + 'a {
        self.resolved.iter().filter(move |f| f.location.file_path == file_path)
    }
}

/// Match the findings of two consecutive runs.
///
/// Phase 1 pairs equal fingerprints. Occurrence indices are only trusted when
/// the identity group has the same size in both runs; otherwise an earlier
/// sibling appeared or vanished and the indices have shifted, so the group is
/// left to phase 2. Phase 2 greedily pairs the remainder by nearest start
/// line within `line_window`, restricted to identical `(patternId, filePath)`;
/// smallest distance first, ties by the smaller previous start line.
fn group_sizes(run: &AnalysisRun) -> HashMap<IdentityKey<'_>, usize> {
    let mut sizes = HashMap::new();
    for f in &run.findings {
        *sizes.entry(IdentityKey::of(f)).or_default() += 1;
    }
    sizes
}

pub fn match_runs(prev: &AnalysisRun, curr: &AnalysisRun, line_window: u32) -> RunDiff {
    let prev_sizes = group_sizes(prev);
    let curr_sizes = group_sizes(curr);

    let mut prev_match: Vec<Option<usize>> = vec![None; prev.findings.len()];
    let mut curr_match: Vec<Option<usize>> = vec![None; curr.findings.len()];

    let mut by_fingerprint: HashMap<&Fingerprint, Vec<usize>> = HashMap::new();
    for (i, f) in prev.findings.iter().enumerate().rev() {
        by_fingerprint.entry(&f.fingerprint).or_default().push(i);
    }
    for (j, f) in curr.findings.iter().enumerate() {
        let key = IdentityKey::of(f);
        if prev_sizes.get(&key) != curr_sizes.get(&key) {
            continue;
        }
        let Some(candidates) = by_fingerprint.get_mut(&f.fingerprint) else {
            continue;
        };
        while let Some(i) = candidates.pop() {
            if IdentityKey::of(&prev.findings[i]) == key {
                prev_match[i] = Some(j);
                curr_match[j] = Some(i);
                break;
            }
        }
    }

    // Unmatched current findings per (pattern, file), ordered by start line
    // so each previous finding only scans its line window.
    // (pattern, file) -> (start line, index) of unmatched current findings
    type Buckets<'a> = HashMap<(&'a str, &'a str), Vec<(Option<u32>, usize)>>;
    let mut buckets: Buckets = HashMap::new();
    for (j, c) in curr.findings.iter().enumerate() {
        if curr_match[j].is_none() {
            buckets
                .entry((c.pattern_id.as_str(), c.location.file_path.as_str()))
                .or_default()
                .push((c.location.start_line, j));
        }
    }
    for bucket in buckets.values_mut() {
        bucket.sort_unstable();
    }
    let mut candidates = Vec::new();
    for (i, p) in prev.findings.iter().enumerate() {
        if prev_match[i].is_some() {
            continue;
        }
        let Some(bucket) = buckets.get(&(p.pattern_id.as_str(), p.location.file_path.as_str())) else {
            continue;
        };
        let (lo, hi) = match p.location.start_line {
            Some(a) => (Some(a.saturating_sub(line_window)), Some(a.saturating_add(line_window))),
            None => (None, None),
        };
        let start = bucket.partition_point(|(l, _)| *l < lo);
        for &(line, j) in bucket[start..].iter().take_while(|(l, _)| *l <= hi) {
            if line.is_none() != p.location.start_line.is_none() {
                continue;
            }
            let distance = match (p.location.start_line, line) {
                (Some(a), Some(b)) => a.abs_diff(b),
                _ => 0,
            };
            candidates.push((distance, p.location.start_line.unwrap_or(0), line.unwrap_or(0), i, j));
        }
    }
    candidates.sort_unstable();
    for (_, _, _, i, j) in candidates {
        if prev_match[i].is_none() && curr_match[j].is_none() {
            prev_match[i] = Some(j);
            curr_match[j] = Some(i);
        }
    }

    let persisted = curr_match
        .iter()
        .enumerate()
        .filter_map(|(j, m)| {
            m.map(|i| PersistedPair { prev: prev.findings[i].clone(), curr: curr.findings[j].clone() })
        })
        .collect();
    let resolved = prev_match.iter().zip(&prev.findings).filter(|(m, _)| m.is_none()).map(|(_, f)| f.clone()).collect();
    let introduced =
        curr_match.iter().zip(&curr.findings).filter(|(m, _)| m.is_none()).map(|(_, f)| f.clone()).collect();
    RunDiff { persisted, resolved, introduced }
}

/// How long marks for findings that disappeared are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RetentionPolicy {
    pub days: i64,
}

impl Default for RetentionPolicy {
    fn default() -> Self {
        Self { days: DEFAULT_RETENTION_DAYS }
    }
}

/// Move triage judgments onto the current run.
///
/// Marks of persisted findings follow the finding when its fingerprint
/// changed. Marks of resolved findings go dormant and are dropped once they
/// have been dormant longer than the retention horizon. A dormant mark whose
/// fingerprint shows up again in the current run is reactivated.
pub fn carry_forward(
    triage: &TriageState,
    diff: &RunDiff,
    now: DateTime<Utc>,
    retention: RetentionPolicy,
) -> TriageState {
    let mut next = triage.clone();

    let rekeys: Vec<(&Fingerprint, &Fingerprint)> = diff
        .persisted
        .iter()
        .filter(|p| p.prev.fingerprint != p.curr.fingerprint)
        .map(|p| (&p.prev.fingerprint, &p.curr.fingerprint))
        .collect();
    // Take every moving entry out before re-inserting so swaps cannot collide.
    let mut moved_fp = Vec::new();
    let mut moved_override = Vec::new();
    for (old, new) in &rekeys {
        if let Some(at) = next.false_positives.remove(*old) {
            moved_fp.push(((*new).clone(), at));
        }
        if let Some(rank) = next.severity_overrides.remove(*old) {
            moved_override.push(((*new).clone(), rank));
        }
        next.dormant.remove(*old);
    }
    let present: HashSet<&Fingerprint> = diff
        .persisted
        .iter()
        .map(|p| &p.curr.fingerprint)
        .chain(diff.introduced.iter().map(|f| &f.fingerprint))
        .collect();
    // A resolved finding whose fingerprint now names a different current
    // finding cannot keep its marks under that key.
    for f in &diff.resolved {
        if present.contains(&f.fingerprint) {
            next.false_positives.remove(&f.fingerprint);
            next.severity_overrides.remove(&f.fingerprint);
        }
    }
    next.false_positives.extend(moved_fp);
    next.severity_overrides.extend(moved_override);
    next.dormant.retain(|fp, _| !present.contains(fp));

    for f in &diff.resolved {
        let fp = &f.fingerprint;
        if present.contains(fp) {
            continue;
        }
        if next.false_positives.contains_key(fp) || next.severity_overrides.contains_key(fp) {
            next.dormant.entry(fp.clone()).or_insert(now);
        }
    }

    let horizon = Duration::days(retention.days);
    let expired: Vec<Fingerprint> =
        next.dormant.iter().filter(|(_, since)| now - **since > horizon).map(|(fp, _)| fp.clone()).collect();
    for fp in expired {
        next.dormant.remove(&fp);
        next.false_positives.remove(&fp);
        next.severity_overrides.remove(&fp);
    }
    next
}
