//! Shared comments and voted solution examples, keyed by bug pattern.
//!
//! Ids and timestamps are supplied by the caller so that every mutation is a
//! pure function of its inputs and can be replayed from a journal.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Fingerprint;

pub const DEFAULT_PURGE_MIN_AGE_DAYS: u32 = 30;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error("text must not be empty")]
    EmptyText,
    #[error("unknown solution `{0}`")]
    UnknownSolution(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("purge minimum age must be at least one day")]
    InvalidPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Comment {
    pub comment_id: String,
    pub pattern_id: String,
    /// Set for comments about one specific finding instead of the pattern.
    pub fingerprint: Option<Fingerprint>,
    pub text: String,
    pub author: Option<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Solution {
    pub solution_id: String,
    pub pattern_id: String,
    pub text: String,
    pub code_snippet: Option<String>,
    pub up_votes: u64,
    pub down_votes: u64,
    pub created_at: DateTime<Utc>,
}

impl Solution {
    pub fn net_score(&self) -> i64 {
        self.up_votes as i64 - self.down_votes as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VoteDirection {
    Up,
    Down,
}

impl std::str::FromStr for VoteDirection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "up" => Ok(VoteDirection::Up),
            "down" => Ok(VoteDirection::Down),
            other => Err(format!("unknown vote direction `{other}` (expected up or down)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PurgePolicy {
    pub min_age_days: u32,
}

impl PurgePolicy {
    pub fn new(min_age_days: u32) -> Result<Self, KnowledgeError> {
        if min_age_days == 0 {
            return Err(KnowledgeError::InvalidPolicy);
        }
        Ok(Self { min_age_days })
    }
}

impl Default for PurgePolicy {
    fn default() -> Self {
        Self { min_age_days: DEFAULT_PURGE_MIN_AGE_DAYS }
    }
}

/// A solution qualifies for purging when it has only negative votes and is
/// strictly older than the policy's minimum age.
pub fn is_purgeable(solution: &Solution, now: DateTime<Utc>, policy: PurgePolicy) -> bool {
    solution.up_votes == 0
        && solution.down_votes >= 1
        && now - solution.created_at > Duration::days(policy.min_age_days as i64)
}

/// Display order: net score descending, then oldest first, then id.
pub fn solution_order(a: &Solution, b: &Solution) -> std::cmp::Ordering {
    b.net_score()
        .cmp(&a.net_score())
        .then_with(|| a.created_at.cmp(&b.created_at))
        .then_with(|| a.solution_id.cmp(&b.solution_id))
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KnowledgeBase {
    comments: BTreeMap<String, Comment>,
    solutions: BTreeMap<String, Solution>,
}

impl KnowledgeBase {
    pub fn add_comment(
        &mut self,
        comment_id: String,
        pattern_id: &str,
        text: &str,
        author: Option<String>,
        fingerprint: Option<Fingerprint>,
        now: DateTime<Utc>,
    ) -> Result<Comment, KnowledgeError> {
        if text.trim().is_empty() {
            return Err(KnowledgeError::EmptyText);
        }
        if self.comments.contains_key(&comment_id) {
            return Err(KnowledgeError::DuplicateId(comment_id));
        }
        let comment = Comment {
            comment_id: comment_id.clone(),
            pattern_id: pattern_id.to_owned(),
            fingerprint,
            text: text.to_owned(),
            author,
            created_at: now,
        };
        self.comments.insert(comment_id, comment.clone());
        Ok(comment)
    }

    /// All comments for a pattern, pattern- and instance-scoped, oldest first.
    pub fn list_comments(&self, pattern_id: &str) -> Vec<Comment> {
        let mut out: Vec<Comment> = self.comments.values().filter(|c| c.pattern_id == pattern_id).cloned().collect();
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.comment_id.cmp(&b.comment_id)));
        out
    }

    pub fn add_solution(
        &mut self,
        solution_id: String,
        pattern_id: &str,
        text: &str,
        code_snippet: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<Solution, KnowledgeError> {
        if text.trim().is_empty() {
            return Err(KnowledgeError::EmptyText);
        }
        if self.solutions.contains_key(&solution_id) {
            return Err(KnowledgeError::DuplicateId(solution_id));
        }
        let solution = Solution {
            solution_id: solution_id.clone(),
            pattern_id: pattern_id.to_owned(),
            text: text.to_owned(),
            code_snippet,
            up_votes: 0,
            down_votes: 0,
            created_at: now,
        };
        self.solutions.insert(solution_id, solution.clone());
        Ok(solution)
    }

    pub fn comment(&self, comment_id: &str) -> Option<&Comment> {
        self.comments.get(comment_id)
    }

    pub fn solution(&self, solution_id: &str) -> Option<&Solution> {
        self.solutions.get(solution_id)
    }

    pub fn vote_solution(&mut self, solution_id: &str, direction: VoteDirection) -> Result<Solution, KnowledgeError> {
        let solution = self
            .solutions
            .get_mut(solution_id)
            .ok_or_else(|| KnowledgeError::UnknownSolution(solution_id.to_owned()))?;
        match direction {
            VoteDirection::Up => solution.up_votes += 1,
            VoteDirection::Down => solution.down_votes += 1,
        }
        Ok(solution.clone())
    }

    pub fn list_solutions(&self, pattern_id: &str) -> Vec<Solution> {
        let mut out: Vec<Solution> = self.solutions.values().filter(|s| s.pattern_id == pattern_id).cloned().collect();
        out.sort_by(solution_order);
        out
    }

    /// Ids that `purge_solutions` would remove, without removing them.
    pub fn purge_candidates(&self, now: DateTime<Utc>, policy: PurgePolicy) -> Vec<String> {
        self.solutions.values().filter(|s| is_purgeable(s, now, policy)).map(|s| s.solution_id.clone()).collect()
    }

    pub fn purge_solutions(&mut self, now: DateTime<Utc>, policy: PurgePolicy) -> Vec<String> {
        let removed = self.purge_candidates(now, policy);
        self.remove_solutions(&removed);
        removed
    }

    /// Remove the given solutions; unknown ids are ignored.
    pub fn remove_solutions(&mut self, ids: &[String]) {
        for id in ids {
            self.solutions.remove(id);
        }
    }

    pub fn solutions(&self) -> impl Iterator<Item = &Solution> {
        self.solutions.values()
    }

    pub fn comments(&self) -> impl Iterator<Item = &Comment> {
        self.comments.values()
    }
}
