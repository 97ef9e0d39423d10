//! Fix-time records and per-pattern estimates.
//!
//! Estimates are the sample median with the half interquartile range as the
//! uncertainty. An estimate is only shown once it is backed by at least
//! [`MIN_SAMPLES`] records and is tight enough to be useful.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::RunDiff;

pub const MIN_SAMPLES: usize = 5;
/// Largest half-width, in minutes, at which an estimate counts as ready.
pub const READY_HALF_WIDTH_MINUTES: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixTimeError {
    #[error("fix duration must be a positive number of minutes, got {0}")]
    NonPositiveDuration(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordSource {
    Manual,
    Auto,
}

/// One observed fix duration. Carries no author identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FixRecord {
    pub pattern_id: String,
    pub minutes: f64,
    pub source: RecordSource,
    pub recorded_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EstimateStatus {
    Ready,
    Imprecise,
    Insufficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FixEstimate {
    pub pattern_id: String,
    /// `None` only when there are no samples at all.
    pub median: Option<f64>,
    pub half_width: Option<f64>,
    pub sample_count: usize,
    pub status: EstimateStatus,
}

impl FixEstimate {
    pub fn summary(&self) -> String {
        match (self.status, self.median, self.half_width) {
            (EstimateStatus::Insufficient, _, _) => {
                format!("insufficient data (n={}, need {MIN_SAMPLES})", self.sample_count)
            }
            (status, Some(m), Some(h)) => {
                let suffix = if status == EstimateStatus::Imprecise { " (imprecise)" } else { "" };
                format!("{m:.0} ± {h:.0} min{suffix} (n={})", self.sample_count)
            }
            _ => format!("no estimate (n={})", self.sample_count),
        }
    }
}

fn check_minutes(minutes: f64) -> Result<(), FixTimeError> {
    if minutes.is_finite() && minutes > 0.0 {
        Ok(())
    } else {
        Err(FixTimeError::NonPositiveDuration(minutes))
    }
}

pub fn record_manual(pattern_id: &str, minutes: f64, now: DateTime<Utc>) -> Result<FixRecord, FixTimeError> {
    check_minutes(minutes)?;
    Ok(FixRecord { pattern_id: pattern_id.to_owned(), minutes, source: RecordSource::Manual, recorded_at: now })
}

/// Attribute elapsed working time on `file_path` to a resolved finding.
///
/// Only an unambiguous interval produces a record: exactly one finding of
/// that file must have been resolved.
pub fn derive_auto(
    diff: &RunDiff,
    elapsed_minutes: f64,
    file_path: &str,
    now: DateTime<Utc>,
) -> Result<Vec<FixRecord>, FixTimeError> {
    check_minutes(elapsed_minutes)?;
    let mut resolved = diff.resolved_in_file(file_path);
    match (resolved.next(), resolved.next()) {
        (Some(only), None) => Ok(vec![FixRecord {
            pattern_id: only.pattern_id.clone(),
            minutes: elapsed_minutes,
            source: RecordSource::Auto,
            recorded_at: now,
        }]),
        _ => Ok(Vec::new()),
    }
}

/// Linear-interpolation quantile of ascending `sorted` data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn status_for(sample_count: usize, half_width: f64) -> EstimateStatus {
    if sample_count < MIN_SAMPLES {
        EstimateStatus::Insufficient
    } else if half_width <= READY_HALF_WIDTH_MINUTES {
        EstimateStatus::Ready
    } else {
        EstimateStatus::Imprecise
    }
}

pub fn estimate(pattern_id: &str, records: &[FixRecord]) -> FixEstimate {
    let mut samples: Vec<f64> = records.iter().filter(|r| r.pattern_id == pattern_id).map(|r| r.minutes).collect();
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n == 0 {
        return FixEstimate {
            pattern_id: pattern_id.to_owned(),
            median: None,
            half_width: None,
            sample_count: 0,
            status: EstimateStatus::Insufficient,
        };
    }
    let median = quantile(&samples, 0.5);
    let half_width = (quantile(&samples, 0.75) - quantile(&samples, 0.25)) / 2.0;
    FixEstimate {
        pattern_id: pattern_id.to_owned(),
        median: Some(median),
        half_width: Some(half_width),
        sample_count: n,
        status: status_for(n, half_width),
    }
}
