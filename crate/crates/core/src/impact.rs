//! Correlating finding counts with code metrics across runs.
//!
//! For each pair of consecutive runs with metric snapshots we record how many
//! findings of each pattern appeared or disappeared and how each metric moved.
//! Per metric, an ordinary least-squares fit without intercept gives one
//! coefficient per pattern: the metric change per additional finding. The
//! coefficients are correlational.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::{match_runs, DEFAULT_LINE_WINDOW};
use crate::model::AnalysisRun;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImpactError {
    #[error("need at least two runs with metric snapshots, found {0}")]
    InsufficientHistory(usize),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("metric `{0}` is underdetermined by the available history")]
    Underdetermined(String),
}

/// Changes between two consecutive snapshotted runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeltaRow {
    pub from_run: String,
    pub to_run: String,
    /// Introduced minus resolved findings, per pattern seen in either run.
    pub count_deltas: BTreeMap<String, i64>,
    /// Metrics present in both snapshots.
    pub metric_deltas: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct DeltaDataset {
    pub rows: Vec<DeltaRow>,
}

impl DeltaDataset {
    pub fn patterns(&self) -> BTreeSet<&str> {
        self.rows.iter().flat_map(|r| r.count_deltas.keys().map(String::as_str)).collect()
    }

    pub fn metrics(&self) -> BTreeSet<&str> {
        self.rows.iter().flat_map(|r| r.metric_deltas.keys().map(String::as_str)).collect()
    }
}

pub fn build_deltas(history: &[AnalysisRun]) -> Result<DeltaDataset, ImpactError> {
    let snapshotted: Vec<&AnalysisRun> = history.iter().filter(|r| r.metrics.is_some()).collect();
    if snapshotted.len() < 2 {
        return Err(ImpactError::InsufficientHistory(snapshotted.len()));
    }
    let rows = snapshotted
        .windows(2)
        .map(|pair| {
            let (prev, curr) = (pair[0], pair[1]);
            let diff = match_runs(prev, curr, DEFAULT_LINE_WINDOW);
            let mut count_deltas: BTreeMap<String, i64> =
                prev.findings.iter().chain(&curr.findings).map(|f| (f.pattern_id.clone(), 0)).collect();
            for f in &diff.introduced {
                *count_deltas.get_mut(&f.pattern_id).expect("seeded above") += 1;
            }
            for f in &diff.resolved {
                *count_deltas.get_mut(&f.pattern_id).expect("seeded above") -= 1;
            }
            let before = &prev.metrics.as_ref().expect("filtered").values;
            let after = &curr.metrics.as_ref().expect("filtered").values;
            let metric_deltas =
                after.iter().filter_map(|(name, v)| before.get(name).map(|b| (name.clone(), v - b))).collect();
            DeltaRow { from_run: prev.run_id.clone(), to_run: curr.run_id.clone(), count_deltas, metric_deltas }
        })
        .collect();
    Ok(DeltaDataset { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricFit {
    /// Metric change per additional finding of the pattern.
    pub betas: BTreeMap<String, f64>,
    pub observation_pairs: usize,
    /// Patterns with a nonzero count delta in at least one row.
    pub active_patterns: usize,
    pub residual_norm: f64,
    pub underdetermined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct ImpactModel {
    pub per_metric: BTreeMap<String, MetricFit>,
}

/// Relative singular-value cutoff for the rank test.
const RANK_TOLERANCE: f64 = 1e-10;

pub fn fit_impact(dataset: &DeltaDataset) -> ImpactModel {
    let mut per_metric = BTreeMap::new();
    for metric in dataset.metrics() {
        let rows: Vec<&DeltaRow> = dataset.rows.iter().filter(|r| r.metric_deltas.contains_key(metric)).collect();
        let patterns: BTreeSet<&str> = rows.iter().flat_map(|r| r.count_deltas.keys().map(String::as_str)).collect();
        let active: Vec<&str> = patterns
            .iter()
            .copied()
            .filter(|p| rows.iter().any(|r| r.count_deltas.get(*p).copied().unwrap_or(0) != 0))
            .collect();

        let targets = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.metric_deltas[metric]));
        let mut betas: BTreeMap<String, f64> = patterns.iter().map(|p| (p.to_string(), 0.0)).collect();
        let mut residual_norm = targets.norm();
        let mut underdetermined = rows.len() < active.len();

        if !active.is_empty() && !underdetermined {
            let design = DMatrix::from_fn(rows.len(), active.len(), |i, j| {
                rows[i].count_deltas.get(active[j]).copied().unwrap_or(0) as f64
            });
            let svd = design.clone().svd(true, true);
            let largest = svd.singular_values.max();
            let rank = svd.rank(largest * RANK_TOLERANCE);
            if rank < active.len() {
                underdetermined = true;
            } else {
                let solution = svd.solve(&targets, largest * RANK_TOLERANCE).expect("u and v were computed");
                for (j, p) in active.iter().enumerate() {
                    betas.insert(p.to_string(), solution[j]);
                }
                residual_norm = (design * solution - &targets).norm();
            }
        }

        per_metric.insert(
            metric.to_owned(),
            MetricFit {
                betas,
                observation_pairs: rows.len(),
                active_patterns: active.len(),
                residual_norm,
                underdetermined,
            },
        );
    }
    ImpactModel { per_metric }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MetricDirection {
    Decrease,
    Increase,
}

impl std::str::FromStr for MetricDirection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "decrease" => Ok(MetricDirection::Decrease),
            "increase" => Ok(MetricDirection::Increase),
            other => Err(format!("unknown direction `{other}` (expected decrease or increase)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Recommendation {
    pub pattern_id: String,
    /// Projected metric change if every remaining finding of the pattern is removed.
    pub projected_delta: f64,
}

/// Rank patterns by how much removing all their current findings would move
/// `metric` in the wanted direction.
pub fn recommend(
    model: &ImpactModel,
    metric: &str,
    direction: MetricDirection,
    current_counts: &BTreeMap<String, u64>,
) -> Result<Vec<Recommendation>, ImpactError> {
    let fit = model.per_metric.get(metric).ok_or_else(|| ImpactError::UnknownMetric(metric.to_owned()))?;
    if fit.underdetermined {
        return Err(ImpactError::Underdetermined(metric.to_owned()));
    }
    let mut out: Vec<Recommendation> = fit
        .betas
        .iter()
        .map(|(pattern, beta)| {
            let count = current_counts.get(pattern).copied().unwrap_or(0) as f64;
            // + 0.0 folds -0.0 into 0.0
            Recommendation { pattern_id: pattern.clone(), projected_delta: beta * -count + 0.0 }
        })
        .collect();
    out.sort_by(|a, b| {
        let by_benefit = match direction {
            MetricDirection::Decrease => a.projected_delta.total_cmp(&b.projected_delta),
            MetricDirection::Increase => b.projected_delta.total_cmp(&a.projected_delta),
        };
        by_benefit.then_with(|| a.pattern_id.cmp(&b.pattern_id))
    });
    Ok(out)
}
