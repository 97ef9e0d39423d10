//! Information levels.
//!
//! Each level keeps every transformation of the levels below it:
//!
//! | level | effect                                                        |
//! |-------|---------------------------------------------------------------|
//! | 0     | findings exactly as the tool emitted them                     |
//! | 1     | false positives removed                                       |
//! | 2     | sorted by effective severity, then confidence                 |
//! | 3     | confidence below `min_confidence` removed                     |
//! | 4     | findings less severe than `max_rank` removed                  |
//! | 5     | at most `cap` findings, relaxing 4 then 3 when short          |
//! | 6     | one finding drawn at random from the level-5 pool             |

use std::cmp::Ordering;
use std::num::NonZeroUsize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    display_style, effective_severity, AnalysisRun, Confidence, DisplayStyle, Finding, FpMode, SeverityRank,
    TriageState,
};

pub const MAX_LEVEL: u8 = 6;
pub const DEFAULT_CAP: usize = 8;
pub const DEFAULT_MAX_RANK: u8 = 9;
pub const DEFAULT_MIN_CONFIDENCE: Confidence = Confidence::Normal;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TriageError {
    #[error("invalid triage configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot pick from an empty pool")]
    EmptyPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Preset {
    /// Every feature on: level 5 with default thresholds.
    FullSupport,
    /// The tool's plain output: level 0.
    NoSupport,
    #[default]
    Custom,
}

impl std::str::FromStr for Preset {
    type Err = String;

    /// Accepts the short CLI spellings `full` and `none` as well as the
    /// serialized names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "full" | "full_support" => Ok(Preset::FullSupport),
            "none" | "no_support" => Ok(Preset::NoSupport),
            "custom" => Ok(Preset::Custom),
            other => Err(format!("unknown preset `{other}` (expected full, none or custom)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TriageConfig {
    pub level: u8,
    pub min_confidence: Confidence,
    /// Level-4 threshold: keep findings at least as severe as this rank.
    pub max_rank: SeverityRank,
    pub cap: NonZeroUsize,
    pub random_seed: Option<u64>,
    pub fp_mode: FpMode,
    pub preset: Preset,
}

impl Default for TriageConfig {
    fn default() -> Self {
        Self {
            level: 0,
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            max_rank: SeverityRank::new(DEFAULT_MAX_RANK as i64).expect("default rank is valid"),
            cap: NonZeroUsize::new(DEFAULT_CAP).expect("default cap is positive"),
            random_seed: None,
            fp_mode: FpMode::default(),
            preset: Preset::Custom,
        }
    }
}

impl TriageConfig {
    pub fn at_level(level: u8) -> Self {
        Self { level, ..Self::default() }
    }

    pub fn full_support() -> Self {
        Self { preset: Preset::FullSupport, ..Self::default() }.resolved()
    }

    pub fn no_support() -> Self {
        Self { preset: Preset::NoSupport, ..Self::default() }.resolved()
    }

    /// Apply the preset: `FullSupport` forces level 5 with default thresholds,
    /// `NoSupport` forces level 0. The seed and false-positive mode are kept.
    pub fn resolved(&self) -> Self {
        let base =
            Self { random_seed: self.random_seed, fp_mode: self.fp_mode, preset: self.preset, ..Self::default() };
        match self.preset {
            Preset::FullSupport => Self { level: 5, ..base },
            Preset::NoSupport => Self { level: 0, ..base },
            Preset::Custom => self.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), TriageError> {
        if self.level > MAX_LEVEL {
            return Err(TriageError::InvalidConfig(format!("level {} outside 0..={MAX_LEVEL}", self.level)));
        }
        Ok(())
    }

    fn passes_confidence(&self, f: &Finding) -> bool {
        f.confidence >= self.min_confidence
    }

    fn passes_severity(&self, f: &Finding, triage: &TriageState) -> bool {
        effective_severity(f, triage) <= self.max_rank
    }
}

/// Why a finding made it into a level-5/6 view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InclusionStage {
    /// Passes both the confidence and the severity filter.
    Base,
    /// Passes confidence only; admitted after relaxing the severity filter.
    RelaxedSeverity,
    /// Admitted after relaxing the confidence filter too.
    RelaxedConfidence,
}

impl InclusionStage {
    pub fn label(self) -> &'static str {
        match self {
            InclusionStage::Base => "base",
            InclusionStage::RelaxedSeverity => "relaxed severity",
            InclusionStage::RelaxedConfidence => "relaxed confidence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViewEntry {
    pub finding: Finding,
    pub style: DisplayStyle,
    pub inclusion_stage: InclusionStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TriageView {
    pub run_id: String,
    pub level_applied: u8,
    pub entries: Vec<ViewEntry>,
    /// Level-5 candidate set in comparator order; empty below level 5.
    pub pool: Vec<Finding>,
}

impl TriageView {
    pub fn findings(&self) -> impl Iterator<Item = &Finding> {
        self.entries.iter().map(|e| &e.finding)
    }
}

/// Level-2 order: more severe (smaller effective rank) first, then higher
/// confidence, then file path, start line, pattern id and fingerprint.
pub fn compare(a: &Finding, b: &Finding, triage: &TriageState) -> Ordering {
    effective_severity(a, triage)
        .cmp(&effective_severity(b, triage))
        .then_with(|| b.confidence.cmp(&a.confidence))
        .then_with(|| a.location.file_path.cmp(&b.location.file_path))
        .then_with(|| a.location.start_line.cmp(&b.location.start_line))
        .then_with(|| a.pattern_id.cmp(&b.pattern_id))
        .then_with(|| a.fingerprint.cmp(&b.fingerprint))
}

/// Output of the capped selection.
#[derive(Debug, Clone, PartialEq)]
pub struct CappedSelection {
    pub entries: Vec<(Finding, InclusionStage)>,
    pub pool: Vec<Finding>,
}

/// Level 5 on top of an already filtered and sorted level-2 list.
///
/// Candidates passing both filters come first; while fewer than `cap` are
/// selected, the severity filter is dropped, then the confidence filter.
/// `pool` holds every candidate of every stage entered, in comparator order.
pub fn select_capped(sorted_l2: &[Finding], triage: &TriageState, config: &TriageConfig) -> CappedSelection {
    let cap = config.cap.get();
    let stage_of = |f: &Finding| match (config.passes_confidence(f), config.passes_severity(f, triage)) {
        (true, true) => InclusionStage::Base,
        (true, false) => InclusionStage::RelaxedSeverity,
        (false, _) => InclusionStage::RelaxedConfidence,
    };

    let mut entries = Vec::new();
    let mut last_stage = InclusionStage::Base;
    for stage in [InclusionStage::Base, InclusionStage::RelaxedSeverity, InclusionStage::RelaxedConfidence] {
        if stage != InclusionStage::Base && entries.len() >= cap {
            break;
        }
        last_stage = stage;
        for f in sorted_l2.iter().filter(|f| stage_of(f) == stage) {
            if entries.len() == cap {
                break;
            }
            entries.push((f.clone(), stage));
        }
    }
    let pool = sorted_l2.iter().filter(|f| stage_of(f) <= last_stage).cloned().collect();
    CappedSelection { entries, pool }
}

/// SplitMix64 step.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic uniform pick: first SplitMix64 output for `seed`, modulo the
/// pool size, indexing the comparator-sorted pool.
pub fn pick_random<'a>(pool: &'a [Finding], seed: u64, triage: &TriageState) -> Result<&'a Finding, TriageError> {
    if pool.is_empty() {
        return Err(TriageError::EmptyPool);
    }
    let mut sorted: Vec<&Finding> = pool.iter().collect();
    sorted.sort_by(|a, b| compare(a, b, triage));
    let mut state = seed;
    let index = (splitmix64(&mut state) % pool.len() as u64) as usize;
    Ok(sorted[index])
}

/// Seed used at level 6 when the configuration has none: derived from the
/// run id so the pick is stable for a run but differs between runs.
fn default_seed(run: &AnalysisRun) -> u64 {
    run.run_id.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3))
}

pub fn apply_level(run: &AnalysisRun, triage: &TriageState, config: &TriageConfig) -> Result<TriageView, TriageError> {
    let config = config.resolved();
    config.validate()?;
    let level = config.level;

    let entry = |f: &Finding, stage| ViewEntry {
        finding: f.clone(),
        style: display_style(f, triage, config.fp_mode),
        inclusion_stage: stage,
    };
    let view = |entries, pool| TriageView { run_id: run.run_id.clone(), level_applied: level, entries, pool };

    if level == 0 {
        let entries = run.findings.iter().map(|f| entry(f, InclusionStage::Base)).collect();
        return Ok(view(entries, Vec::new()));
    }

    let mut working: Vec<&Finding> =
        run.findings.iter().filter(|f| !triage.is_false_positive(&f.fingerprint)).collect();
    if level >= 2 {
        working.sort_by(|a, b| compare(a, b, triage));
    }
    if level <= 4 {
        if level >= 3 {
            working.retain(|f| config.passes_confidence(f));
        }
        if level >= 4 {
            working.retain(|f| config.passes_severity(f, triage));
        }
        let entries = working.into_iter().map(|f| entry(f, InclusionStage::Base)).collect();
        return Ok(view(entries, Vec::new()));
    }

    let sorted: Vec<Finding> = working.into_iter().cloned().collect();
    let selection = select_capped(&sorted, triage, &config);
    if level == 5 {
        let entries = selection.entries.iter().map(|(f, s)| entry(f, *s)).collect();
        return Ok(view(entries, selection.pool));
    }

    let entries = match selection.pool.is_empty() {
        true => Vec::new(),
        false => {
            let seed = config.random_seed.unwrap_or_else(|| default_seed(run));
            let picked = pick_random(&selection.pool, seed, triage)?;
            let stage = selection
                .entries
                .iter()
                .find(|(f, _)| f.fingerprint == picked.fingerprint)
                .map(|(_, s)| *s)
                .unwrap_or_else(|| {
                    if !config.passes_confidence(picked) {
                        InclusionStage::RelaxedConfidence
                    } else if !config.passes_severity(picked, triage) {
                        InclusionStage::RelaxedSeverity
                    } else {
                        InclusionStage::Base
                    }
                });
            vec![entry(picked, stage)]
        }
    };
    Ok(view(entries, selection.pool))
}
