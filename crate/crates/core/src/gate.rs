//! Release-gate decision policy.
//!
//! The candidate is scored together with the history it is compared
//! against (outlier detection, not novelty detection): history and
//! candidate form one feature matrix, the matrix is standardized, and every
//! detector is fitted on it. LOF decides the verdict unless majority voting
//! is enabled.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Flag, ReleaseDataset, ReleaseRecord, METRIC_NAMES};
use crate::detectors::{
    classify_score, quantile, standardize_with_focus, Classification, DetectorConfig,
    DetectorError, DetectorKind, FeatureMatrix, StandardizationParams,
};

pub const REASON_NO_ACTIVITY: &str = "no activity";
pub const REASON_DEGENERATE: &str = "degenerate history";

#[derive(Debug, Error)]
pub enum GateError {
    #[error("candidate id {candidate} must exceed every history id (last is {last})")]
    CandidateOrder { candidate: u64, last: u64 },
    #[error("invalid gate configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    #[default]
    LofOnly,
    MajorityVote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Releases collected before any candidate is checked.
    pub warmup_releases: usize,
    #[serde(rename = "detector")]
    pub detector_config: DetectorConfig,
    pub ensemble_mode: EnsembleMode,
    /// Detectors that must vote anomaly under majority voting.
    pub ensemble_quorum: usize,
    /// Fraction of rows the non-LOF detectors treat as anomalous.
    pub contamination: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            warmup_releases: 10,
            detector_config: DetectorConfig::default(),
            ensemble_mode: EnsembleMode::LofOnly,
            ensemble_quorum: 3,
            contamination: 0.1,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), GateError> {
        self.detector_config.validate()?;
        if self.warmup_releases == 0 {
            return Err(GateError::InvalidConfig("warmup_releases must be positive".into()));
        }
        if self.ensemble_quorum == 0 || self.ensemble_quorum > DetectorKind::ALL.len() {
            return Err(GateError::InvalidConfig(format!(
                "ensemble_quorum must be between 1 and {}",
                DetectorKind::ALL.len()
            )));
        }
        if !(self.contamination > 0.0 && self.contamination < 1.0) {
            return Err(GateError::InvalidConfig("contamination must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Review,
    Anomaly,
    InsufficientHistory,
}

impl Verdict {
    pub fn flag(self) -> Flag {
        match self {
            Verdict::Pass => Flag::Ok,
            Verdict::Review => Flag::Review,
            Verdict::Anomaly => Flag::Anomaly,
            Verdict::InsufficientHistory => Flag::Unset,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Review => "review",
            Verdict::Anomaly => "anomaly",
            Verdict::InsufficientHistory => "insufficient_history",
        }
    }
}

/// One line of a decision's explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureContribution {
    pub feature: String,
    pub z_value: f64,
    /// 1 for the feature furthest from its mean.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub verdict: Verdict,
    pub candidate_id: u64,
    pub reason: Option<String>,
    pub lof_score: Option<f64>,
    pub per_detector_scores: BTreeMap<String, f64>,
    /// Each detector's own classification of the candidate.
    pub detector_votes: BTreeMap<String, Classification>,
    pub explanation: Vec<FeatureContribution>,
    pub history_size: usize,
    /// The candidate with its flag set from the verdict.
    pub candidate: ReleaseRecord,
}

impl GateDecision {
    fn unscored(verdict: Verdict, candidate: &ReleaseRecord, history_size: usize, reason: Option<&str>) -> Self {
        Self {
            verdict,
            candidate_id: candidate.id,
            reason: reason.map(str::to_string),
            lof_score: None,
            per_detector_scores: BTreeMap::new(),
            detector_votes: BTreeMap::new(),
            explanation: Vec::new(),
            history_size,
            candidate: candidate.clone().with_flag(verdict.flag()),
        }
    }
}

/// Kept features of `candidate_row` ordered by the magnitude of their
/// z-score, largest first, ties by feature index.
pub fn explain(
    matrix: &FeatureMatrix,
    params: &StandardizationParams,
    candidate_row: usize,
) -> Vec<FeatureContribution> {
    let z = params.transform(matrix.row(candidate_row));
    let mut order: Vec<(usize, f64)> = params.kept_features.iter().copied().zip(z).collect();
    order.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    order
        .into_iter()
        .enumerate()
        .map(|(i, (feature, z_value))| FeatureContribution {
            feature: METRIC_NAMES
                .get(feature)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("f{feature}")),
            z_value,
            rank: i + 1,
        })
        .collect()
}

/// Decides whether `candidate` may follow `history` into production.
pub fn gate_check(
    history: &ReleaseDataset,
    candidate: &ReleaseRecord,
    config: &GateConfig,
) -> Result<GateDecision, GateError> {
    config.validate()?;
    if let Some(last) = history.last() {
        if candidate.id <= last.id {
            return Err(GateError::CandidateOrder {
                candidate: candidate.id,
                last: last.id,
            });
        }
    }
    let history_size = history.len();
    if history_size < config.warmup_releases {
        return Ok(GateDecision::unscored(
            Verdict::InsufficientHistory,
            candidate,
            history_size,
            None,
        ));
    }
    if candidate.is_inactive() {
        return Ok(GateDecision::unscored(
            Verdict::Review,
            candidate,
            history_size,
            Some(REASON_NO_ACTIVITY),
        ));
    }

    let matrix = FeatureMatrix::from_records(history.records().iter().chain([candidate]))?;
    let row = matrix.n_rows() - 1;
    let (standardized, params) = match standardize_with_focus(&matrix, Some(row)) {
        Ok(fit) => fit,
        Err(DetectorError::NoVariance) => {
            return Ok(GateDecision::unscored(
                Verdict::Review,
                candidate,
                history_size,
                Some(REASON_DEGENERATE),
            ))
        }
        Err(e) => return Err(e.into()),
    };

    let detector_config = &config.detector_config;
    let mut per_detector_scores = BTreeMap::new();
    let mut detector_votes = BTreeMap::new();
    for kind in DetectorKind::ALL {
        let scores = kind.fit(&standardized, detector_config)?.training_scores();
        let score = scores.scores[row];
        let vote = match kind {
            DetectorKind::Lof => classify_score(score, detector_config),
            _ => {
                let cutoff = quantile(&scores.scores, 1.0 - config.contamination);
                if score > cutoff {
                    Classification::Anomaly
                } else {
                    Classification::Ok
                }
            }
        };
        per_detector_scores.insert(kind.name().to_string(), score);
        detector_votes.insert(kind.name().to_string(), vote);
    }
    let lof_score = per_detector_scores[DetectorKind::Lof.name()];
    let lof_vote = detector_votes[DetectorKind::Lof.name()];

    let verdict = match config.ensemble_mode {
        EnsembleMode::LofOnly => match lof_vote {
            Classification::Anomaly => Verdict::Anomaly,
            Classification::Review => Verdict::Review,
            Classification::Ok => Verdict::Pass,
        },
        EnsembleMode::MajorityVote => {
            let votes = detector_votes
                .values()
                .filter(|v| **v == Classification::Anomaly)
                .count();
            if votes >= config.ensemble_quorum {
                Verdict::Anomaly
            } else if lof_vote != Classification::Ok {
                // LOF alone flagging the candidate is not enough to block,
                // but still asks for a human look.
                Verdict::Review
            } else {
                Verdict::Pass
            }
        }
    };

    Ok(GateDecision {
        verdict,
        candidate_id: candidate.id,
        reason: None,
        lof_score: Some(lof_score),
        per_detector_scores,
        detector_votes,
        explanation: explain(&matrix, &params, row),
        history_size,
        candidate: candidate.clone().with_flag(verdict.flag()),
    })
}
