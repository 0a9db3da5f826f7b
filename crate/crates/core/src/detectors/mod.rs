//! Unsupervised outlier scorers over standardized release features.
//!
//! [`lof`] is the principal detector; [`knn`], [`mahalanobis`] and
//! [`iforest`] are baselines used for ensemble voting and comparison
//! reports. Every scorer returns larger values for more anomalous rows.

pub mod iforest;
pub mod knn;
pub mod lof;
pub mod mahalanobis;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ReleaseRecord, METRIC_NAMES};

pub use iforest::{isolation_forest_scores, IsolationForest};
pub use knn::{knn_outlier_scores, KnnModel};
pub use lof::{k_distance_neighbors, lof_scores, LofModel};
pub use mahalanobis::{mahalanobis_scores, MahalanobisModel};

/// Columns with a population standard deviation at or below this are constant.
pub const VARIANCE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("feature matrix needs at least one column")]
    NoColumns,
    #[error("row {row} has {got} values, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("{rows} rows but {ids} row ids")]
    IdMismatch { rows: usize, ids: usize },
    #[error("k = {k} is out of range for {n} rows (need 1 <= k <= n - 1)")]
    InvalidK { k: usize, n: usize },
    #[error("no feature varies enough to standardize")]
    NoVariance,
    #[error("column index {index} out of range for {cols} columns")]
    InvalidColumn { index: usize, cols: usize },
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
}

/// Dense row-major observations with the release id of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    row_ids: Vec<u64>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<Vec<f64>>, row_ids: Vec<u64>) -> Result<Self, DetectorError> {
        if rows.len() != row_ids.len() {
            return Err(DetectorError::IdMismatch {
                rows: rows.len(),
                ids: row_ids.len(),
            });
        }
        if rows.len() < 2 {
            return Err(DetectorError::TooFewRows {
                needed: 2,
                got: rows.len(),
            });
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err(DetectorError::NoColumns);
        }
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(DetectorError::RaggedRow {
                    row: r,
                    got: row.len(),
                    expected: cols,
                });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(DetectorError::NonFinite { row: r, col: c });
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            values,
            rows: rows.len(),
            cols,
            row_ids,
        })
    }

    /// Rows numbered `0..n` as their ids.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, DetectorError> {
        let ids = (0..rows.len() as u64).collect();
        Self::new(rows, ids)
    }

    /// P1..P6 of each record, keyed by release id.
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a ReleaseRecord>,
    ) -> Result<Self, DetectorError> {
        let (rows, ids) = records
            .into_iter()
            .map(|r| (r.metrics().to_vec(), r.id))
            .unzip();
        Self::new(rows, ids)
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// Euclidean distance between rows `a` and `b`.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        euclidean(self.row(a), self.row(b))
    }

    /// All pairwise distances, row-major `n x n`.
    pub fn distance_matrix(&self) -> Vec<f64> {
        let n = self.rows;
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                let d = self.distance(a, b);
                out[a * n + b] = d;
                out[b * n + a] = d;
            }
        }
        out
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-column centering and scaling fitted by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub kept_features: Vec<usize>,
}

impl StandardizationParams {
    /// Projects a raw observation onto the kept, standardized features.
    pub fn transform(&self, raw: &[f64]) -> Vec<f64> {
        self.kept_features
            .iter()
            .map(|&j| (raw[j] - self.means[j]) / self.stds[j])
            .collect()
    }
}

/// Z-scores every informative column with its mean and population standard
/// deviation.
///
/// A column is dropped when it is constant, or quasi-constant: its median
/// absolute deviation is zero, meaning at least half of the rows share one
/// value. The rare departures in such a column (a release that happens to
/// have one repository issue when nearly all have none) would otherwise
/// become the largest z-scores in the matrix and drown the metrics that
/// actually vary.
pub fn standardize(
    matrix: &FeatureMatrix,
) -> Result<(FeatureMatrix, StandardizationParams), DetectorError> {
    standardize_with_focus(matrix, None)
}

/// Like [`standardize`], but a quasi-constant column is kept when row
/// `focus` departs from the column median. The gate uses this so that a
/// candidate spiking in an otherwise flat metric is never hidden.
pub fn standardize_with_focus(
    matrix: &FeatureMatrix,
    focus: Option<usize>,
) -> Result<(FeatureMatrix, StandardizationParams), DetectorError> {
    let n = matrix.n_rows() as f64;
    let mut means = Vec::with_capacity(matrix.n_cols());
    let mut stds = Vec::with_capacity(matrix.n_cols());
    let mut kept = Vec::new();
    for j in 0..matrix.n_cols() {
        let column = matrix.column(j);
        let mean = column.iter().sum::<f64>() / n;
        let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        means.push(mean);
        stds.push(std);
        if std <= VARIANCE_EPSILON {
            continue;
        }
        let med = median(&column);
        let deviations: Vec<f64> = column.iter().map(|v| (v - med).abs()).collect();
        let informative =
            median(&deviations) > 0.0 || focus.is_some_and(|row| matrix.get(row, j) != med);
        if informative {
            kept.push(j);
        }
    }
    if kept.is_empty() {
        return Err(DetectorError::NoVariance);
    }
    let params = StandardizationParams {
        means,
        stds,
        kept_features: kept,
    };
    let rows = matrix.rows().map(|r| params.transform(r)).collect();
    let standardized = FeatureMatrix::new(rows, matrix.row_ids().to_vec())?;
    Ok((standardized, params))
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Linearly interpolated quantile, `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Hyperparameters shared by all detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub k_neighbors: usize,
    pub anomaly_threshold: f64,
    pub review_threshold: f64,
    pub tree_count: usize,
    pub subsample_size: usize,
    pub rng_seed: u64,
    pub covariance_ridge: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 20,
            anomaly_threshold: 1.5,
            review_threshold: 1.2,
            tree_count: 100,
            subsample_size: 256,
            rng_seed: 42,
            covariance_ridge: 1e-6,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: &str| Err(DetectorError::InvalidConfig(m.to_string()));
        if self.k_neighbors == 0 {
            return bad("k_neighbors must be positive");
        }
        if self.review_threshold.partial_cmp(&self.anomaly_threshold) != Some(std::cmp::Ordering::Less) {
            return bad("review_threshold must be below anomaly_threshold");
        }
        if self.tree_count == 0 {
            return bad("tree_count must be positive");
        }
        if self.subsample_size < 2 {
            return bad("subsample_size must be at least 2");
        }
        if !(self.covariance_ridge > 0.0 && self.covariance_ridge.is_finite()) {
            return bad("covariance_ridge must be a positive real");
        }
        Ok(())
    }

    /// `k_neighbors` clamped to `n - 1` for a fit on `n` rows.
    pub fn effective_k(&self, n: usize) -> usize {
        self.k_neighbors.min(n.saturating_sub(1)).max(1)
    }
}

/// Per-row scores of one detector, aligned with the matrix row ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub detector: String,
    pub row_ids: Vec<u64>,
    pub scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(detector: &str, row_ids: &[u64], scores: Vec<f64>) -> Self {
        debug_assert_eq!(row_ids.len(), scores.len());
        Self {
            detector: detector.to_string(),
            row_ids: row_ids.to_vec(),
            scores,
        }
    }

    pub fn score_for(&self, id: u64) -> Option<f64> {
        self.row_ids
            .iter()
            .position(|&r| r == id)
            .map(|i| self.scores[i])
    }

    /// Row ids ordered by descending score, ties by ascending id.
    pub fn ranking(&self) -> Vec<u64> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b]
                .total_cmp(&self.scores[a])
                .then(self.row_ids[a].cmp(&self.row_ids[b]))
        });
        order.into_iter().map(|i| self.row_ids[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Ok,
    Review,
    Anomaly,
}

/// Thresholds a single score: above `anomaly_threshold` is an anomaly,
/// above `review_threshold` needs review.
pub fn classify_score(score: f64, config: &DetectorConfig) -> Classification {
    if score > config.anomaly_threshold {
        Classification::Anomaly
    } else if score > config.review_threshold {
        Classification::Review
    } else {
        Classification::Ok
    }
}

pub fn classify(scores: &ScoreVector, config: &DetectorConfig) -> Vec<Classification> {
    scores
        .scores
        .iter()
        .map(|&s| classify_score(s, config))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Lof,
    Knn,
    Mahalanobis,
    #[serde(rename = "iforest")]
    IsolationForest,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::Lof,
        DetectorKind::Knn,
        DetectorKind::Mahalanobis,
        DetectorKind::IsolationForest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Lof => "lof",
            DetectorKind::Knn => "knn",
            DetectorKind::Mahalanobis => "mahalanobis",
            DetectorKind::IsolationForest => "iforest",
        }
    }

    /// Fits this detector on an already standardized matrix.
    pub fn fit(
        self,
        matrix: &FeatureMatrix,
        config: &DetectorConfig,
    ) -> Result<FittedDetector, DetectorError> {
        let k = config.effective_k(matrix.n_rows());
        Ok(match self {
            DetectorKind::Lof => FittedDetector::Lof(LofModel::fit(matrix, k)?),
            DetectorKind::Knn => FittedDetector::Knn(KnnModel::fit(matrix, k)?),
            DetectorKind::Mahalanobis => FittedDetector::Mahalanobis(MahalanobisModel::fit(
                matrix,
                config.covariance_ridge,
            )?),
            DetectorKind::IsolationForest => FittedDetector::IsolationForest(IsolationForest::fit(
                matrix,
                config.tree_count,
                config.subsample_size,
                config.rng_seed,
            )?),
        })
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown detector `{s}`"))
    }
}

/// A detector fitted on a dataset, able to score its training rows and
/// arbitrary query points.
#[derive(Debug, Clone)]
pub enum FittedDetector {
    Lof(LofModel),
    Knn(KnnModel),
    Mahalanobis(MahalanobisModel),
    IsolationForest(IsolationForest),
}

impl FittedDetector {
    pub fn kind(&self) -> DetectorKind {
        match self {
            FittedDetector::Lof(_) => DetectorKind::Lof,
            FittedDetector::Knn(_) => DetectorKind::Knn,
            FittedDetector::Mahalanobis(_) => DetectorKind::Mahalanobis,
            FittedDetector::IsolationForest(_) => DetectorKind::IsolationForest,
        }
    }

    pub fn training_scores(&self) -> ScoreVector {
        match self {
            FittedDetector::Lof(m) => m.training_scores(),
            FittedDetector::Knn(m) => m.training_scores(),
            FittedDetector::Mahalanobis(m) => m.training_scores(),
            FittedDetector::IsolationForest(m) => m.training_scores(),
        }
    }

    pub fn score_point(&self, point: &[f64]) -> f64 {
        match self {
            FittedDetector::Lof(m) => m.score_point(point),
            FittedDetector::Knn(m) => m.score_point(point),
            FittedDetector::Mahalanobis(m) => m.score_point(point),
            FittedDetector::IsolationForest(m) => m.score_point(point),
        }
    }
}

/// Detector scores over a regular grid of two raw features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryGrid {
    pub detector: String,
    pub feature_x: usize,
    pub feature_y: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `scores[iy][ix]` is the score at `(xs[ix], ys[iy])`.
    pub scores: Vec<Vec<f64>>,
}

impl BoundaryGrid {
    /// Grid cell closest to `(x, y)` as `(ix, iy)`.
    pub fn nearest_cell(&self, x: f64, y: f64) -> (usize, usize) {
        let nearest = |axis: &[f64], v: f64| {
            (0..axis.len())
                .min_by(|&a, &b| (axis[a] - v).abs().total_cmp(&(axis[b] - v).abs()))
                .unwrap_or(0)
        };
        (nearest(&self.xs, x), nearest(&self.ys, y))
    }

    pub fn score_at(&self, ix: usize, iy: usize) -> f64 {
        self.scores[iy][ix]
    }

    /// Long-format CSV: `x,y,score`, x varying fastest.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "{},{},{}\n",
            feature_label(self.feature_x),
            feature_label(self.feature_y),
            self.detector
        );
        for (iy, y) in self.ys.iter().enumerate() {
            for (ix, x) in self.xs.iter().enumerate() {
                out.push_str(&format!("{x},{y},{}\n", self.scores[iy][ix]));
            }
        }
        out
    }
}

fn feature_label(j: usize) -> String {
    METRIC_NAMES
        .get(j)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("f{j}"))
}

fn axis(values: &[f64], resolution: usize) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let pad = if span > 0.0 { 0.1 * span } else { 1.0 };
    let (start, end) = (lo - pad, hi + pad);
    let step = (end - start) / (resolution - 1) as f64;
    (0..resolution).map(|i| start + step * i as f64).collect()
}

/// Scores a `resolution x resolution` grid spanning each chosen raw feature's
/// range padded by 10% on both sides. The other features are pinned at their
/// medians; every grid point is standardized with the dataset's parameters
/// and scored as a query against the detector fitted on the full dataset.
pub fn decision_boundary_grid(
    kind: DetectorKind,
    matrix: &FeatureMatrix,
    feature_x: usize,
    feature_y: usize,
    resolution: usize,
    config: &DetectorConfig,
) -> Result<BoundaryGrid, DetectorError> {
    for index in [feature_x, feature_y] {
        if index >= matrix.n_cols() {
            return Err(DetectorError::InvalidColumn {
                index,
                cols: matrix.n_cols(),
            });
        }
    }
    if feature_x == feature_y {
        return Err(DetectorError::InvalidConfig(
            "boundary features must differ".into(),
        ));
    }
    if resolution < 2 {
        return Err(DetectorError::InvalidConfig(
            "grid resolution must be at least 2".into(),
        ));
    }
    let (standardized, params) = standardize(matrix)?;
    let model = kind.fit(&standardized, config)?;

    let xs = axis(&matrix.column(feature_x), resolution);
    let ys = axis(&matrix.column(feature_y), resolution);
    let mut point: Vec<f64> = (0..matrix.n_cols())
        .map(|j| median(&matrix.column(j)))
        .collect();
    let mut scores = Vec::with_capacity(resolution);
    for &y in &ys {
        let mut line = Vec::with_capacity(resolution);
        for &x in &xs {
            point[feature_x] = x;
            point[feature_y] = y;
            line.push(model.score_point(&params.transform(&point)));
        }
        scores.push(line);
    }
    Ok(BoundaryGrid {
        detector: kind.name().to_string(),
        feature_x,
        feature_y,
        xs,
        ys,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn matrix(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(matches!(
            FeatureMatrix::from_rows(vec![vec![1.0]]),
            Err(DetectorError::TooFewRows { .. })
        ));
        assert!(matches!(
            FeatureMatrix::from_rows(vec![vec![1.0], vec![f64::NAN]]),
            Err(DetectorError::NonFinite { row: 1, col: 0 })
        ));
        assert!(matches!(
            FeatureMatrix::from_rows(vec![vec![1.0, 2.0], vec![1.0]]),
            Err(DetectorError::RaggedRow { .. })
        ));
        assert!(matches!(
            FeatureMatrix::new(vec![vec![1.0], vec![2.0]], vec![1]),
            Err(DetectorError::IdMismatch { .. })
        ));
    }

    #[test]
    fn two_point_z_score() {
        let (z, params) = standardize(&matrix(&[&[1.0], &[3.0]])).unwrap();
        assert_eq!(z.column(0), vec![-1.0, 1.0]);
        assert_eq!(params.kept_features, vec![0]);
    }

    #[test]
    fn constant_column_dropped() {
        let (z, params) = standardize(&matrix(&[&[5.0, 1.0], &[5.0, 2.0], &[5.0, 3.0]])).unwrap();
        assert_eq!(z.n_cols(), 1);
        assert_eq!(params.kept_features, vec![1]);
        let col = z.column(0);
        assert_abs_diff_eq!(col.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
        let var = col.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn all_constant_is_an_error() {
        let m = matrix(&[&[5.0, 1.0], &[5.0, 1.0], &[5.0, 1.0]]);
        assert_eq!(standardize(&m).unwrap_err(), DetectorError::NoVariance);
    }

    #[test]
    fn quasi_constant_column_dropped_unless_focus_departs() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| vec![i as f64, if i == 2 { 1.0 } else { 0.0 }])
            .collect();
        let m = FeatureMatrix::from_rows(rows).unwrap();
        let (_, params) = standardize(&m).unwrap();
        assert_eq!(params.kept_features, vec![0]);
        let (_, params) = standardize_with_focus(&m, Some(2)).unwrap();
        assert_eq!(params.kept_features, vec![0, 1]);
        let (_, params) = standardize_with_focus(&m, Some(3)).unwrap();
        assert_eq!(params.kept_features, vec![0]);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_abs_diff_eq!(quantile(&v, 0.9), 4.6, epsilon = 1e-12);
        assert_eq!(median(&[1.0, 2.0, 3.0, 10.0]), 2.5);
    }

    #[test]
    fn classify_examples() {
        let config = DetectorConfig::default();
        assert_eq!(classify_score(1.0, &config), Classification::Ok);
        assert_eq!(classify_score(1.2, &config), Classification::Ok);
        assert_eq!(classify_score(1.35, &config), Classification::Review);
        assert_eq!(classify_score(1.5, &config), Classification::Review);
        assert_eq!(classify_score(4.96, &config), Classification::Anomaly);
        let v = ScoreVector::new("lof", &[1, 2, 3], vec![1.0, 1.35, 4.96]);
        assert_eq!(
            classify(&v, &config),
            vec![
                Classification::Ok,
                Classification::Review,
                Classification::Anomaly
            ]
        );
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::default().validate().is_ok());
        let c = DetectorConfig { review_threshold: 2.0, ..DetectorConfig::default() };
        assert!(c.validate().is_err());
        let c = DetectorConfig { review_threshold: f64::NAN, ..DetectorConfig::default() };
        assert!(c.validate().is_err());
        let c = DetectorConfig { subsample_size: 1, ..DetectorConfig::default() };
        assert!(c.validate().is_err());
        assert_eq!(DetectorConfig::default().effective_k(25), 20);
        assert_eq!(DetectorConfig::default().effective_k(11), 10);
    }

    #[test]
    fn ranking_breaks_ties_by_id() {
        let v = ScoreVector::new("x", &[7, 3, 5], vec![1.0, 2.0, 2.0]);
        assert_eq!(v.ranking(), vec![3, 5, 7]);
        assert_eq!(v.score_for(5), Some(2.0));
        assert_eq!(v.score_for(9), None);
    }

    #[test]
    fn detector_names_round_trip() {
        for kind in DetectorKind::ALL {
            assert_eq!(kind.name().parse::<DetectorKind>().unwrap(), kind);
        }
        assert!("svm".parse::<DetectorKind>().is_err());
    }

    #[test]
    fn grid_shape_and_validation() {
        let m = matrix(&[&[0.0, 0.0], &[1.0, 0.5], &[2.0, 2.0], &[3.0, 1.0], &[0.5, 3.0]]);
        let config = DetectorConfig::default();
        for kind in DetectorKind::ALL {
            let g = decision_boundary_grid(kind, &m, 0, 1, 2, &config).unwrap();
            assert_eq!(g.scores.len() * g.scores[0].len(), 4);
            assert_eq!(g.to_csv().lines().count(), 5);
        }
        assert!(decision_boundary_grid(DetectorKind::Lof, &m, 0, 0, 5, &config).is_err());
        assert!(matches!(
            decision_boundary_grid(DetectorKind::Lof, &m, 0, 2, 5, &config),
            Err(DetectorError::InvalidColumn { index: 2, .. })
        ));
        assert!(decision_boundary_grid(DetectorKind::Lof, &m, 0, 1, 1, &config).is_err());
    }

    #[test]
    fn grid_axes_pad_range() {
        let a = axis(&[0.0, 10.0], 3);
        assert_eq!(a, vec![-1.0, 5.0, 11.0]);
    }
}
