//! Mean distance to the k nearest neighbors.

use super::{euclidean, DetectorError, FeatureMatrix, ScoreVector};

fn mean_of_k_smallest(mut distances: Vec<f64>, k: usize) -> f64 {
    distances.sort_by(f64::total_cmp);
    distances[..k].iter().sum::<f64>() / k as f64
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    data: FeatureMatrix,
    k: usize,
    scores: Vec<f64>,
}

impl KnnModel {
    pub fn fit(matrix: &FeatureMatrix, k: usize) -> Result<Self, DetectorError> {
        let n = matrix.n_rows();
        if k == 0 || k >= n {
            return Err(DetectorError::InvalidK { k, n });
        }
        let scores = (0..n)
            .map(|i| {
                let d = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| matrix.distance(i, j))
                    .collect();
                mean_of_k_smallest(d, k)
            })
            .collect();
        Ok(Self {
            data: matrix.clone(),
            k,
            scores,
        })
    }

    pub fn training_scores(&self) -> ScoreVector {
        ScoreVector::new("knn", self.data.row_ids(), self.scores.clone())
    }

    pub fn score_point(&self, point: &[f64]) -> f64 {
        let d = self.data.rows().map(|r| euclidean(point, r)).collect();
        mean_of_k_smallest(d, self.k)
    }
}

pub fn knn_outlier_scores(matrix: &FeatureMatrix, k: usize) -> Result<ScoreVector, DetectorError> {
    Ok(KnnModel::fit(matrix, k)?.training_scores())
}
