//! Mahalanobis distance to the sample mean under a ridge-regularized
//! sample covariance.

use nalgebra::{DMatrix, DVector};

use super::{DetectorError, FeatureMatrix, ScoreVector};

#[derive(Debug, Clone)]
pub struct MahalanobisModel {
    row_ids: Vec<u64>,
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    scores: Vec<f64>,
}

impl MahalanobisModel {
    pub fn fit(matrix: &FeatureMatrix, ridge: f64) -> Result<Self, DetectorError> {
        if !(ridge > 0.0 && ridge.is_finite()) {
            return Err(DetectorError::InvalidConfig(format!(
                "covariance ridge must be positive, got {ridge}"
            )));
        }
        let n = matrix.n_rows();
        let d = matrix.n_cols();
        let mut mean = DVector::zeros(d);
        for row in matrix.rows() {
            mean += DVector::from_column_slice(row);
        }
        mean /= n as f64;

        let mut cov = DMatrix::zeros(d, d);
        for row in matrix.rows() {
            let centered = DVector::from_column_slice(row) - &mean;
            cov += &centered * centered.transpose();
        }
        cov /= (n - 1) as f64;
        for i in 0..d {
            cov[(i, i)] += ridge;
        }
        let precision = cov
            .cholesky()
            .ok_or_else(|| {
                DetectorError::InvalidConfig("regularized covariance is not positive definite".into())
            })?
            .inverse();

        let mut model = Self {
            row_ids: matrix.row_ids().to_vec(),
            mean,
            precision,
            scores: Vec::new(),
        };
        model.scores = matrix.rows().map(|r| model.score_point(r)).collect();
        Ok(model)
    }

    pub fn training_scores(&self) -> ScoreVector {
        ScoreVector::new("mahalanobis", &self.row_ids, self.scores.clone())
    }

    pub fn score_point(&self, point: &[f64]) -> f64 {
        let centered = DVector::from_column_slice(point) - &self.mean;
        let q = (centered.transpose() * &self.precision * &centered)[(0, 0)];
        q.max(0.0).sqrt()
    }
}

pub fn mahalanobis_scores(matrix: &FeatureMatrix, ridge: f64) -> Result<ScoreVector, DetectorError> {
    Ok(MahalanobisModel::fit(matrix, ridge)?.training_scores())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn center_scores_zero() {
        let m = FeatureMatrix::from_rows(vec![
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![2.0, 2.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let model = MahalanobisModel::fit(&m, 1e-6).unwrap();
        assert_abs_diff_eq!(model.score_point(&[1.0, 1.0]), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(model.training_scores().scores[4], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_covariance_gives_euclidean_distance() {
        // The four corners of the square [-1, 1]^2 plus the same corners
        // again have sample covariance (n/(n-1)) * I; rescale so it is I.
        let s = (7.0f64 / 8.0).sqrt();
        let rows = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)]
            .iter()
            .cycle()
            .take(8)
            .map(|&(x, y)| vec![x * s, y * s])
            .collect();
        let m = FeatureMatrix::from_rows(rows).unwrap();
        let model = MahalanobisModel::fit(&m, 1e-12).unwrap();
        assert_abs_diff_eq!(model.score_point(&[3.0, 4.0]), 5.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_non_positive_ridge() {
        let m = FeatureMatrix::from_rows(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert!(mahalanobis_scores(&m, 0.0).is_err());
        assert!(mahalanobis_scores(&m, -1.0).is_err());
    }

    #[test]
    fn collinear_data_stays_finite() {
        let m = FeatureMatrix::from_rows((0..6).map(|i| vec![i as f64, 2.0 * i as f64]).collect())
            .unwrap();
        let s = mahalanobis_scores(&m, 1e-6).unwrap();
        assert!(s.scores.iter().all(|v| v.is_finite()));
    }
}
