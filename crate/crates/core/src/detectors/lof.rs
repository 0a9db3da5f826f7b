//! Local Outlier Factor.
//!
//! For a row `a` with neighborhood `N(a)` (every other row within its
//! k-distance, so ties can make `N(a)` larger than `k`):
//!
//! ```text
//! reach(a, b) = max(k_dist(b), d(a, b))
//! lrd(a)      = 1 / (mean_{b in N(a)} reach(a, b) + DELTA)
//! lof(a)      = mean_{b in N(a)} lrd(b) / lrd(a)
//! ```
//!
//! Scores near 1 mean the row is as dense as its neighbors.

use super::{euclidean, DetectorError, FeatureMatrix, ScoreVector};

/// Keeps `lrd` finite when a row coincides with all of its neighbors.
pub const DELTA: f64 = 1e-12;

/// k-distance of a point given its distances to the candidate neighbors,
/// and the indices of every neighbor within that distance ordered by
/// (distance, index).
fn neighborhood(distances: &[(usize, f64)], k: usize) -> (f64, Vec<usize>) {
    let mut sorted = distances.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let k_dist = sorted[k - 1].1;
    let neighbors = sorted
        .iter()
        .take_while(|(_, d)| *d <= k_dist)
        .map(|&(j, _)| j)
        .collect();
    (k_dist, neighbors)
}

fn check_k(k: usize, n: usize) -> Result<(), DetectorError> {
    if k == 0 || k >= n {
        return Err(DetectorError::InvalidK { k, n });
    }
    Ok(())
}

/// Distance to the k-th nearest other row of `i`, with every row at most
/// that far away.
pub fn k_distance_neighbors(
    matrix: &FeatureMatrix,
    i: usize,
    k: usize,
) -> Result<(f64, Vec<usize>), DetectorError> {
    check_k(k, matrix.n_rows())?;
    let distances: Vec<(usize, f64)> = (0..matrix.n_rows())
        .filter(|&j| j != i)
        .map(|j| (j, matrix.distance(i, j)))
        .collect();
    Ok(neighborhood(&distances, k))
}

#[derive(Debug, Clone)]
pub struct LofModel {
    data: FeatureMatrix,
    k: usize,
    k_dist: Vec<f64>,
    lrd: Vec<f64>,
    scores: Vec<f64>,
}

impl LofModel {
    pub fn fit(matrix: &FeatureMatrix, k: usize) -> Result<Self, DetectorError> {
        let n = matrix.n_rows();
        if n < 3 {
            return Err(DetectorError::TooFewRows { needed: 3, got: n });
        }
        check_k(k, n)?;
        let dist = matrix.distance_matrix();
        let (k_dist, neighbors): (Vec<f64>, Vec<Vec<usize>>) = (0..n)
            .map(|i| {
                let others: Vec<(usize, f64)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (j, dist[i * n + j]))
                    .collect();
                neighborhood(&others, k)
            })
            .unzip();
        let lrd: Vec<f64> = (0..n)
            .map(|a| {
                let reach = neighbors[a]
                    .iter()
                    .map(|&b| k_dist[b].max(dist[a * n + b]))
                    .sum::<f64>()
                    / neighbors[a].len() as f64;
                1.0 / (reach + DELTA)
            })
            .collect();
        let scores = (0..n)
            .map(|a| {
                let mean_lrd =
                    neighbors[a].iter().map(|&b| lrd[b]).sum::<f64>() / neighbors[a].len() as f64;
                mean_lrd / lrd[a]
            })
            .collect();
        Ok(Self {
            data: matrix.clone(),
            k,
            k_dist,
            lrd,
            scores,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn local_reachability_density(&self) -> &[f64] {
        &self.lrd
    }

    pub fn training_scores(&self) -> ScoreVector {
        ScoreVector::new("lof", self.data.row_ids(), self.scores.clone())
    }

    /// LOF of a point that is not part of the fitted data, using the fitted
    /// k-distances and densities of its neighbors.
    pub fn score_point(&self, point: &[f64]) -> f64 {
        let distances: Vec<(usize, f64)> = self
            .data
            .rows()
            .enumerate()
            .map(|(j, row)| (j, euclidean(point, row)))
            .collect();
        let (_, neighbors) = neighborhood(&distances, self.k);
        let reach = neighbors
            .iter()
            .map(|&b| self.k_dist[b].max(distances[b].1))
            .sum::<f64>()
            / neighbors.len() as f64;
        let lrd = 1.0 / (reach + DELTA);
        let mean_lrd =
            neighbors.iter().map(|&b| self.lrd[b]).sum::<f64>() / neighbors.len() as f64;
        mean_lrd / lrd
    }
}

pub fn lof_scores(matrix: &FeatureMatrix, k: usize) -> Result<ScoreVector, DetectorError> {
    Ok(LofModel::fit(matrix, k)?.training_scores())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeSet;

    fn line(points: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_rows(points.iter().map(|&p| vec![p]).collect()).unwrap()
    }

    fn set(v: Vec<usize>) -> BTreeSet<usize> {
        v.into_iter().collect()
    }

    #[test]
    fn k_distance_on_a_line() {
        let m = line(&[0.0, 1.0, 2.0, 10.0]);
        let (d, nb) = k_distance_neighbors(&m, 0, 2).unwrap();
        assert_eq!(d, 2.0);
        assert_eq!(set(nb), set(vec![1, 2]));
        let (d, nb) = k_distance_neighbors(&m, 3, 2).unwrap();
        assert_eq!(d, 9.0);
        assert_eq!(set(nb), set(vec![2, 1]));
    }

    #[test]
    fn ties_extend_the_neighborhood() {
        // Point 1 has two neighbors at distance 1; with k = 1 both are kept.
        let m = line(&[0.0, 1.0, 2.0, 10.0]);
        let (d, nb) = k_distance_neighbors(&m, 1, 1).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(nb, vec![0, 2]);
    }

    #[test]
    fn identical_points() {
        let m = line(&[3.0, 3.0, 3.0, 3.0]);
        let (d, nb) = k_distance_neighbors(&m, 2, 2).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(set(nb), set(vec![0, 1, 3]));
        let scores = lof_scores(&m, 2).unwrap();
        for s in scores.scores {
            assert!(s.is_finite());
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn hand_computed_line() {
        let m = line(&[0.0, 1.0, 2.0, 10.0]);
        let model = LofModel::fit(&m, 2).unwrap();
        let lrd = model.local_reachability_density();
        let expected_lrd = [2.0 / 3.0, 0.5, 2.0 / 3.0, 2.0 / 17.0];
        for (a, b) in lrd.iter().zip(expected_lrd) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
        let s = model.training_scores().scores;
        assert_abs_diff_eq!(s[3], ((0.5 + 2.0 / 3.0) / 2.0) / (2.0 / 17.0), epsilon = 1e-9);
        assert_abs_diff_eq!(s[0], 0.875, epsilon = 1e-9);
    }

    #[test]
    fn uniform_grid_interior_is_near_one() {
        let rows = (0..25)
            .map(|i| vec![(i % 5) as f64, (i / 5) as f64])
            .collect();
        let m = FeatureMatrix::from_rows(rows).unwrap();
        let s = lof_scores(&m, 4).unwrap().scores;
        for y in 1..4 {
            for x in 1..4 {
                let v = s[y * 5 + x];
                assert!((0.9..=1.1).contains(&v), "({x}, {y}) = {v}");
            }
        }
        // Corners are sparser than the interior; value from a brute-force
        // reference run.
        assert_abs_diff_eq!(s[0], 1.223_652_996_241_792, epsilon = 1e-9);
        assert_abs_diff_eq!(s[12], 0.906_163_678_644_030_8, epsilon = 1e-9);
    }

    #[test]
    fn k_out_of_range() {
        let m = line(&[0.0, 1.0, 2.0, 10.0]);
        assert_eq!(
            lof_scores(&m, 4).unwrap_err(),
            DetectorError::InvalidK { k: 4, n: 4 }
        );
        assert!(lof_scores(&m, 0).is_err());
        assert!(lof_scores(&line(&[0.0, 1.0]), 1).is_err());
    }

    #[test]
    fn query_scoring_matches_a_refit_far_away() {
        let m = line(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let model = LofModel::fit(&m, 2).unwrap();
        assert!(model.score_point(&[50.0]) > model.score_point(&[2.0]));
        assert!(model.score_point(&[2.0]) < 1.2);
    }
}
