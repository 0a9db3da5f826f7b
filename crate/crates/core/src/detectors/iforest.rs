//! Isolation forest with id-keyed, counter-based randomness.
//!
//! Every random draw is taken from a ChaCha stream whose key is
//! `(seed, tree, purpose, id)`: subsample membership is keyed by the row's
//! release id and split choices by the node's position in the tree. Scores
//! therefore depend only on the set of `(id, row)` pairs, not on row order,
//! and are identical on every platform.

use rand::distr::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DetectorError, FeatureMatrix, ScoreVector};

const SUBSAMPLE_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn keyed_rng(seed: u64, tree: u64, purpose: u64, id: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([seed, tree, purpose, id]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Average path length of an unsuccessful binary-search-tree lookup among
/// `m` points; normalizes isolation depths.
pub fn average_path_length(m: usize) -> f64 {
    match m {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = m as f64;
            2.0 * ((m - 1.0).ln() + EULER_GAMMA) - 2.0 * (m - 1.0) / m
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn build(matrix: &FeatureMatrix, members: Vec<usize>, depth_limit: usize, seed: u64, tree: u64) -> Self {
        let mut nodes = Vec::new();
        Self::grow(&mut nodes, matrix, members, 0, 0, depth_limit, seed, tree);
        Tree { nodes }
    }

    /// Appends the subtree for `members` and returns its index. `position`
    /// is the node's heap number (root 0, children 2p+1 and 2p+2).
    #[allow(clippy::too_many_arguments)]
    fn grow(
        nodes: &mut Vec<Node>,
        matrix: &FeatureMatrix,
        members: Vec<usize>,
        position: u64,
        depth: usize,
        depth_limit: usize,
        seed: u64,
        tree: u64,
    ) -> usize {
        let index = nodes.len();
        nodes.push(Node::Leaf { size: members.len() });
        if depth >= depth_limit || members.len() <= 1 {
            return index;
        }
        let splittable: Vec<(usize, f64, f64)> = (0..matrix.n_cols())
            .filter_map(|j| {
                let (lo, hi) = members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    let v = matrix.get(r, j);
                    (lo.min(v), hi.max(v))
                });
                (hi > lo).then_some((j, lo, hi))
            })
            .collect();
        if splittable.is_empty() {
            return index;
        }
        let mut rng = keyed_rng(seed, tree, SPLIT_STREAM, position);
        let (feature, lo, hi) = splittable[rng.random_range(0..splittable.len() as u64) as usize];
        let u: f64 = rng.sample(Open01);
        let threshold = lo + u * (hi - lo);
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            members.into_iter().partition(|&r| matrix.get(r, feature) < threshold);
        let left = Self::grow(nodes, matrix, left_rows, 2 * position + 1, depth + 1, depth_limit, seed, tree);
        let right = Self::grow(nodes, matrix, right_rows, 2 * position + 2, depth + 1, depth_limit, seed, tree);
        nodes[index] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        index
    }

    fn path_length(&self, point: &[f64]) -> f64 {
        let mut index = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[index] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    index = if point[feature] < threshold { left } else { right };
                    depth += 1.0;
                }
                Node::Leaf { size } => return depth + average_path_length(size),
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct IsolationForest {
    trees: Vec<Tree>,
    sample_size: usize,
    row_ids: Vec<u64>,
    scores: Vec<f64>,
}

impl IsolationForest {
    pub fn fit(
        matrix: &FeatureMatrix,
        tree_count: usize,
        subsample_size: usize,
        seed: u64,
    ) -> Result<Self, DetectorError> {
        if tree_count == 0 {
            return Err(DetectorError::InvalidConfig("tree_count must be positive".into()));
        }
        if subsample_size < 2 {
            return Err(DetectorError::InvalidConfig(
                "subsample_size must be at least 2".into(),
            ));
        }
        let n = matrix.n_rows();
        let sample_size = subsample_size.min(n);
        let depth_limit = (sample_size as f64).log2().ceil() as usize;
        let ids = matrix.row_ids();

        let trees = (0..tree_count as u64)
            .map(|t| {
                let mut keyed: Vec<(u64, u64, usize)> = (0..n)
                    .map(|r| (keyed_rng(seed, t, SUBSAMPLE_STREAM, ids[r]).next_u64(), ids[r], r))
                    .collect();
                keyed.sort_unstable();
                let members = keyed.into_iter().take(sample_size).map(|(_, _, r)| r).collect();
                Tree::build(matrix, members, depth_limit, seed, t)
            })
            .collect();

        let mut forest = Self {
            trees,
            sample_size,
            row_ids: ids.to_vec(),
            scores: Vec::new(),
        };
        forest.scores = matrix.rows().map(|r| forest.score_point(r)).collect();
        Ok(forest)
    }

    pub fn training_scores(&self) -> ScoreVector {
        ScoreVector::new("iforest", &self.row_ids, self.scores.clone())
    }

    /// `2^(-E[h(x)] / c(m))`, in `(0, 1]`; values near 1 are isolated early.
    pub fn score_point(&self, point: &[f64]) -> f64 {
        let mean_path = self.trees.iter().map(|t| t.path_length(point)).sum::<f64>()
            / self.trees.len() as f64;
        2f64.powf(-mean_path / average_path_length(self.sample_size))
    }
}

pub fn isolation_forest_scores(
    matrix: &FeatureMatrix,
    tree_count: usize,
    subsample_size: usize,
    seed: u64,
) -> Result<ScoreVector, DetectorError> {
    Ok(IsolationForest::fit(matrix, tree_count, subsample_size, seed)?.training_scores())
}
