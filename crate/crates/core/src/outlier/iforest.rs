use rand::seq::index;
use rand::Rng;

use super::{DetectorKind, IForestParams, OutlierError, OutlierScoreVector};
use crate::data::FeatureMatrix;
use crate::rng::substream;

const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Average path length of an unsuccessful BST search over `n` points,
/// used to normalise isolation depths.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (m.ln() + EULER_MASCHERONI) - 2.0 * m / n as f64
        }
    }
}

/// `2^(-E[h] / c(n))`.
pub fn score_from_path_length(mean_path: f64, sample_size: usize) -> f64 {
    let c = average_path_length(sample_size);
    if c == 0.0 {
        return 0.5;
    }
    (-mean_path / c).exp2()
}

#[derive(Debug, Clone)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { size: usize },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn grow<R: Rng>(x: &FeatureMatrix, sample: Vec<usize>, height_limit: usize, rng: &mut R) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        tree.build(x, sample, 0, height_limit, rng);
        tree
    }

    fn build<R: Rng>(&mut self, x: &FeatureMatrix, rows: Vec<usize>, depth: usize, limit: usize, rng: &mut R) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if depth >= limit || rows.len() <= 1 {
            return id;
        }
        let d = x.n_cols();
        let mut spans = Vec::with_capacity(d);
        for j in 0..d {
            let (lo, hi) = rows.iter().map(|&i| x.row(i)[j]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if hi > lo {
                spans.push((j, lo, hi));
            }
        }
        if spans.is_empty() {
            return id;
        }
        let (feature, lo, hi) = spans[rng.random_range(0..spans.len())];
        let threshold = rng.random_range(lo..hi);
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| x.row(i)[feature] < threshold);
        let left = self.build(x, left_rows, depth + 1, limit, rng);
        let right = self.build(x, right_rows, depth + 1, limit, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    fn path_length(&self, row: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Leaf { size } => return depth + average_path_length(size),
                Node::Split { feature, threshold, left, right } => {
                    node = if row[feature] < threshold { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

/// A fitted isolation forest. Tree `t` is grown from sub-stream `t` of the
/// seed, so the forest does not depend on construction order.
#[derive(Debug, Clone)]
pub struct IsolationForest {
    trees: Vec<Tree>,
    sample_size: usize,
}

impl IsolationForest {
    pub fn fit(x: &FeatureMatrix, params: &IForestParams, seed: u64) -> Result<Self, OutlierError> {
        let n = x.n_rows();
        if n < 8 {
            return Err(OutlierError::TooFewPoints { detector: DetectorKind::Iforest, required: 7, found: n });
        }
        if params.n_estimators == 0 || params.subsample < 2 {
            return Err(OutlierError::InvalidParameter("iforest needs n_estimators >= 1 and subsample >= 2".into()));
        }
        let sample_size = params.subsample.min(n);
        let height_limit = (sample_size as f64).log2().ceil() as usize;
        let trees = (0..params.n_estimators)
            .map(|t| {
                let mut rng = substream(seed, t as u64);
                let sample = index::sample(&mut rng, n, sample_size).into_vec();
                Tree::grow(x, sample, height_limit, &mut rng)
            })
            .collect();
        Ok(Self { trees, sample_size })
    }

    pub fn mean_path_length(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        score_from_path_length(self.mean_path_length(row), self.sample_size)
    }
}

pub fn iforest_scores(x: &FeatureMatrix, params: &IForestParams, seed: u64) -> Result<OutlierScoreVector, OutlierError> {
    let forest = IsolationForest::fit(x, params, seed)?;
    let scores = x.rows().map(|r| forest.score(r)).collect();
    Ok(OutlierScoreVector { detector: DetectorKind::Iforest, scores })
}
