//! Gradient-boosted regression trees on the logistic loss.
//!
//! Trees are grown depth-first with exact greedy splits on presorted feature
//! orders. Leaves take the regularised Newton step `−ΣG / (ΣH + λ)` scaled by
//! the learning rate. If a tree would increase the weighted training loss its
//! leaves are halved until the loss no longer rises, so the loss trace is
//! non-increasing by construction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::data::{FeatureMatrix, QualityLabel};
use crate::rng::{streams, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Weight class `c` by `n / (2 * count(c))`.
    pub class_weighting: bool,
    pub l2_regularization: f64,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub row_subsample: f64,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 4,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            class_weighting: true,
            l2_regularization: 1.0,
            row_subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbdtParams {
    pub(crate) fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidParameter(m.to_owned()));
        if self.n_trees == 0 {
            return bad("gbdt.n_trees must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("gbdt.learning_rate must lie in (0, 1]");
        }
        if self.min_samples_leaf == 0 {
            return bad("gbdt.min_samples_leaf must be >= 1");
        }
        if !(self.l2_regularization >= 0.0) {
            return bad("gbdt.l2_regularization must be >= 0");
        }
        if !(self.row_subsample > 0.0 && self.row_subsample <= 1.0) {
            return bad("gbdt.row_subsample must lie in (0, 1]");
        }
        Ok(())
    }
}

/// First and second derivative of the weighted logistic loss with respect to
/// the raw score, given the current probability `p`.
pub fn gbdt_gradients(p: f64, y: QualityLabel, w: f64) -> (f64, f64) {
    let target = f64::from(y.value());
    (w * (p - target), w * p * (1.0 - p))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `w · (−y ln σ(z) − (1 − y) ln(1 − σ(z)))`, evaluated stably.
pub fn weighted_logistic_loss(raw: f64, y: QualityLabel, w: f64) -> f64 {
    w * (softplus(raw) - f64::from(y.value()) * raw)
}

#[derive(Debug, Clone)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    id = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for node in &mut self.nodes {
            if let Node::Leaf { value } = node {
                *value *= factor;
            }
        }
    }

    fn dump(&self, id: usize) -> TreeDump {
        match self.nodes[id] {
            Node::Leaf { value } => TreeDump::Leaf { leaf: value },
            Node::Split { feature, threshold, left, right } => {
                TreeDump::Split { split: feature, threshold, left: Box::new(self.dump(left)), right: Box::new(self.dump(right)) }
            }
        }
    }
}

/// Nested, serialisable view of one tree. Rows with `x[split] <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeDump {
    Split { split: usize, threshold: f64, left: Box<TreeDump>, right: Box<TreeDump> },
    Leaf { leaf: f64 },
}

struct Grower<'a> {
    x: &'a FeatureMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbdtParams,
    nodes: Vec<Node>,
    side: Vec<bool>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.params.l2_regularization) * self.params.learning_rate
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.l2_regularization)
    }

    /// `sorted[j]` holds the node's rows ordered by feature `j`.
    fn grow(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let rows = &sorted[0];
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: self.leaf_value(g, h) });

        let min_leaf = self.params.min_samples_leaf;
        let n = rows.len();
        if depth >= self.params.max_depth || n < 2 * min_leaf {
            return id;
        }

        let parent = self.score(g, h);
        let mut best: Option<BestSplit> = None;
        for (feature, order) in sorted.iter().enumerate() {
            let (mut gl, mut hl) = (0.0, 0.0);
            for pos in 0..n - 1 {
                let i = order[pos];
                gl += self.grad[i];
                hl += self.hess[i];
                let left_count = pos + 1;
                if left_count < min_leaf || n - left_count < min_leaf {
                    continue;
                }
                let v = self.x.row(i)[feature];
                let next = self.x.row(order[pos + 1])[feature];
                if next <= v {
                    continue;
                }
                let gain = 0.5 * (self.score(gl, hl) + self.score(g - gl, h - hl) - parent);
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(BestSplit { gain, feature, threshold });
                }
            }
        }

        let Some(split) = best else { return id };
        for &i in rows {
            self.side[i] = self.x.row(i)[split.feature] <= split.threshold;
        }
        let (mut left_sorted, mut right_sorted) = (Vec::with_capacity(sorted.len()), Vec::with_capacity(sorted.len()));
        for order in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| self.side[i]);
            left_sorted.push(l);
            right_sorted.push(r);
        }
        let left = self.grow(left_sorted, depth + 1);
        let right = self.grow(right_sorted, depth + 1);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }
}

#[derive(Debug, Clone)]
pub struct GbdtModel {
    base_score: f64,
    trees: Vec<Tree>,
    loss_trace: Vec<f64>,
}

impl GbdtModel {
    /// Expects both classes to be present in `y`.
    pub(crate) fn fit(params: &GbdtParams, x: &FeatureMatrix, y: &[QualityLabel]) -> Self {
        let n = y.len();
        let n_bad = y.iter().filter(|l| l.is_bad()).count();
        let weights: Vec<f64> = if params.class_weighting {
            let w_bad = n as f64 / (2.0 * n_bad as f64);
            let w_good = n as f64 / (2.0 * (n - n_bad) as f64);
            y.iter().map(|l| if l.is_bad() { w_bad } else { w_good }).collect()
        } else {
            vec![1.0; n]
        };
        let total_w: f64 = weights.iter().sum();
        let bad_w: f64 = weights.iter().zip(y).filter(|(_, l)| l.is_bad()).map(|(w, _)| w).sum();
        let rate = bad_w / total_w;
        let base_score = (rate / (1.0 - rate)).ln();

        let orders: Vec<Vec<usize>> = (0..x.n_cols())
            .map(|j| {
                let mut o: Vec<usize> = (0..n).collect();
                o.sort_by(|&a, &b| x.row(a)[j].total_cmp(&x.row(b)[j]).then(a.cmp(&b)));
                o
            })
            .collect();

        let loss = |raw: &[f64]| -> f64 { raw.iter().zip(y).zip(&weights).map(|((&r, &l), &w)| weighted_logistic_loss(r, l, w)).sum() };

        let mut rng = substream(params.seed, streams::GBDT);
        let mut raw = vec![base_score; n];
        let mut current = loss(&raw);
        let mut loss_trace = vec![current];
        let mut trees = Vec::with_capacity(params.n_trees);
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut in_sample = vec![true; n];

        for _ in 0..params.n_trees {
            for i in 0..n {
                let (g, h) = gbdt_gradients(sigmoid(raw[i]), y[i], weights[i]);
                grad[i] = g;
                hess[i] = h;
            }
            if params.row_subsample < 1.0 {
                for flag in in_sample.iter_mut() {
                    *flag = rng.random_bool(params.row_subsample);
                }
            }
            let sorted: Vec<Vec<usize>> = orders.iter().map(|o| o.iter().copied().filter(|&i| in_sample[i]).collect()).collect();
            if sorted[0].is_empty() {
                continue;
            }
            let mut grower = Grower { x, grad: &grad, hess: &hess, params, nodes: Vec::new(), side: vec![false; n] };
            grower.grow(sorted, 0);
            let mut tree = Tree { nodes: grower.nodes };

            let delta: Vec<f64> = x.rows().map(|r| tree.predict(r)).collect();
            let mut factor = 1.0;
            let mut candidate: Vec<f64>;
            loop {
                candidate = raw.iter().zip(&delta).map(|(r, d)| r + factor * d).collect();
                let new_loss = loss(&candidate);
                if new_loss <= current {
                    current = new_loss;
                    break;
                }
                factor *= 0.5;
                if factor < 1e-12 {
                    factor = 0.0;
                    candidate = raw.clone();
                    break;
                }
            }
            if factor != 1.0 {
                tree.scale(factor);
            }
            raw = candidate;
            loss_trace.push(current);
            trees.push(tree);
        }
        Self { base_score, trees, loss_trace }
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Weighted training loss before boosting and after each tree.
    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_bad(&self, row: &[f64]) -> f64 {
        sigmoid(self.raw_score(row))
    }

    pub fn dump_trees(&self) -> Vec<TreeDump> {
        self.trees.iter().map(|t| t.dump(0)).collect()
    }
}
