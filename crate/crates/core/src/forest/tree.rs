//! CART growing on weighted samples.
//!
//! Split choice: among the sampled predictors, every midpoint between
//! adjacent distinct values is scored by the weighted child impurity
//! (Gini mass for classification, sum of squared errors for regression).
//! Candidates within a relative tolerance of the best score are tied; ties
//! go to the lowest predictor index, then the lowest threshold.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::table::Task;

/// Relative tolerance under which two split scores count as equal.
pub const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    /// `[predictor, threshold, left, right]`; rows with `x <= threshold` go left.
    Split(u32, f64, u32, u32),
    /// `[mean]` for regression, `[weight of class 0, weight of class 1]` for
    /// classification.
    Leaf(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Training rows excluded from this tree's bootstrap sample.
    pub oob: Vec<u32>,
}

impl Tree {
    pub fn leaf(value: Vec<f64>) -> Self {
        Self { nodes: vec![Node::Leaf(value)], oob: Vec::new() }
    }

    /// One split on `predictor` with two leaves.
    pub fn stump(predictor: usize, threshold: f64, left: Vec<f64>, right: Vec<f64>) -> Self {
        Self {
            nodes: vec![Node::Split(predictor as u32, threshold, 1, 2), Node::Leaf(left), Node::Leaf(right)],
            oob: Vec::new(),
        }
    }

    pub fn leaf_for(&self, x: &[f64]) -> &[f64] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split(var, thr, left, right) => {
                    i = if x[*var as usize] <= *thr { *left as usize } else { *right as usize };
                }
                Node::Leaf(v) => return v,
            }
        }
    }

    /// Regression value, or the class-1 vote (1, 0, or 0.5 on a tied leaf).
    pub fn predict(&self, x: &[f64], task: Task) -> f64 {
        let leaf = self.leaf_for(x);
        match task {
            Task::Regression => leaf[0],
            Task::Classification => vote(leaf),
        }
    }

    pub fn split_predictors(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split(v, ..) => Some(*v as usize),
            Node::Leaf(_) => None,
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

pub(crate) fn vote(leaf: &[f64]) -> f64 {
    match leaf[1].partial_cmp(&leaf[0]) {
        Some(std::cmp::Ordering::Greater) => 1.0,
        Some(std::cmp::Ordering::Less) => 0.0,
        _ => 0.5,
    }
}

/// One in-bag training row: weight for impurity/leaf values, count for node size.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub row: usize,
    pub weight: f64,
    pub count: usize,
}

pub(crate) struct Grower<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
    pub task: Task,
    pub mtry: usize,
    pub min_node_size: usize,
}

/// Chooses the winning candidate under the tie rule. Candidates are
/// `(predictor, threshold, score)`.
pub(crate) fn pick_split(candidates: &[(usize, f64, f64)], parent: f64) -> Option<(usize, f64)> {
    let tol = TIE_TOLERANCE * parent.abs().max(f64::MIN_POSITIVE);
    let best = candidates.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    // NaN-safe: a NaN score never counts as an improvement.
    if best.partial_cmp(&(parent - tol)) != Some(std::cmp::Ordering::Less) {
        return None;
    }
    candidates
        .iter()
        .filter(|c| c.2 <= best + tol)
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .map(|c| (c.0, c.1))
}

pub(crate) fn midpoint(a: f64, b: f64) -> Option<f64> {
    let m = a + (b - a) / 2.0;
    (a < m && m < b).then_some(m)
}

impl<'a> Grower<'a> {
    pub fn grow<R: Rng>(&self, samples: Vec<Sample>, rng: &mut R) -> Vec<Node> {
        let mut nodes = Vec::new();
        self.grow_node(samples, rng, &mut nodes);
        nodes
    }

    fn leaf(&self, samples: &[Sample]) -> Node {
        match self.task {
            Task::Regression => {
                let w: f64 = samples.iter().map(|s| s.weight).sum();
                let wy: f64 = samples.iter().map(|s| s.weight * self.y[s.row]).sum();
                Node::Leaf(vec![wy / w])
            }
            Task::Classification => {
                let mut counts = vec![0.0, 0.0];
                for s in samples {
                    counts[self.y[s.row] as usize] += s.weight;
                }
                Node::Leaf(counts)
            }
        }
    }

    fn grow_node<R: Rng>(&self, samples: Vec<Sample>, rng: &mut R, nodes: &mut Vec<Node>) -> u32 {
        let id = nodes.len() as u32;
        let size: usize = samples.iter().map(|s| s.count).sum();
        let first = self.y[samples[0].row];
        let pure = samples.iter().all(|s| self.y[s.row] == first);
        if pure || size < self.min_node_size || size < 2 {
            nodes.push(self.leaf(&samples));
            return id;
        }
        let Some((var, thr)) = self.best_split(&samples, rng) else {
            nodes.push(self.leaf(&samples));
            return id;
        };
        nodes.push(Node::Split(var as u32, thr, 0, 0));
        let (left, right): (Vec<Sample>, Vec<Sample>) = samples.into_iter().partition(|s| self.x[s.row][var] <= thr);
        let l = self.grow_node(left, rng, nodes);
        let r = self.grow_node(right, rng, nodes);
        nodes[id as usize] = Node::Split(var as u32, thr, l, r);
        id
    }

    fn best_split<R: Rng>(&self, samples: &[Sample], rng: &mut R) -> Option<(usize, f64)> {
        let p = self.x[0].len();
        let mut vars = sample(rng, p, self.mtry.min(p)).into_vec();
        vars.sort_unstable();

        let total_w: f64 = samples.iter().map(|s| s.weight).sum();
        let parent = match self.task {
            Task::Classification => {
                let w1: f64 = samples.iter().filter(|s| self.y[s.row] == 1.0).map(|s| s.weight).sum();
                let w0 = total_w - w1;
                total_w - (w0 * w0 + w1 * w1) / total_w
            }
            Task::Regression => {
                let mean = samples.iter().map(|s| s.weight * self.y[s.row]).sum::<f64>() / total_w;
                samples.iter().map(|s| s.weight * (self.y[s.row] - mean).powi(2)).sum()
            }
        };
        let centre = match self.task {
            Task::Regression => samples.iter().map(|s| s.weight * self.y[s.row]).sum::<f64>() / total_w,
            Task::Classification => 0.0,
        };

        let mut candidates = Vec::new();
        let mut order: Vec<Sample> = samples.to_vec();
        for &var in &vars {
            order.sort_by(|a, b| self.x[a.row][var].total_cmp(&self.x[b.row][var]).then(a.row.cmp(&b.row)));
            match self.task {
                Task::Classification => {
                    let total1: f64 = order.iter().filter(|s| self.y[s.row] == 1.0).map(|s| s.weight).sum();
                    let (mut l0, mut l1) = (0.0, 0.0);
                    for k in 0..order.len() - 1 {
                        let s = order[k];
                        if self.y[s.row] == 1.0 {
                            l1 += s.weight;
                        } else {
                            l0 += s.weight;
                        }
                        let (a, b) = (self.x[s.row][var], self.x[order[k + 1].row][var]);
                        if a == b {
                            continue;
                        }
                        let Some(thr) = midpoint(a, b) else { continue };
                        let lw = l0 + l1;
                        let r1 = total1 - l1;
                        let r0 = (total_w - total1) - l0;
                        let rw = r0 + r1;
                        let score = (lw - (l0 * l0 + l1 * l1) / lw) + (rw - (r0 * r0 + r1 * r1) / rw);
                        candidates.push((var, thr, score));
                    }
                }
                Task::Regression => {
                    let (tw, twy, twy2) = order.iter().fold((0.0, 0.0, 0.0), |acc, s| {
                        let y = self.y[s.row] - centre;
                        (acc.0 + s.weight, acc.1 + s.weight * y, acc.2 + s.weight * y * y)
                    });
                    let (mut lw, mut lwy, mut lwy2) = (0.0, 0.0, 0.0);
                    for k in 0..order.len() - 1 {
                        let s = order[k];
                        let y = self.y[s.row] - centre;
                        lw += s.weight;
                        lwy += s.weight * y;
                        lwy2 += s.weight * y * y;
                        let (a, b) = (self.x[s.row][var], self.x[order[k + 1].row][var]);
                        if a == b {
                            continue;
                        }
                        let Some(thr) = midpoint(a, b) else { continue };
                        let (rw, rwy, rwy2) = (tw - lw, twy - lwy, twy2 - lwy2);
                        let score = (lwy2 - lwy * lwy / lw).max(0.0) + (rwy2 - rwy * rwy / rw).max(0.0);
                        candidates.push((var, thr, score));
                    }
                }
            }
        }
        pick_split(&candidates, parent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn grow(x: &[Vec<f64>], y: &[f64], w: &[f64], task: Task) -> Vec<Node> {
        let samples = (0..x.len()).map(|row| Sample { row, weight: w[row], count: 1 }).collect();
        let g = Grower { x, y, task, mtry: x[0].len(), min_node_size: 1 };
        g.grow(samples, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn separable_binary_predictor() {
        let x = vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]];
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let nodes = grow(&x, &y, &[1.0; 4], Task::Classification);
        assert_eq!(nodes[0], Node::Split(0, 0.5, 1, 2));
        assert_eq!(nodes[1], Node::Leaf(vec![2.0, 0.0]));
        assert_eq!(nodes[2], Node::Leaf(vec![0.0, 2.0]));
    }

    #[test]
    fn regression_leaf_is_weighted_mean() {
        let x = vec![vec![1.0], vec![1.0], vec![1.0]];
        let y = vec![1.0, 2.0, 6.0];
        let nodes = grow(&x, &y, &[1.0, 1.0, 2.0], Task::Regression);
        assert_eq!(nodes, vec![Node::Leaf(vec![15.0 / 4.0])]);
    }

    #[test]
    fn tie_goes_to_lowest_predictor() {
        // Both predictors separate identically.
        let x = vec![vec![0.0, 10.0], vec![1.0, 20.0]];
        let y = vec![0.0, 1.0];
        let nodes = grow(&x, &y, &[1.0; 2], Task::Classification);
        assert_eq!(nodes[0], Node::Split(0, 0.5, 1, 2));
    }

    #[test]
    fn xor_without_gain_is_a_leaf() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = vec![0.0, 1.0, 1.0, 0.0];
        let nodes = grow(&x, &y, &[1.0; 4], Task::Classification);
        assert_eq!(nodes.len(), 1);
    }

    #[test]
    fn vote_handles_ties() {
        assert_eq!(vote(&[1.0, 2.0]), 1.0);
        assert_eq!(vote(&[2.0, 1.0]), 0.0);
        assert_eq!(vote(&[1.0, 1.0]), 0.5);
    }
}
