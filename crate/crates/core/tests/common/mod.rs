// Helpers shared by the integration test targets.
#![allow(dead_code)]

use heatwave::forest::{Node, Tree};
use heatwave::table::{Target, Task, TrainingTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Recursive tree used to compare a fitted tree with the oracle.
#[derive(Debug, Clone, PartialEq)]
pub enum OTree {
    Split { var: usize, thr: f64, left: Box<OTree>, right: Box<OTree> },
    Leaf(Vec<f64>),
}

pub fn from_flat(tree: &Tree) -> OTree {
    fn go(nodes: &[Node], i: usize) -> OTree {
        match &nodes[i] {
            Node::Split(v, t, l, r) => OTree::Split {
                var: *v as usize,
                thr: *t,
                left: Box::new(go(nodes, *l as usize)),
                right: Box::new(go(nodes, *r as usize)),
            },
            Node::Leaf(v) => OTree::Leaf(v.clone()),
        }
    }
    go(&tree.nodes, 0)
}

/// Exhaustive CART on weighted rows, written from the documented rules and
/// nothing else: every midpoint of every predictor is scored by direct
/// summation; scores within `1e-10 * parent` of the best tie, ties go to the
/// lowest predictor then the lowest threshold; a split needs a strict
/// decrease beyond that tolerance; a node is a leaf when pure, or when it
/// holds fewer than `min_node_size` (or 2) rows.
pub struct Oracle<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
    pub w: &'a [f64],
    pub task: Task,
    pub min_node_size: usize,
}

impl Oracle<'_> {
    fn impurity(&self, idx: &[usize]) -> f64 {
        match self.task {
            Task::Classification => {
                let mut w = [0.0f64; 2];
                for &i in idx {
                    w[self.y[i] as usize] += self.w[i];
                }
                let total = w[0] + w[1];
                if total == 0.0 {
                    0.0
                } else {
                    total - (w[0] * w[0] + w[1] * w[1]) / total
                }
            }
            Task::Regression => {
                let total: f64 = idx.iter().map(|&i| self.w[i]).sum();
                let mean = idx.iter().map(|&i| self.w[i] * self.y[i]).sum::<f64>() / total;
                idx.iter().map(|&i| self.w[i] * (self.y[i] - mean).powi(2)).sum()
            }
        }
    }

    fn leaf(&self, idx: &[usize]) -> OTree {
        match self.task {
            Task::Classification => {
                let mut w = vec![0.0; 2];
                for &i in idx {
                    w[self.y[i] as usize] += self.w[i];
                }
                OTree::Leaf(w)
            }
            Task::Regression => {
                let total: f64 = idx.iter().map(|&i| self.w[i]).sum();
                OTree::Leaf(vec![idx.iter().map(|&i| self.w[i] * self.y[i]).sum::<f64>() / total])
            }
        }
    }

    pub fn grow(&self, idx: &[usize]) -> OTree {
        let pure = idx.iter().all(|&i| self.y[i] == self.y[idx[0]]);
        if pure || idx.len() < self.min_node_size || idx.len() < 2 {
            return self.leaf(idx);
        }
        let parent = self.impurity(idx);
        let p = self.x[0].len();
        let mut cands: Vec<(usize, f64, f64)> = Vec::new();
        for var in 0..p {
            let mut vals: Vec<f64> = idx.iter().map(|&i| self.x[i][var]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for pair in vals.windows(2) {
                let thr = pair[0] + (pair[1] - pair[0]) / 2.0;
                if !(pair[0] < thr && thr < pair[1]) {
                    continue;
                }
                let left: Vec<usize> = idx.iter().copied().filter(|&i| self.x[i][var] <= thr).collect();
                let right: Vec<usize> = idx.iter().copied().filter(|&i| self.x[i][var] > thr).collect();
                cands.push((var, thr, self.impurity(&left) + self.impurity(&right)));
            }
        }
        let tol = 1e-10 * parent.abs().max(f64::MIN_POSITIVE);
        let best = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
        if best.partial_cmp(&(parent - tol)) != Some(std::cmp::Ordering::Less) {
            return self.leaf(idx);
        }
        let (var, thr, _) = cands
            .iter()
            .filter(|c| c.2 <= best + tol)
            .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)))
            .copied()
            .unwrap();
        let left: Vec<usize> = idx.iter().copied().filter(|&i| self.x[i][var] <= thr).collect();
        let right: Vec<usize> = idx.iter().copied().filter(|&i| self.x[i][var] > thr).collect();
        OTree::Split { var, thr, left: Box::new(self.grow(&left)), right: Box::new(self.grow(&right)) }
    }
}

/// Same split structure; leaf values equal up to summation-order rounding.
pub fn same_tree(a: &OTree, b: &OTree) -> bool {
    match (a, b) {
        (OTree::Split { var: v1, thr: t1, left: l1, right: r1 }, OTree::Split { var: v2, thr: t2, left: l2, right: r2 }) => {
            v1 == v2 && t1 == t2 && same_tree(l1, l2) && same_tree(r1, r2)
        }
        (OTree::Leaf(x), OTree::Leaf(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| (p - q).abs() <= 1e-9 * (1.0 + p.abs().max(q.abs())))
        }
        _ => false,
    }
}

/// Splits only, ignoring leaf values.
pub fn same_splits(a: &OTree, b: &OTree) -> bool {
    match (a, b) {
        (OTree::Split { var: v1, thr: t1, left: l1, right: r1 }, OTree::Split { var: v2, thr: t2, left: l2, right: r2 }) => {
            v1 == v2 && t1 == t2 && same_splits(l1, l2) && same_splits(r1, r2)
        }
        (OTree::Leaf(_), OTree::Leaf(_)) => true,
        _ => false,
    }
}

/// Order-statistic conformal threshold for alpha = m/100, in integers:
/// k = ceil((n + 1)(100 - m) / 100), +∞ (None) when k > n.
pub fn oracle_threshold(sorted: &[f64], m: u32) -> Option<f64> {
    let n = sorted.len() as u64;
    let k = ((n + 1) * (100 - m as u64)).div_ceil(100);
    (k >= 1 && k <= n).then(|| sorted[k as usize - 1])
}

pub struct Case {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub task: Task,
    pub min_node_size: usize,
}

/// Small random dataset; coarse integer predictors provoke ties.
pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=12);
    let p = rng.gen_range(1..=3);
    let task = if rng.gen() { Task::Classification } else { Task::Regression };
    // Small integer grids provoke ties; continuous values test ordinary splits.
    let coarse = rng.gen_bool(0.6);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| if coarse { rng.gen_range(0..4) as f64 } else { rng.gen_range(-5.0..5.0) }).collect())
        .collect();
    let mut y: Vec<f64> = (0..n)
        .map(|_| match task {
            Task::Classification => rng.gen_range(0..2) as f64,
            Task::Regression => rng.gen_range(0..5) as f64,
        })
        .collect();
    // Both classes / a non-constant response.
    if y.iter().all(|v| *v == y[0]) {
        y[0] = if y[0] == 0.0 { 1.0 } else { 0.0 };
    }
    let w = if rng.gen_bool(0.5) { vec![1.0; n] } else { (0..n).map(|_| rng.gen_range(1..4) as f64).collect() };
    Case { x, y, w, task, min_node_size: rng.gen_range(1..=3) }
}

pub fn table(c: &Case) -> TrainingTable {
    let p = c.x[0].len();
    let target = match c.task {
        Task::Regression => Target::Regression(c.y.clone()),
        Task::Classification => Target::Classification(c.y.iter().map(|v| *v as u8).collect()),
    };
    TrainingTable::from_rows((0..p).map(|j| format!("x{j}")).collect(), c.x.clone(), target).unwrap()
}
