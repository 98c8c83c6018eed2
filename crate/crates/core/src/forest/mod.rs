//! Bagged CART ensembles for gain-score regression and binary event
//! classification.
//!
//! Each tree draws `n` rows with replacement (probability proportional to the
//! case weight when weights are given), grows a CART tree on its in-bag
//! multiplicities sampling `mtry` predictors per split, and remembers the
//! rows it never saw for out-of-bag evaluation. Tree `t` owns the random
//! stream `(seed, t)`, so a fit is identical for any thread count.

mod tree;

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use tree::{Node, Tree, TIE_TOLERANCE};

use crate::diagnostics::{confusion, ConfusionReport};
use crate::error::{Error, Result};
use crate::rng::{stream, DOMAIN_TREE};
use crate::table::{hex, Target, Task, TrainingTable};
use tree::{Grower, Sample};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Predictors sampled per split; `None` picks ⌊p/3⌋ (regression) or ⌊√p⌋
    /// (classification), at least 1.
    pub mtry: Option<usize>,
    /// Nodes with fewer in-bag rows are not split; `None` picks 5
    /// (regression) or 1 (classification).
    pub min_node_size: Option<usize>,
    pub seed: u64,
    /// Draw a bootstrap sample per tree. Without it every row is in-bag with
    /// its case weight and there are no out-of-bag rows.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 500, mtry: None, min_node_size: None, seed: 0, bootstrap: true }
    }
}

impl ForestParams {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn resolve(&self, task: Task, p: usize) -> Result<ResolvedParams> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
        }
        let mtry = self.mtry.unwrap_or(match task {
            Task::Regression => (p / 3).max(1),
            Task::Classification => ((p as f64).sqrt().floor() as usize).max(1),
        });
        if mtry == 0 || mtry > p {
            return Err(Error::InvalidParameter(format!("mtry {mtry} outside 1..={p}")));
        }
        let min_node_size = self.min_node_size.unwrap_or(match task {
            Task::Regression => 5,
            Task::Classification => 1,
        });
        if min_node_size == 0 {
            return Err(Error::InvalidParameter("min_node_size must be at least 1".into()));
        }
        Ok(ResolvedParams { n_trees: self.n_trees, mtry, min_node_size, seed: self.seed, bootstrap: self.bootstrap })
    }
}

/// Parameters after defaults were applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub n_trees: usize,
    pub mtry: usize,
    pub min_node_size: usize,
    pub seed: u64,
    pub bootstrap: bool,
}

/// Output of a single prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Prediction {
    Regression(f64),
    /// Vote shares `[P(0), P(1)]`.
    Classification([f64; 2]),
}

impl Prediction {
    /// Regression value or probability of the event class.
    pub fn value(&self) -> f64 {
        match self {
            Prediction::Regression(v) => *v,
            Prediction::Classification(p) => p[1],
        }
    }
}

/// Hard label from an event probability; exact ties go to the non-event class.
pub fn label_from_probability(p1: f64) -> u8 {
    u8::from(p1 > 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format_version: u32,
    pub task: Task,
    pub predictor_names: Vec<String>,
    pub params: ResolvedParams,
    /// Digest of the training table.
    pub data_digest: String,
    /// Digest of (data, params, weights).
    pub fingerprint: String,
    pub n_train: usize,
    pub trees: Vec<Tree>,
}

fn validate_weights(weights: Option<&[f64]>, n: usize) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::LengthMismatch { left: w.len(), right: n });
        }
        if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter("case weights must be positive and finite".into()));
        }
    }
    Ok(())
}

fn fingerprint(data_digest: &str, params: &ResolvedParams, weights: Option<&[f64]>) -> String {
    let mut h = Sha256::new();
    h.update(data_digest.as_bytes());
    h.update(serde_json::to_vec(params).expect("params serialize"));
    if let Some(w) = weights {
        for v in w {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex(&h.finalize())
}

fn draw_in_bag<R: Rng>(n: usize, weights: Option<&[f64]>, rng: &mut R) -> Vec<usize> {
    let mut counts = vec![0usize; n];
    match weights.filter(|w| w.iter().any(|v| *v != w[0])) {
        None => {
            for _ in 0..n {
                counts[rng.gen_range(0..n)] += 1;
            }
        }
        Some(w) => {
            let dist = WeightedIndex::new(w).expect("weights validated");
            for _ in 0..n {
                counts[dist.sample(rng)] += 1;
            }
        }
    }
    counts
}

impl Forest {
    /// Fits a forest on `data`; the task follows the table's target.
    pub fn fit(data: &TrainingTable, params: &ForestParams, weights: Option<&[f64]>) -> Result<Forest> {
        let n = data.n_rows();
        if n < 2 {
            return Err(Error::DegenerateData(format!("need at least 2 rows, got {n}")));
        }
        validate_weights(weights, n)?;
        let task = data.task();
        match data.target() {
            Target::Regression(y) if y.iter().all(|v| *v == y[0]) => {
                return Err(Error::DegenerateData("constant response".into()))
            }
            Target::Classification(y) if y.iter().all(|v| *v == y[0]) => {
                return Err(Error::DegenerateData("only one class present".into()))
            }
            _ => {}
        }
        let resolved = params.resolve(task, data.n_predictors())?;
        let y: Vec<f64> = (0..n).map(|i| data.target().value(i)).collect();
        let grower = Grower {
            x: data.rows(),
            y: &y,
            task,
            mtry: resolved.mtry,
            min_node_size: resolved.min_node_size,
        };
        let trees: Vec<Tree> = (0..resolved.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream(resolved.seed, DOMAIN_TREE, t as u64);
                let (samples, oob) = if resolved.bootstrap {
                    let counts = draw_in_bag(n, weights, &mut rng);
                    let samples = counts
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| **c > 0)
                        .map(|(row, &count)| Sample { row, weight: count as f64, count })
                        .collect();
                    let oob = counts.iter().enumerate().filter(|(_, c)| **c == 0).map(|(r, _)| r as u32).collect();
                    (samples, oob)
                } else {
                    let samples = (0..n)
                        .map(|row| Sample { row, weight: weights.map_or(1.0, |w| w[row]), count: 1 })
                        .collect();
                    (samples, Vec::new())
                };
                Tree { nodes: grower.grow(samples, &mut rng), oob }
            })
            .collect();
        let data_digest = data.digest();
        Ok(Forest {
            format_version: FORMAT_VERSION,
            task,
            predictor_names: data.names().to_vec(),
            fingerprint: fingerprint(&data_digest, &resolved, weights),
            params: resolved,
            data_digest,
            n_train: n,
            trees,
        })
    }

    /// Assembles a forest from hand-built trees (no training data).
    pub fn from_trees(task: Task, predictor_names: Vec<String>, trees: Vec<Tree>) -> Result<Forest> {
        if trees.is_empty() {
            return Err(Error::InvalidParameter("a forest needs at least one tree".into()));
        }
        let p = predictor_names.len();
        for t in &trees {
            for node in &t.nodes {
                match node {
                    Node::Split(v, thr, l, r) => {
                        if *v as usize >= p || !thr.is_finite() || *l as usize >= t.nodes.len() || *r as usize >= t.nodes.len() {
                            return Err(Error::InvalidParameter("malformed split node".into()));
                        }
                    }
                    Node::Leaf(v) => {
                        let want = if task == Task::Regression { 1 } else { 2 };
                        if v.len() != want {
                            return Err(Error::InvalidParameter("leaf width does not match task".into()));
                        }
                    }
                }
            }
        }
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&trees)?);
        h.update(serde_json::to_vec(&predictor_names)?);
        let digest = hex(&h.finalize());
        Ok(Forest {
            format_version: FORMAT_VERSION,
            task,
            predictor_names,
            params: ResolvedParams { n_trees: trees.len(), mtry: p.max(1), min_node_size: 1, seed: 0, bootstrap: false },
            data_digest: String::new(),
            fingerprint: digest,
            n_train: 0,
            trees,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Prediction for a row ordered like `predictor_names`.
    pub fn predict_row(&self, x: &[f64]) -> Prediction {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x, self.task)).sum();
        let mean = sum / self.trees.len() as f64;
        match self.task {
            Task::Regression => Prediction::Regression(mean),
            Task::Classification => Prediction::Classification([1.0 - mean, mean]),
        }
    }

    /// Prediction for a named predictor vector.
    pub fn predict(&self, x: &BTreeMap<String, f64>) -> Result<Prediction> {
        let row = self
            .predictor_names
            .iter()
            .map(|n| x.get(n).copied().ok_or_else(|| Error::MissingPredictor(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.predict_row(&row))
    }

    pub fn check_data(&self, data: &TrainingTable) -> Result<()> {
        let found = data.digest();
        if found != self.data_digest {
            return Err(Error::FingerprintMismatch { expected: self.data_digest.clone(), found });
        }
        Ok(())
    }

    /// Out-of-bag aggregate for each row of `rows` (which must align with the
    /// training rows): mean tree value over trees that did not see the row.
    pub fn oob_values(&self, rows: &[Vec<f64>]) -> Vec<Option<f64>> {
        let per_tree: Vec<Vec<(u32, f64)>> = self
            .trees
            .par_iter()
            .map(|t| t.oob.iter().map(|&r| (r, t.predict(&rows[r as usize], self.task))).collect())
            .collect();
        let mut sum = vec![0.0; rows.len()];
        let mut count = vec![0usize; rows.len()];
        for preds in &per_tree {
            for &(r, v) in preds {
                sum[r as usize] += v;
                count[r as usize] += 1;
            }
        }
        sum.iter().zip(&count).map(|(s, c)| (*c > 0).then(|| s / *c as f64)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Forest> {
        let f: Forest = serde_json::from_str(text)?;
        if f.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion(f.format_version));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum OobReport {
    Regression { oob_mse: f64, variance_explained: f64, n_used: usize, n_skipped: usize },
    Classification { confusion: ConfusionReport, n_used: usize, n_skipped: usize },
}

impl OobReport {
    pub fn n_skipped(&self) -> usize {
        match self {
            OobReport::Regression { n_skipped, .. } | OobReport::Classification { n_skipped, .. } => *n_skipped,
        }
    }
}

/// Regression OOB summary over rows with at least one OOB tree.
pub(crate) fn regression_oob(y: &[f64], oob: &[Option<f64>]) -> (f64, f64, usize) {
    let used: Vec<(f64, f64)> = y.iter().zip(oob).filter_map(|(y, p)| p.map(|p| (*y, p))).collect();
    let n = used.len() as f64;
    let mse = used.iter().map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / n;
    let mean = used.iter().map(|(y, _)| y).sum::<f64>() / n;
    let var = used.iter().map(|(y, _)| (y - mean) * (y - mean)).sum::<f64>() / n;
    (mse, 1.0 - mse / var, used.len())
}

/// Out-of-bag performance of `forest` on its own training data.
pub fn oob_report(forest: &Forest, data: &TrainingTable) -> Result<OobReport> {
    forest.check_data(data)?;
    let oob = forest.oob_values(data.rows());
    let n_skipped = oob.iter().filter(|p| p.is_none()).count();
    if n_skipped == oob.len() {
        return Err(Error::DegenerateData("no row is out of bag for any tree".into()));
    }
    match data.target() {
        Target::Regression(y) => {
            let (oob_mse, variance_explained, n_used) = regression_oob(y, &oob);
            Ok(OobReport::Regression { oob_mse, variance_explained, n_used, n_skipped })
        }
        Target::Classification(y) => {
            let (preds, labels): (Vec<u8>, Vec<u8>) = y
                .iter()
                .zip(&oob)
                .filter_map(|(y, p)| p.map(|p| (label_from_probability(p), *y)))
                .unzip();
            let n_used = preds.len();
            Ok(OobReport::Classification { confusion: confusion(&preds, &labels)?, n_used, n_skipped })
        }
    }
}
