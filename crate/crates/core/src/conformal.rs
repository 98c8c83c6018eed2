//! Split-sample conformal prediction sets for the binary event classifier.
//!
//! Rows are split into a training part (the forest) and a calibration part.
//! The nonconformity score of a calibration row is `1 - p̂(true label)`; the
//! threshold is the ⌈(n+1)(1-α)⌉-th smallest score, or +∞ when that rank
//! exceeds n. A label enters the prediction set when its score is at most the
//! threshold, so sets are sub-level sets of the score: nested, and growing as
//! α shrinks. Under exchangeability the set covers the true label with
//! probability at least 1-α.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{Forest, ForestParams};
use crate::grid_data::CellId;
use crate::rng::{stream, DOMAIN_SPLIT};
use crate::table::{Task, TrainingTable};

/// Attempts at drawing a split with both classes on each side.
pub const SPLIT_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    OneMinusProb,
}

/// Rank of the calibration score used as threshold.
pub fn threshold_rank(n_cal: usize, alpha: f64) -> usize {
    let exact = (n_cal as f64 + 1.0) * (1.0 - alpha);
    // Absorb representation error in products like 10 * 0.9.
    ((exact - 1e-9).ceil() as usize).max(1)
}

/// Threshold over ascending scores; `None` stands for +∞.
pub fn conformal_threshold(sorted_scores: &[f64], alpha: f64) -> Option<f64> {
    let k = threshold_rank(sorted_scores.len(), alpha);
    (k <= sorted_scores.len()).then(|| sorted_scores[k - 1])
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")))
    }
}

fn class_scores(forest: &Forest, x: &[f64]) -> [f64; 2] {
    // score(y) = 1 - p̂(y), and p̂(0) = 1 - p̂(1).
    let p1 = forest.predict_row(x).value();
    [p1, 1.0 - p1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalPredictor {
    pub alpha: f64,
    /// Ascending.
    pub calibration_scores: Vec<f64>,
    /// `None` encodes +∞.
    pub threshold: Option<f64>,
    pub score_kind: ScoreKind,
    /// Fingerprint of the classifier the scores came from.
    pub forest_ref: String,
}

impl ConformalPredictor {
    /// Scores every calibration row under `forest`.
    pub fn calibrate(forest: &Forest, calibration: &TrainingTable, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if forest.task != Task::Classification {
            return Err(Error::TaskMismatch { expected: "classification" });
        }
        let labels = calibration.labels().ok_or(Error::TaskMismatch { expected: "classification" })?;
        if calibration.names() != forest.predictor_names.as_slice() {
            return Err(Error::PredictorSetMismatch);
        }
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut scores: Vec<f64> = calibration
            .rows()
            .iter()
            .zip(labels)
            .map(|(x, y)| class_scores(forest, x)[*y as usize])
            .collect();
        scores.sort_by(f64::total_cmp);
        Ok(Self {
            alpha,
            threshold: conformal_threshold(&scores, alpha),
            calibration_scores: scores,
            score_kind: ScoreKind::OneMinusProb,
            forest_ref: forest.fingerprint.clone(),
        })
    }

    /// Same calibration at another miscoverage level.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, threshold: conformal_threshold(&self.calibration_scores, alpha), ..self.clone() })
    }

    pub fn threshold_value(&self) -> f64 {
        self.threshold.unwrap_or(f64::INFINITY)
    }

    fn check_forest(&self, forest: &Forest) -> Result<()> {
        if forest.fingerprint != self.forest_ref {
            return Err(Error::FingerprintMismatch { expected: self.forest_ref.clone(), found: forest.fingerprint.clone() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    /// Labels in the set, ascending.
    pub members: Vec<u8>,
    /// Nonconformity score of each candidate label `[score(0), score(1)]`.
    pub scores: [f64; 2],
    pub alpha: f64,
}

impl PredictionSet {
    pub fn contains(&self, label: u8) -> bool {
        self.members.contains(&label)
    }

    /// Empty sets only occur when the threshold is below both scores.
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Prediction set for a row ordered like the forest's predictors.
pub fn predict_set(cp: &ConformalPredictor, forest: &Forest, x: &[f64]) -> Result<PredictionSet> {
    cp.check_forest(forest)?;
    if x.len() != forest.predictor_names.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: forest.predictor_names.len() });
    }
    let scores = class_scores(forest, x);
    let t = cp.threshold_value();
    let members = (0..2u8).filter(|y| scores[*y as usize] <= t).collect();
    Ok(PredictionSet { members, scores, alpha: cp.alpha })
}

/// JSON record of one prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetRecord {
    pub cell: CellId,
    pub scenario: String,
    pub set: Vec<u8>,
    pub scores: BTreeMap<String, f64>,
}

impl SetRecord {
    pub fn new(cell: CellId, scenario: &str, set: &PredictionSet) -> Self {
        let scores = [("0".to_string(), set.scores[0]), ("1".to_string(), set.scores[1])].into_iter().collect();
        Self { cell, scenario: scenario.to_string(), set: set.members.clone(), scores }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub coverage: f64,
    pub mean_set_size: f64,
    pub n: usize,
}

/// Fraction of labelled rows whose label falls in its prediction set, and
/// the mean set size.
pub fn empirical_coverage(cp: &ConformalPredictor, forest: &Forest, test: &TrainingTable) -> Result<CoverageReport> {
    cp.check_forest(forest)?;
    let labels = test.labels().ok_or(Error::TaskMismatch { expected: "classification" })?;
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut covered = 0usize;
    let mut size = 0usize;
    for (x, y) in test.rows().iter().zip(labels) {
        let set = predict_set(cp, forest, x)?;
        covered += usize::from(set.contains(*y));
        size += set.members.len();
    }
    let n = labels.len();
    Ok(CoverageReport { coverage: covered as f64 / n as f64, mean_set_size: size as f64 / n as f64, n })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConformal {
    pub forest: Forest,
    pub predictor: ConformalPredictor,
    /// Row indices of the input used for training, ascending.
    pub train_rows: Vec<usize>,
    /// Row indices used for calibration, ascending.
    pub calibration_rows: Vec<usize>,
}

fn has_both(labels: &[u8], rows: &[usize]) -> bool {
    rows.iter().any(|r| labels[*r] == 0) && rows.iter().any(|r| labels[*r] == 1)
}

/// Randomly splits `data`, fits the classifier on the training share and
/// calibrates on the rest.
pub fn split_train_calibrate(
    data: &TrainingTable,
    split_fraction: f64,
    params: &ForestParams,
    alpha: f64,
    seed: u64,
) -> Result<SplitConformal> {
    check_alpha(alpha)?;
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("split fraction {split_fraction} outside (0, 1)")));
    }
    let labels = data.labels().ok_or(Error::TaskMismatch { expected: "classification" })?;
    let n = data.n_rows();
    if n < 4 {
        return Err(Error::SplitDegenerate { attempts: 0 });
    }
    let n_train = ((n as f64 * split_fraction).round() as usize).clamp(2, n - 2);
    for attempt in 0..SPLIT_RETRIES {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut stream(seed, DOMAIN_SPLIT, attempt as u64));
        let (train, cal) = idx.split_at(n_train);
        if !has_both(labels, train) || !has_both(labels, cal) {
            continue;
        }
        let mut train_rows = train.to_vec();
        let mut calibration_rows = cal.to_vec();
        train_rows.sort_unstable();
        calibration_rows.sort_unstable();
        let forest = Forest::fit(&data.subset(&train_rows), params, None)?;
        let predictor = ConformalPredictor::calibrate(&forest, &data.subset(&calibration_rows), alpha)?;
        return Ok(SplitConformal { forest, predictor, train_rows, calibration_rows });
    }
    Err(Error::SplitDegenerate { attempts: SPLIT_RETRIES })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::Tree;

    fn forest_with_p1(p1: f64) -> Forest {
        // Two trees voting 1 with shares p1 via tied/untied leaves.
        let leaf = |v: f64| if v == 1.0 { vec![0.0, 1.0] } else if v == 0.0 { vec![1.0, 0.0] } else { vec![1.0, 1.0] };
        let trees = vec![Tree::leaf(leaf(p1)), Tree::leaf(leaf(p1))];
        Forest::from_trees(Task::Classification, vec!["x".into()], trees).unwrap()
    }

    fn predictor(forest: &Forest, scores: Vec<f64>, alpha: f64) -> ConformalPredictor {
        ConformalPredictor {
            alpha,
            threshold: conformal_threshold(&scores, alpha),
            calibration_scores: scores,
            score_kind: ScoreKind::OneMinusProb,
            forest_ref: forest.fingerprint.clone(),
        }
    }

    #[test]
    fn threshold_formula() {
        assert_eq!(threshold_rank(3, 0.25), 3);
        assert_eq!(conformal_threshold(&[0.1, 0.2, 0.7], 0.25), Some(0.7));
        assert_eq!(conformal_threshold(&[0.1, 0.2, 0.3, 0.4], 0.5), Some(0.3));
        assert_eq!(conformal_threshold(&[0.1, 0.2], 0.1), None);
        assert_eq!(threshold_rank(9, 0.1), 9);
    }

    #[test]
    fn sets_from_threshold() {
        let sure = forest_with_p1(1.0);
        let cp = predictor(&sure, vec![0.0, 0.1], 0.5);
        assert_eq!(predict_set(&cp, &sure, &[0.0]).unwrap().members, vec![1]);

        let coin = forest_with_p1(0.5);
        let mut cp = predictor(&coin, vec![0.6], 0.5);
        cp.threshold = Some(0.6);
        let set = predict_set(&cp, &coin, &[0.0]).unwrap();
        assert_eq!(set.members, vec![0, 1]);
        assert_eq!(set.scores, [0.5, 0.5]);

        let vacuous = predictor(&sure, vec![0.0], 0.1);
        assert_eq!(vacuous.threshold, None);
        assert_eq!(predict_set(&vacuous, &sure, &[3.0]).unwrap().members, vec![0, 1]);

        assert!(matches!(predict_set(&vacuous, &coin, &[3.0]), Err(Error::FingerprintMismatch { .. })));
    }

    #[test]
    fn set_record_json() {
        let set = PredictionSet { members: vec![1], scores: [0.9, 0.1], alpha: 0.25 };
        let rec = SetRecord::new(CellId::new(45, -120).unwrap(), "june", &set);
        let v = serde_json::to_value(&rec).unwrap();
        assert_eq!(v["set"], serde_json::json!([1]));
        assert_eq!(v["scores"]["0"], 0.9);
    }

    #[test]
    fn bad_alpha() {
        let f = forest_with_p1(1.0);
        let t = TrainingTable::from_rows(vec!["x".into()], vec![vec![0.0]], crate::table::Target::Classification(vec![1])).unwrap();
        assert!(ConformalPredictor::calibrate(&f, &t, 0.0).is_err());
        assert!(ConformalPredictor::calibrate(&f, &t, 1.0).is_err());
        assert!(ConformalPredictor::calibrate(&f, &t, 0.2).is_ok());
    }
}
