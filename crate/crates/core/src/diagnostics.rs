//! Diagnostics over a fitted forest: permutation importance, partial
//! dependence profiles and confusion / cost-ratio reports.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{label_from_probability, Forest};
use crate::rng::{stream2, DOMAIN_IMPORTANCE};
use crate::table::{Target, Task, TrainingTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub error_rate: f64,
    /// fp / (fp + tn); 0 when there are no negatives.
    pub fpr: f64,
    /// fn / (fn + tp); 0 when there are no positives.
    pub fnr: f64,
    /// False positives per false negative; `None` when fn = 0.
    pub cost_ratio_fp_to_fn: Option<f64>,
}

impl ConfusionReport {
    pub fn n(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Relative cost of a false positive to a false negative implied by the
    /// error counts: a classifier that trades k false negatives for one false
    /// positive treats the false positive as k times as costly. `None` when
    /// fp = 0.
    pub fn implied_cost_fp_to_fn(&self) -> Option<f64> {
        (self.fp > 0).then(|| self.fn_ as f64 / self.fp as f64)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion counts with class 1 as the positive (event) class.
pub fn confusion(preds: &[u8], labels: &[u8]) -> Result<ConfusionReport> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch { left: preds.len(), right: labels.len() });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (p, y) in preds.iter().zip(labels) {
        match (p, y) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            (0, 0) => tn += 1,
            _ => return Err(Error::Range(format!("labels must be binary, got ({p}, {y})"))),
        }
    }
    Ok(ConfusionReport {
        tp,
        fp,
        fn_,
        tn,
        error_rate: ratio(fp + fn_, tp + fp + fn_ + tn),
        fpr: ratio(fp, fp + tn),
        fnr: ratio(fn_, fn_ + tp),
        cost_ratio_fp_to_fn: (fn_ > 0).then(|| fp as f64 / fn_ as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    /// Percentage increase of out-of-bag MSE.
    PctIncMse,
    /// Decrease of class-averaged out-of-bag accuracy, in percentage points.
    MeanDecreaseAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub predictor: String,
    pub importance: f64,
    /// Spread of the estimate under the null of no association: the
    /// per-repeat standard deviation scaled by `sqrt(1 + 1/n_repeats)`, since
    /// the unpermuted reference is itself one draw from the permutation
    /// distribution when the predictor is irrelevant.
    pub std_error: f64,
    pub metric: ImportanceMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// Sorted by descending importance.
    pub entries: Vec<ImportanceEntry>,
    pub n_repeats: usize,
    pub seed: u64,
}

impl ImportanceReport {
    pub fn get(&self, predictor: &str) -> Option<&ImportanceEntry> {
        self.entries.iter().find(|e| e.predictor == predictor)
    }

    pub fn ranking(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.predictor.as_str()).collect()
    }
}

/// Out-of-bag loss: MSE for regression; for classification, 100 minus the
/// class-averaged accuracy in percent.
fn oob_loss(target: &Target, oob: &[Option<f64>]) -> f64 {
    match target {
        Target::Regression(y) => {
            let (sum, n) = y
                .iter()
                .zip(oob)
                .filter_map(|(y, p)| p.map(|p| (y - p) * (y - p)))
                .fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
            sum / n as f64
        }
        Target::Classification(y) => {
            let mut correct = [0usize; 2];
            let mut total = [0usize; 2];
            for (y, p) in y.iter().zip(oob) {
                if let Some(p) = p {
                    total[*y as usize] += 1;
                    correct[*y as usize] += usize::from(label_from_probability(*p) == *y);
                }
            }
            let classes: Vec<f64> = (0..2).filter(|c| total[*c] > 0).map(|c| correct[c] as f64 / total[c] as f64).collect();
            100.0 * (1.0 - classes.iter().sum::<f64>() / classes.len() as f64)
        }
    }
}

/// Permutation importance on out-of-bag predictions: each predictor's column
/// is shuffled (others fixed) `n_repeats` times and the increase of the
/// forest's out-of-bag loss is averaged. The error estimate treats the
/// unshuffled loss as one more draw from the shuffled-loss distribution,
/// hence `sd * sqrt(1 + 1/R)`.
pub fn permutation_importance(forest: &Forest, data: &TrainingTable, n_repeats: usize, seed: u64) -> Result<ImportanceReport> {
    forest.check_data(data)?;
    if n_repeats == 0 {
        return Err(Error::InvalidParameter("n_repeats must be at least 1".into()));
    }
    let base_oob = forest.oob_values(data.rows());
    if base_oob.iter().all(|p| p.is_none()) {
        return Err(Error::DegenerateData("importance needs out-of-bag rows".into()));
    }
    let base = oob_loss(data.target(), &base_oob);
    let metric = match forest.task {
        Task::Regression => ImportanceMetric::PctIncMse,
        Task::Classification => ImportanceMetric::MeanDecreaseAccuracy,
    };
    let mut entries: Vec<ImportanceEntry> = (0..data.n_predictors())
        .into_par_iter()
        .map(|j| {
            let column = data.column(j);
            let increases: Vec<f64> = (0..n_repeats)
                .map(|r| {
                    let mut rng = stream2(seed, DOMAIN_IMPORTANCE, j as u64, r as u64);
                    let mut shuffled = column.clone();
                    shuffled.shuffle(&mut rng);
                    let rows: Vec<Vec<f64>> = data
                        .rows()
                        .iter()
                        .zip(&shuffled)
                        .map(|(row, v)| {
                            let mut row = row.clone();
                            row[j] = *v;
                            row
                        })
                        .collect();
                    let loss = oob_loss(data.target(), &forest.oob_values(&rows));
                    match metric {
                        ImportanceMetric::PctIncMse if base > 0.0 => 100.0 * (loss - base) / base,
                        ImportanceMetric::PctIncMse => 0.0,
                        ImportanceMetric::MeanDecreaseAccuracy => loss - base,
                    }
                })
                .collect();
            let r = n_repeats as f64;
            let mean = increases.iter().sum::<f64>() / r;
            let sd = if n_repeats > 1 {
                (increases.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0)).sqrt()
            } else {
                0.0
            };
            ImportanceEntry {
                predictor: data.names()[j].clone(),
                importance: mean,
                std_error: sd * (1.0 + 1.0 / r).sqrt(),
                metric,
            }
        })
        .collect();
    entries.sort_by(|a, b| b.importance.total_cmp(&a.importance).then_with(|| a.predictor.cmp(&b.predictor)));
    Ok(ImportanceReport { entries, n_repeats, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdpMode {
    /// Other predictors pinned at their sample means.
    #[default]
    MeanFixed,
    /// Prediction averaged over all rows with the predictor overwritten.
    AverageOverData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpProfile {
    pub predictor: String,
    pub grid: Vec<f64>,
    pub response: Vec<f64>,
    pub mode: PdpMode,
}

impl PdpProfile {
    /// Two-column `value,response` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,response\n");
        for (g, r) in self.grid.iter().zip(&self.response) {
            out.push_str(&format!("{g},{r}\n"));
        }
        out
    }
}

/// Sample quantile with linear interpolation between order statistics.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Partial dependence of the fitted response on `predictor` over
/// `n_grid` quantile-spaced values (duplicates collapsed).
pub fn partial_dependence(
    forest: &Forest,
    data: &TrainingTable,
    predictor: &str,
    n_grid: usize,
    mode: PdpMode,
) -> Result<PdpProfile> {
    let j = forest
        .predictor_names
        .iter()
        .position(|n| n == predictor)
        .ok_or_else(|| Error::UnknownPredictor(predictor.to_string()))?;
    if data.names() != forest.predictor_names.as_slice() {
        return Err(Error::PredictorSetMismatch);
    }
    if n_grid < 2 {
        return Err(Error::InvalidParameter("n_grid must be at least 2".into()));
    }
    if data.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut sorted = data.column(j);
    sorted.sort_by(f64::total_cmp);
    let mut grid: Vec<f64> = (0..n_grid).map(|k| quantile_sorted(&sorted, k as f64 / (n_grid - 1) as f64)).collect();
    grid.dedup();

    let means: Vec<f64> = (0..data.n_predictors())
        .map(|c| data.rows().iter().map(|r| r[c]).sum::<f64>() / data.n_rows() as f64)
        .collect();
    let response = grid
        .par_iter()
        .map(|&g| match mode {
            PdpMode::MeanFixed => {
                let mut x = means.clone();
                x[j] = g;
                forest.predict_row(&x).value()
            }
            PdpMode::AverageOverData => {
                let total: f64 = data
                    .rows()
                    .iter()
                    .map(|row| {
                        let mut x = row.clone();
                        x[j] = g;
                        forest.predict_row(&x).value()
                    })
                    .sum();
                total / data.n_rows() as f64
            }
        })
        .collect();
    Ok(PdpProfile { predictor: predictor.to_string(), grid, response, mode })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::Tree;

    #[test]
    fn confusion_identities() {
        let r = confusion(&[1, 0, 1, 0], &[1, 0, 1, 0]).unwrap();
        assert_eq!(r.error_rate, 0.0);
        assert_eq!(r.cost_ratio_fp_to_fn, None);

        let all_one = confusion(&[1, 1, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert_eq!((all_one.fpr, all_one.fnr), (1.0, 0.0));

        let mut preds = vec![1u8; 40];
        let mut labels = vec![0u8; 40];
        preds.extend(vec![0u8; 20]);
        labels.extend(vec![1u8; 20]);
        preds.extend(vec![1u8; 100]);
        labels.extend(vec![1u8; 100]);
        let r = confusion(&preds, &labels).unwrap();
        assert_eq!(r.cost_ratio_fp_to_fn, Some(2.0));
        assert_eq!(r.implied_cost_fp_to_fn(), Some(0.5));
        assert_eq!(r.n(), 160);
        assert_eq!(r.error_rate * 160.0, 60.0);

        assert!(matches!(confusion(&[1], &[1, 0]), Err(Error::LengthMismatch { .. })));
        assert!(confusion(&[2], &[1]).is_err());
    }

    #[test]
    fn json_uses_fn_key() {
        let r = confusion(&[0], &[1]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["fn"], 1);
        assert!(v["cost_ratio_fp_to_fn"].is_number());
    }

    #[test]
    fn flat_profile_for_ignored_predictor() {
        let data = TrainingTable::from_rows(
            vec!["a".into(), "q".into()],
            (0..20).map(|i| vec![i as f64, (i * 7 % 13) as f64]).collect(),
            Target::Regression((0..20).map(|i| i as f64).collect()),
        )
        .unwrap();
        let forest = Forest::from_trees(Task::Regression, data.names().to_vec(), vec![Tree::stump(0, 9.5, vec![1.0], vec![5.0])]).unwrap();
        for mode in [PdpMode::MeanFixed, PdpMode::AverageOverData] {
            let pdp = partial_dependence(&forest, &data, "q", 6, mode).unwrap();
            assert!(pdp.grid.windows(2).all(|w| w[0] < w[1]));
            assert!(pdp.response.iter().all(|r| *r == pdp.response[0]));
        }
        let single = Forest::from_trees(Task::Regression, data.names().to_vec(), vec![Tree::leaf(vec![2.5])]).unwrap();
        let pdp = partial_dependence(&single, &data, "a", 5, PdpMode::MeanFixed).unwrap();
        assert!(pdp.response.iter().all(|r| *r == 2.5));
        assert!(matches!(partial_dependence(&single, &data, "zz", 5, PdpMode::MeanFixed), Err(Error::UnknownPredictor(_))));
        assert!(partial_dependence(&single, &data, "a", 1, PdpMode::MeanFixed).is_err());
        assert_eq!(pdp.to_csv().lines().next(), Some("value,response"));
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
    }
}
