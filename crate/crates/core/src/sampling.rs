//! Endogenous-sampling corrections for curated, balance-forced datasets.
//!
//! A crossover stack is balanced by construction (P*(1) near 0.5) while the
//! population it stands for may have a much lower event rate P(1).
//! Manski–Lerman weights P(y)/P*(y) reweight rows back to the population
//! prior. Doing so also shifts the relative costs a classifier implicitly
//! assigns to false alarms and misses, which `weighted_refit_report` makes
//! visible.

use serde::{Deserialize, Serialize};

use crate::design::LabeledDataset;
use crate::diagnostics::{confusion, ConfusionReport};
use crate::error::{Error, Result};
use crate::forest::{label_from_probability, Forest, ForestParams};
use crate::table::TrainingTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// P(label = 1) in the target population.
    pub population_prior: f64,
    /// P*(label = 1) in the curated data.
    pub sample_prior: f64,
}

impl PriorSpec {
    pub fn new(population_prior: f64, sample_prior: f64) -> Result<Self> {
        let spec = Self { population_prior, sample_prior };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("population", self.population_prior), ("sample", self.sample_prior)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::DegeneratePrior(format!("{name} prior {p} outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// `(w1, w0)`.
    pub fn class_weights(&self) -> (f64, f64) {
        (self.population_prior / self.sample_prior, (1.0 - self.population_prior) / (1.0 - self.sample_prior))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w1: f64,
    pub w0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub class_weights: ClassWeights,
}

/// Per-row weights `P(y)/P*(y)`.
pub fn manski_lerman_weights(labels: &[u8], prior: &PriorSpec) -> Result<WeightVector> {
    prior.validate()?;
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::DegeneratePrior("labels must contain both classes".into()));
    }
    if let Some(bad) = labels.iter().find(|y| **y > 1) {
        return Err(Error::Range(format!("labels must be binary, got {bad}")));
    }
    let (w1, w0) = prior.class_weights();
    Ok(WeightVector {
        weights: labels.iter().map(|y| if *y == 1 { w1 } else { w0 }).collect(),
        class_weights: ClassWeights { w1, w0 },
    })
}

/// Event frequency of the target population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetPopulation {
    pub days_in_month: u32,
    pub event_days: u32,
}

/// Population prior from event-day counts; sample prior from the data.
pub fn scenario_prior(data: &LabeledDataset, target: TargetPopulation) -> Result<PriorSpec> {
    if target.days_in_month == 0 || target.event_days > target.days_in_month {
        return Err(Error::InvalidParameter(format!(
            "{} event days out of {} days",
            target.event_days, target.days_in_month
        )));
    }
    if data.rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ones = data.rows.iter().filter(|r| r.label == 1).count();
    Ok(PriorSpec {
        population_prior: target.event_days as f64 / target.days_in_month as f64,
        sample_prior: ones as f64 / data.rows.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostShift {
    /// fp/fn before and after weighting.
    pub fp_per_fn: [Option<f64>; 2],
    /// fn/fp, the false-alarm cost implied relative to a miss.
    pub implied_cost_fp_to_fn: [Option<f64>; 2],
    pub error_rate_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitReport {
    pub prior: PriorSpec,
    pub class_weights: ClassWeights,
    pub unweighted: ConfusionReport,
    pub weighted: ConfusionReport,
    pub shift: CostShift,
}

fn oob_confusion(forest: &Forest, data: &TrainingTable, labels: &[u8]) -> Result<ConfusionReport> {
    let (preds, ys): (Vec<u8>, Vec<u8>) = forest
        .oob_values(data.rows())
        .into_iter()
        .zip(labels)
        .filter_map(|(p, y)| p.map(|p| (label_from_probability(p), *y)))
        .unzip();
    if ys.is_empty() {
        return Err(Error::DegenerateData("no row has out-of-bag predictions".into()));
    }
    confusion(&preds, &ys)
}

/// Fits the classifier with unit and with Manski–Lerman weights and reports
/// both out-of-bag confusion tables. Same seed for both fits.
pub fn weighted_refit_report(data: &LabeledDataset, prior: &PriorSpec, params: &ForestParams) -> Result<RefitReport> {
    let table = data.to_table()?;
    let labels = data.labels();
    let wv = manski_lerman_weights(&labels, prior)?;
    if !params.bootstrap {
        return Err(Error::InvalidParameter("out-of-bag reports need bootstrap sampling".into()));
    }
    let plain = Forest::fit(&table, params, None)?;
    let weighted = Forest::fit(&table, params, Some(&wv.weights))?;
    let unweighted = oob_confusion(&plain, &table, &labels)?;
    let weighted = oob_confusion(&weighted, &table, &labels)?;
    let shift = CostShift {
        fp_per_fn: [unweighted.cost_ratio_fp_to_fn, weighted.cost_ratio_fp_to_fn],
        implied_cost_fp_to_fn: [unweighted.implied_cost_fp_to_fn(), weighted.implied_cost_fp_to_fn()],
        error_rate_change: weighted.error_rate - unweighted.error_rate,
    };
    Ok(RefitReport { prior: *prior, class_weights: wv.class_weights, unweighted, weighted, shift })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_priors_give_unit_weights() {
        let w = manski_lerman_weights(&[0, 1, 1], &PriorSpec::new(0.3, 0.3).unwrap()).unwrap();
        assert_eq!(w.weights, vec![1.0; 3]);
    }

    #[test]
    fn june_weights() {
        let w = manski_lerman_weights(&[0, 1], &PriorSpec::new(0.133, 0.5).unwrap()).unwrap();
        assert!((w.class_weights.w1 - 0.266).abs() < 1e-12);
        assert!((w.class_weights.w0 - 1.734).abs() < 1e-12);
    }

    #[test]
    fn weighted_mean_matches_population_prior() {
        let labels = [1, 0, 0, 1, 1, 1, 0];
        let sample = 4.0 / 7.0;
        let prior = PriorSpec::new(0.2, sample).unwrap();
        let w = manski_lerman_weights(&labels, &prior).unwrap();
        let num: f64 = w.weights.iter().zip(&labels).map(|(w, y)| w * f64::from(*y)).sum();
        let den: f64 = w.weights.iter().sum();
        assert!((num / den - 0.2).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(PriorSpec::new(0.0, 0.5), Err(Error::DegeneratePrior(_))));
        assert!(matches!(PriorSpec::new(0.5, 1.0), Err(Error::DegeneratePrior(_))));
        let p = PriorSpec::new(0.1, 0.5).unwrap();
        assert!(matches!(manski_lerman_weights(&[1, 1], &p), Err(Error::DegeneratePrior(_))));
    }
}
