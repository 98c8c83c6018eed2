//! Genetic-algorithm synthesis of "ideal type" populations.
//!
//! A trained regression forest acts as the survival function: members are
//! predictor vectors, fitness is the forest's fitted gain score. Each
//! generation keeps the `elitism` fittest members unchanged and fills the
//! rest with offspring of fitness-proportional parents: with probability
//! `crossover_prob` the child is the gene-wise average of both parents,
//! otherwise a copy of the first; every gene then mutates to a uniform draw
//! within its bounds with probability `mutation_prob`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::quantile_sorted;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::rng::{stream2, DOMAIN_GA_BREED, DOMAIN_GA_INIT};
use crate::table::{Task, TrainingTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub population_size: usize,
    pub n_iterations: usize,
    pub elitism: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    /// Closed interval per predictor, in the forest's predictor order.
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

impl GaParams {
    pub fn new(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        Self {
            population_size: 100,
            n_iterations: 5000,
            elitism: 5,
            crossover_prob: 0.8,
            mutation_prob: 0.1,
            bounds,
            seed,
        }
    }

    pub fn validate(&self, n_predictors: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.population_size < 2 {
            return bad("population_size must be at least 2".into());
        }
        if self.n_iterations == 0 {
            return bad("n_iterations must be at least 1".into());
        }
        if self.elitism >= self.population_size {
            return bad("elitism must be smaller than the population".into());
        }
        for (name, p) in [("crossover_prob", self.crossover_prob), ("mutation_prob", self.mutation_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1]"));
            }
        }
        if self.bounds.len() != n_predictors {
            return bad(format!("{} bounds for {n_predictors} predictors", self.bounds.len()));
        }
        if self.bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
            return bad("every bound must be a finite, nonempty interval".into());
        }
        Ok(())
    }
}

/// Observed min/max of every predictor column.
pub fn bounds_from_table(data: &TrainingTable) -> Vec<(f64, f64)> {
    (0..data.n_predictors())
        .map(|j| {
            let col = data.column(j);
            (col.iter().copied().fold(f64::INFINITY, f64::min), col.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub iteration: usize,
    pub best: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPopulation {
    pub predictor_names: Vec<String>,
    pub bounds: Vec<(f64, f64)>,
    pub members: Vec<Vec<f64>>,
    pub fitness: Vec<f64>,
    pub history: Vec<HistoryPoint>,
}

impl SyntheticPopulation {
    /// `iteration,best,mean` CSV of the fitness history.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iteration,best,mean\n");
        for h in &self.history {
            out.push_str(&format!("{},{},{}\n", h.iteration, h.best, h.mean));
        }
        out
    }

    /// Pearson correlations between predictor columns of the final
    /// population; `None` where a column is constant.
    pub fn predictor_correlations(&self) -> Vec<Vec<Option<f64>>> {
        let p = self.predictor_names.len();
        let n = self.members.len() as f64;
        let means: Vec<f64> = (0..p).map(|j| self.members.iter().map(|m| m[j]).sum::<f64>() / n).collect();
        let cov = |a: usize, b: usize| self.members.iter().map(|m| (m[a] - means[a]) * (m[b] - means[b])).sum::<f64>();
        (0..p)
            .map(|a| {
                (0..p)
                    .map(|b| {
                        let den = (cov(a, a) * cov(b, b)).sqrt();
                        (den > 0.0).then(|| cov(a, b) / den)
                    })
                    .collect()
            })
            .collect()
    }
}

fn summarize(iteration: usize, fitness: &[f64]) -> HistoryPoint {
    HistoryPoint {
        iteration,
        best: fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: fitness.iter().sum::<f64>() / fitness.len() as f64,
    }
}

fn uniform_member<R: Rng>(bounds: &[(f64, f64)], rng: &mut R) -> Vec<f64> {
    bounds.iter().map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..=hi) }).collect()
}

/// Runs the genetic algorithm against a regression survival forest.
pub fn evolve(survival: &Forest, params: &GaParams) -> Result<SyntheticPopulation> {
    if survival.task != Task::Regression {
        return Err(Error::TaskMismatch { expected: "regression" });
    }
    params.validate(survival.predictor_names.len())?;
    let size = params.population_size;
    let fit = |members: &[Vec<f64>]| -> Vec<f64> { members.par_iter().map(|m| survival.predict_row(m).value()).collect() };

    let mut members: Vec<Vec<f64>> = (0..size)
        .map(|i| uniform_member(&params.bounds, &mut stream2(params.seed, DOMAIN_GA_INIT, 0, i as u64)))
        .collect();
    let mut fitness = fit(&members);
    let mut history = vec![summarize(0, &fitness)];

    for generation in 1..params.n_iterations {
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|a, b| fitness[*b].total_cmp(&fitness[*a]).then(a.cmp(b)));
        let worst = fitness[*order.last().unwrap()];
        let shifted: Vec<f64> = fitness.iter().map(|f| f - worst).collect();
        let selector = WeightedIndex::new(&shifted).ok();

        let children: Vec<Vec<f64>> = (params.elitism..size)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream2(params.seed, DOMAIN_GA_BREED, generation as u64, i as u64);
                let pick = |rng: &mut rand_chacha::ChaCha8Rng| match &selector {
                    Some(d) => d.sample(rng),
                    None => rng.gen_range(0..size),
                };
                let a = pick(&mut rng);
                let b = pick(&mut rng);
                let mut child: Vec<f64> = if rng.gen::<f64>() < params.crossover_prob {
                    members[a].iter().zip(&members[b]).map(|(x, y)| x + (y - x) / 2.0).collect()
                } else {
                    members[a].clone()
                };
                for (gene, &(lo, hi)) in child.iter_mut().zip(&params.bounds) {
                    if rng.gen::<f64>() < params.mutation_prob {
                        *gene = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
                    }
                    assert!(lo <= *gene && *gene <= hi, "offspring gene left its bounds");
                }
                child
            })
            .collect();
        let child_fitness = fit(&children);

        let mut next_members = Vec::with_capacity(size);
        let mut next_fitness = Vec::with_capacity(size);
        for &e in &order[..params.elitism] {
            next_members.push(members[e].clone());
            next_fitness.push(fitness[e]);
        }
        next_members.extend(children);
        next_fitness.extend(child_fitness);
        members = next_members;
        fitness = next_fitness;
        history.push(summarize(generation, &fitness));
    }

    Ok(SyntheticPopulation {
        predictor_names: survival.predictor_names.clone(),
        bounds: params.bounds.clone(),
        members,
        fitness,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionVector {
    pub predictor_names: Vec<String>,
    /// Fitness-weighted mean of the final population per predictor.
    pub values: Vec<f64>,
    /// Unweighted mean fitness of the final population.
    pub mean_fitness: f64,
    pub best_member: Vec<f64>,
    pub best_fitness: f64,
    /// True when weights were shifted because some fitness was not positive.
    pub shifted_weights: bool,
}

/// Reduces a population to one representative vector. Weights are the raw
/// fitness values when all are positive, otherwise fitness minus the
/// minimum (uniform if every member is equally fit).
pub fn solution_vector(pop: &SyntheticPopulation) -> Result<SolutionVector> {
    if pop.members.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = pop.members.len();
    let min = pop.fitness.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted_weights = min <= 0.0;
    let mut weights: Vec<f64> = if shifted_weights { pop.fitness.iter().map(|f| f - min).collect() } else { pop.fitness.clone() };
    if weights.iter().sum::<f64>() <= 0.0 {
        weights = vec![1.0; n];
    }
    let total: f64 = weights.iter().sum();
    let p = pop.predictor_names.len();
    let values = (0..p)
        .map(|j| {
            let v = pop.members.iter().zip(&weights).map(|(m, w)| w * m[j]).sum::<f64>() / total;
            let (lo, hi) = pop.bounds[j];
            v.clamp(lo, hi)
        })
        .collect();
    let best = (0..n).max_by(|a, b| pop.fitness[*a].total_cmp(&pop.fitness[*b]).then(b.cmp(a))).unwrap();
    Ok(SolutionVector {
        predictor_names: pop.predictor_names.clone(),
        values,
        mean_fitness: pop.fitness.iter().sum::<f64>() / n as f64,
        best_member: pop.members[best].clone(),
        best_fitness: pop.fitness[best],
        shifted_weights,
    })
}

/// Per-predictor scale used to make solution deltas comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorScales {
    pub predictor_names: Vec<String>,
    pub scales: Vec<f64>,
}

impl PredictorScales {
    /// Interquartile range of each predictor over the pooled rows of
    /// `tables`; falls back to the range, then 1, for degenerate columns.
    pub fn pooled_iqr(tables: &[&TrainingTable]) -> Result<Self> {
        let first = tables.first().ok_or(Error::EmptyDataset)?;
        if tables.iter().any(|t| t.names() != first.names()) {
            return Err(Error::PredictorSetMismatch);
        }
        let scales = (0..first.n_predictors())
            .map(|j| {
                let mut col: Vec<f64> = tables.iter().flat_map(|t| t.column(j)).collect();
                if col.is_empty() {
                    return 1.0;
                }
                col.sort_by(f64::total_cmp);
                let iqr = quantile_sorted(&col, 0.75) - quantile_sorted(&col, 0.25);
                let range = col[col.len() - 1] - col[0];
                if iqr > 0.0 {
                    iqr
                } else if range > 0.0 {
                    range
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { predictor_names: first.names().to_vec(), scales })
    }

    /// Unit scales: relative deltas equal raw deltas.
    pub fn unit(predictor_names: Vec<String>) -> Self {
        let scales = vec![1.0; predictor_names.len()];
        Self { predictor_names, scales }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDelta {
    pub predictor: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub relative_delta: f64,
    pub selected: bool,
}

/// Ranks predictors by `|a - b| / scale` and flags the top `k` nonzero ones.
pub fn compare_solutions(a: &SolutionVector, b: &SolutionVector, k: usize, scales: &PredictorScales) -> Result<Vec<SolutionDelta>> {
    if a.predictor_names != b.predictor_names || a.predictor_names != scales.predictor_names {
        return Err(Error::PredictorSetMismatch);
    }
    let mut deltas: Vec<SolutionDelta> = a
        .predictor_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let delta = a.values[j] - b.values[j];
            SolutionDelta {
                predictor: name.clone(),
                a: a.values[j],
                b: b.values[j],
                delta,
                relative_delta: delta.abs() / scales.scales[j],
                selected: false,
            }
        })
        .collect();
    deltas.sort_by(|x, y| y.relative_delta.total_cmp(&x.relative_delta).then_with(|| x.predictor.cmp(&y.predictor)));
    for d in deltas.iter_mut().take(k) {
        d.selected = d.relative_delta > 0.0;
    }
    Ok(deltas)
}
