//! Synthetic gridded panels with a planted heat dome.
//!
//! Surface temperature of cell `c` on day `d`:
//!
//! ```text
//! 295 - 0.0065 * topography(c) + drift * d + amplitude(c) * 1[c in dome, d in dome window] + N(0, sigma)
//! ```
//!
//! Upper-air predictors are read on the precursor day, `lag_days` before the
//! dome starts. A `Linear` link adds `coef * (x - mean)` of the precursor-day
//! value to the cell's dome amplitude, so gain scores are linear in the
//! predictors plus Gaussian noise. A `Sigmoid` link shifts the precursor-day
//! distribution of dome cells up by `separation` relative to every other day,
//! which makes the balanced event posterior exactly
//! `logistic((x - center) / scale)`. Both give closed-form Bayes limits,
//! recorded in [`GroundTruth`].

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{build_crossover_classification, LabeledDataset, Scenario, WindowSpec};
use crate::error::{Error, Result};
use crate::grid_data::{BBox, CellId, DailyObservation, DateRange, Panel, Variable, N_LEVELS};
use crate::rng::{stream, DOMAIN_DRAW, DOMAIN_SYNTH};
use crate::table::{RowId, Target, TrainingTable};

/// Mean air temperature per pressure level, Kelvin.
pub const TEMP_MEANS: [f64; N_LEVELS] = [288.0, 283.0, 278.0, 272.0, 266.0, 258.0, 248.0, 234.0, 222.0, 216.0, 216.0, 218.0];
pub const TEMP_SD: f64 = 3.0;
/// Mean water vapour mixing ratio per level, g/kg; sd is 20% of the mean.
pub const MMR_MEANS: [f64; N_LEVELS] = [9.0, 7.0, 5.5, 4.0, 2.8, 1.6, 0.9, 0.5, 0.2, 0.05, 0.01, 0.005];
pub const MMR_REL_SD: f64 = 0.2;
pub const TROP_MEAN: f64 = 11_000.0;
pub const TROP_SD: f64 = 1_200.0;
const LAPSE: f64 = 0.0065;
/// Offset of the faux (non-event) windows relative to the event windows.
pub const FAUX_OFFSET_DAYS: i64 = -21;
const SURFACE_BASE: f64 = 295.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Link {
    None,
    Linear { coef: f64 },
    Sigmoid { center: f64, scale: f64, separation: f64 },
}

impl Link {
    /// Balanced event probability given the predictor value, for sigmoid links.
    pub fn posterior(&self, x: f64) -> Option<f64> {
        match self {
            Link::Sigmoid { center, scale, .. } => Some(1.0 / (1.0 + (-(x - center) / scale).exp())),
            _ => None,
        }
    }

    /// Class-conditional sd of a sigmoid-linked predictor.
    pub fn sigmoid_sd(&self) -> Option<f64> {
        match self {
            Link::Sigmoid { scale, separation, .. } => Some((scale * separation).sqrt()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorEffect {
    pub variable: Variable,
    pub link: Link,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomeCells {
    All,
    List(Vec<CellId>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Southwest cell of the grid.
    pub origin: CellId,
    pub n_lat: u32,
    pub n_lon: u32,
    pub date_span: DateRange,
    pub dome_window: DateRange,
    pub dome_cells: DomeCells,
    /// Kelvin added to dome cells during the dome window.
    pub dome_amplitude: f64,
    /// Kelvin per day.
    pub drift_per_day: f64,
    /// Days between the precursor day and the dome start.
    pub lag_days: u32,
    pub predictor_effects: Vec<PredictorEffect>,
    pub noise_sigma: f64,
    /// Chance that a cell-day is missing all measured fields.
    pub missing_rate: f64,
    /// Cell-days forced missing.
    #[serde(default)]
    pub planted_missing: Vec<(CellId, NaiveDate)>,
    /// Fraction of cells that are land.
    pub land_fraction: f64,
    pub seed: u64,
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

impl SynthConfig {
    /// 12×12 grid, 10-day dome starting 26 June 2021. Event gain scores
    /// respond linearly to the level-3 mixing ratio (Bayes R² about 0.75);
    /// the event/faux contrast shows in temp_8 and tropopause height.
    pub fn paper_like(seed: u64) -> Self {
        Self {
            origin: CellId { lat_index: 42, lon_index: -124 },
            n_lat: 12,
            n_lon: 12,
            date_span: DateRange { start: date(2021, 5, 1), end: date(2021, 7, 15) },
            dome_window: DateRange { start: date(2021, 6, 26), end: date(2021, 7, 5) },
            dome_cells: DomeCells::All,
            dome_amplitude: 8.0,
            drift_per_day: 0.05,
            lag_days: 14,
            predictor_effects: vec![
                PredictorEffect { variable: Variable::Temp(8), link: Link::Sigmoid { center: 233.5, scale: 0.4, separation: 4.0 } },
                PredictorEffect { variable: Variable::TropHeight, link: Link::Sigmoid { center: 11_000.0, scale: 1_000.0, separation: 1_000.0 } },
                PredictorEffect { variable: Variable::Mmr(3), link: Link::Linear { coef: 1.4 } },
            ],
            noise_sigma: 2.0,
            missing_rate: 0.0,
            planted_missing: Vec::new(),
            land_fraction: 0.9,
            seed,
        }
    }

    /// Gain-score regression config on a 30×30 grid. Linear effects and
    /// noise are set so that the Bayes R² of the standard gain design is
    /// `r2`; tropopause height carries two thirds of the signal, temp_8 the
    /// rest, and mmr_3 none.
    pub fn regression(seed: u64, r2: f64) -> Self {
        let window = 10.0;
        let sigma = 2.0;
        let noise = 2.0 * sigma * sigma / window;
        let signal = noise * r2 / (1.0 - r2);
        let trop = (2.0 * signal / 3.0).sqrt() / TROP_SD;
        let temp = (signal / 3.0).sqrt() / TEMP_SD;
        Self {
            n_lat: 30,
            n_lon: 30,
            origin: CellId { lat_index: 30, lon_index: -125 },
            predictor_effects: vec![
                PredictorEffect { variable: Variable::TropHeight, link: Link::Linear { coef: trop } },
                PredictorEffect { variable: Variable::Temp(8), link: Link::Linear { coef: temp } },
                PredictorEffect { variable: Variable::Mmr(3), link: Link::None },
            ],
            noise_sigma: sigma,
            ..Self::paper_like(seed)
        }
    }

    /// Like `paper_like` with every predictor separating the classes by many
    /// standard deviations, so a fitted forest is unanimous on nearly every row.
    pub fn high_margin(seed: u64) -> Self {
        Self {
            predictor_effects: vec![
                PredictorEffect { variable: Variable::Temp(8), link: Link::Sigmoid { center: 233.5, scale: 0.025, separation: 40.0 } },
                PredictorEffect { variable: Variable::TropHeight, link: Link::Sigmoid { center: 11_000.0, scale: 100.0, separation: 10_000.0 } },
                PredictorEffect { variable: Variable::Mmr(3), link: Link::Sigmoid { center: 5.5, scale: 0.01, separation: 4.0 } },
            ],
            ..Self::paper_like(seed)
        }
    }

    /// 24×24 grid where temp_8 is the only informative predictor.
    pub fn single_sigmoid(seed: u64) -> Self {
        Self {
            n_lat: 24,
            n_lon: 24,
            origin: CellId { lat_index: 36, lon_index: -126 },
            predictor_effects: vec![
                PredictorEffect { variable: Variable::Temp(8), link: Link::Sigmoid { center: 233.5, scale: 0.4, separation: 4.0 } },
                PredictorEffect { variable: Variable::TropHeight, link: Link::None },
                PredictorEffect { variable: Variable::Mmr(3), link: Link::None },
            ],
            ..Self::paper_like(seed)
        }
    }

    /// Classes overlap heavily (Bayes error about 24%), so classifier
    /// scores rarely tie.
    pub fn overlapping(seed: u64) -> Self {
        Self {
            predictor_effects: vec![
                PredictorEffect { variable: Variable::Temp(8), link: Link::Sigmoid { center: 233.5, scale: 2.0, separation: 4.0 } },
                PredictorEffect { variable: Variable::TropHeight, link: Link::None },
                PredictorEffect { variable: Variable::Mmr(3), link: Link::None },
            ],
            ..Self::paper_like(seed)
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_lat as usize * self.n_lon as usize
    }

    pub fn cells(&self) -> Vec<CellId> {
        let mut out = Vec::with_capacity(self.n_cells());
        for i in 0..self.n_lat as i32 {
            for j in 0..self.n_lon as i32 {
                out.push(CellId { lat_index: self.origin.lat_index + i, lon_index: self.origin.lon_index + j });
            }
        }
        out
    }

    pub fn region(&self) -> BBox {
        BBox {
            south: self.origin.lat_index as f64,
            west: self.origin.lon_index as f64,
            north: (self.origin.lat_index + self.n_lat as i32) as f64,
            east: (self.origin.lon_index + self.n_lon as i32) as f64,
        }
    }

    pub fn precursor_date(&self) -> NaiveDate {
        self.dome_window.start - Duration::days(self.lag_days as i64)
    }

    /// The event design: post-test is the dome window, pre-test the equally
    /// long stretch before it, predictors on the precursor day.
    pub fn event_spec(&self) -> Result<WindowSpec> {
        WindowSpec::standard(self.dome_window.start, self.dome_window.len_days() as u32, self.lag_days)
    }

    /// The event design moved back by [`FAUX_OFFSET_DAYS`]: same geometry,
    /// no dome.
    pub fn faux_spec(&self) -> Result<WindowSpec> {
        Ok(self.event_spec()?.shifted(FAUX_OFFSET_DAYS))
    }

    /// Predictor variables in effect order.
    pub fn predictor_variables(&self) -> Vec<Variable> {
        self.predictor_effects.iter().map(|e| e.variable).collect()
    }

    fn is_dome_cell(&self, cell: CellId) -> bool {
        match &self.dome_cells {
            DomeCells::All => true,
            DomeCells::List(list) => list.contains(&cell),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_lat == 0 || self.n_lon == 0 {
            return bad("grid must have at least one cell".into());
        }
        let far = CellId::new(self.origin.lat_index + self.n_lat as i32 - 1, self.origin.lon_index + self.n_lon as i32 - 1);
        if CellId::new(self.origin.lat_index, self.origin.lon_index).is_err() || far.is_err() {
            return bad("grid extends past the globe".into());
        }
        if !self.date_span.contains_range(&self.dome_window) {
            return bad("dome window must lie inside the date span".into());
        }
        if !self.date_span.contains(self.precursor_date()) {
            return bad("precursor day falls before the date span".into());
        }
        if !(self.missing_rate >= 0.0 && self.missing_rate < 1.0) {
            return bad(format!("missing rate {} outside [0, 1)", self.missing_rate));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be finite and nonnegative", self.noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.land_fraction) {
            return bad(format!("land fraction {} outside [0, 1]", self.land_fraction));
        }
        if !self.dome_amplitude.is_finite() || !self.drift_per_day.is_finite() {
            return bad("dome amplitude and drift must be finite".into());
        }
        let cells: BTreeSet<CellId> = self.cells().into_iter().collect();
        if let DomeCells::List(list) = &self.dome_cells {
            if let Some(c) = list.iter().find(|c| !cells.contains(c)) {
                return bad(format!("dome cell {c} is outside the grid"));
            }
        }
        for (c, d) in &self.planted_missing {
            if !cells.contains(c) || !self.date_span.contains(*d) {
                return bad(format!("planted missing cell-day {c} {d} is outside the panel"));
            }
        }
        let mut seen = BTreeSet::new();
        for e in &self.predictor_effects {
            if !matches!(e.variable, Variable::Temp(_) | Variable::Mmr(_) | Variable::TropHeight) {
                return bad(format!("{} cannot carry a planted effect", e.variable.name()));
            }
            if !seen.insert(e.variable) {
                return bad(format!("{} listed twice", e.variable.name()));
            }
            match e.link {
                Link::None => {}
                Link::Linear { coef } if coef.is_finite() => {}
                Link::Sigmoid { center, scale, separation }
                    if center.is_finite() && scale > 0.0 && separation > 0.0 && (scale * separation).is_finite() => {}
                _ => return bad(format!("invalid link for {}", e.variable.name())),
            }
        }
        Ok(())
    }
}

/// Mean and sd of a variable's ordinary (non-precursor) daily distribution.
fn baseline(var: Variable) -> (f64, f64) {
    match var {
        Variable::Temp(l) => (TEMP_MEANS[l as usize - 1], TEMP_SD),
        Variable::Mmr(l) => (MMR_MEANS[l as usize - 1], MMR_REL_SD * MMR_MEANS[l as usize - 1]),
        Variable::TropHeight => (TROP_MEAN, TROP_SD),
        _ => (0.0, 0.0),
    }
}

/// Distribution of a predictor on a non-event day and on the precursor day
/// of a dome cell.
fn class_distributions(e: &PredictorEffect) -> ((f64, f64), (f64, f64)) {
    match e.link {
        Link::Sigmoid { center, separation, .. } => {
            let s = e.link.sigmoid_sd().unwrap();
            ((center - separation / 2.0, s), (center + separation / 2.0, s))
        }
        _ => {
            let b = baseline(e.variable);
            (b, b)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTruth {
    pub cell: CellId,
    pub land_sea: u8,
    pub topography: f64,
    pub in_dome: bool,
    /// Dome amplitude after linear effects; 0 outside the dome.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub precursor_date: NaiveDate,
    pub cells: Vec<CellTruth>,
    /// Cell-days with every measured field blank.
    pub missing: Vec<(CellId, NaiveDate)>,
    /// Best attainable R² of the event gain design; `None` unless every cell
    /// is in the dome.
    pub bayes_r2: Option<f64>,
    /// Bayes error of the balanced event-vs-non-event stack; `None` without
    /// sigmoid links.
    pub bayes_error: Option<f64>,
}

impl GroundTruth {
    pub fn cell(&self, cell: CellId) -> Option<&CellTruth> {
        self.cells.iter().find(|c| c.cell == cell)
    }
}

/// Standard normal cdf.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

// Complementary error function (Numerical Recipes erfcc, |rel err| < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

fn bayes_limits(config: &SynthConfig) -> (Option<f64>, Option<f64>) {
    let r2 = matches!(config.dome_cells, DomeCells::All).then(|| {
        let signal: f64 = config
            .predictor_effects
            .iter()
            .map(|e| match e.link {
                Link::Linear { coef } => (coef * baseline(e.variable).1).powi(2),
                _ => 0.0,
            })
            .sum();
        let noise = 2.0 * config.noise_sigma.powi(2) / config.dome_window.len_days() as f64;
        if signal + noise > 0.0 {
            signal / (signal + noise)
        } else {
            0.0
        }
    });
    let d2: f64 = config
        .predictor_effects
        .iter()
        .filter_map(|e| match e.link {
            Link::Sigmoid { separation, .. } => Some((separation / e.link.sigmoid_sd().unwrap()).powi(2)),
            _ => None,
        })
        .sum();
    let err = (d2 > 0.0).then(|| normal_cdf(-d2.sqrt() / 2.0));
    (r2, err)
}

struct CellOutput {
    observations: Vec<DailyObservation>,
    truth: CellTruth,
    missing: Vec<NaiveDate>,
}

fn generate_cell(config: &SynthConfig, index: usize, cell: CellId, planted: &BTreeSet<(CellId, NaiveDate)>) -> CellOutput {
    let mut rng = stream(config.seed, DOMAIN_SYNTH, index as u64);
    let land_sea = u8::from(rng.gen::<f64>() < config.land_fraction);
    let topo_draw: f64 = rng.gen_range(0.0..2000.0);
    let topography = if land_sea == 1 { topo_draw } else { 0.0 };
    let in_dome = config.is_dome_cell(cell);
    let precursor = config.precursor_date();

    let mut days = Vec::with_capacity(config.date_span.len_days());
    let mut amplitude = if in_dome { config.dome_amplitude } else { 0.0 };
    for (d, day) in config.date_span.days().enumerate() {
        let z_surf: f64 = rng.sample(StandardNormal);
        let z_trop: f64 = rng.sample(StandardNormal);
        let z_temp: [f64; N_LEVELS] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let z_mmr: [f64; N_LEVELS] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let u_missing: f64 = rng.gen();

        let draw = |var: Variable, z: f64| -> f64 {
            match config.predictor_effects.iter().find(|e| e.variable == var) {
                Some(e) => {
                    let (other, event) = class_distributions(e);
                    let (m, s) = if in_dome && day == precursor { event } else { other };
                    m + s * z
                }
                None => {
                    let (m, s) = baseline(var);
                    m + s * z
                }
            }
        };
        let trop = draw(Variable::TropHeight, z_trop);
        let temps: [f64; N_LEVELS] = std::array::from_fn(|l| draw(Variable::Temp(l as u8 + 1), z_temp[l]));
        let mmrs: [f64; N_LEVELS] = std::array::from_fn(|l| draw(Variable::Mmr(l as u8 + 1), z_mmr[l]).max(0.0));
        let surf_base = SURFACE_BASE - LAPSE * topography + config.drift_per_day * d as f64 + config.noise_sigma * z_surf;
        let missing = u_missing < config.missing_rate || planted.contains(&(cell, day));
        days.push((day, surf_base, trop, temps, mmrs, missing));

        if in_dome && day == precursor {
            for e in &config.predictor_effects {
                if let Link::Linear { coef } = e.link {
                    let x = match e.variable {
                        Variable::TropHeight => trop,
                        Variable::Temp(l) => temps[l as usize - 1],
                        Variable::Mmr(l) => mmrs[l as usize - 1],
                        _ => unreachable!("validated"),
                    };
                    amplitude += coef * (x - baseline(e.variable).0);
                }
            }
        }
    }

    let mut observations = Vec::with_capacity(days.len());
    let mut missing_days = Vec::new();
    for (day, surf_base, trop, temps, mmrs, missing) in days {
        let mut obs = DailyObservation::blank(cell, day, land_sea, topography);
        if missing {
            missing_days.push(day);
        } else {
            let dome = if in_dome && config.dome_window.contains(day) { amplitude } else { 0.0 };
            obs.surf_air_temp = Some(surf_base + dome);
            obs.trop_height = Some(trop);
            obs.temp_profile = temps.map(Some);
            obs.h2o_mmr = mmrs.map(Some);
        }
        observations.push(obs);
    }
    CellOutput {
        observations,
        truth: CellTruth { cell, land_sea, topography, in_dome, amplitude: if in_dome { amplitude } else { 0.0 } },
        missing: missing_days,
    }
}

/// Generates the panel and its ground truth. Cells are generated in
/// parallel from per-cell streams, so the output does not depend on the
/// thread count.
pub fn generate(config: &SynthConfig) -> Result<(Panel, GroundTruth)> {
    config.validate()?;
    let planted: BTreeSet<(CellId, NaiveDate)> = config.planted_missing.iter().copied().collect();
    let outputs: Vec<CellOutput> = config
        .cells()
        .into_par_iter()
        .enumerate()
        .map(|(i, cell)| generate_cell(config, i, cell, &planted))
        .collect();
    let mut observations = Vec::with_capacity(config.n_cells() * config.date_span.len_days());
    let mut cells = Vec::with_capacity(outputs.len());
    let mut missing = Vec::new();
    for out in outputs {
        observations.extend(out.observations);
        missing.extend(out.missing.into_iter().map(|d| (out.truth.cell, d)));
        cells.push(out.truth);
    }
    let panel = Panel::new(observations, config.date_span, config.region())?;
    let (bayes_r2, bayes_error) = bayes_limits(config);
    let truth = GroundTruth { config: config.clone(), precursor_date: config.precursor_date(), cells, missing, bayes_r2, bayes_error };
    Ok((panel, truth))
}

/// Draws `n` i.i.d. labelled rows straight from the predictor model: label
/// ~ Bernoulli(1/2), predictors from the label's distribution. Columns
/// follow `predictor_effects`.
pub fn sample_labeled_rows(config: &SynthConfig, n: usize, seed: u64) -> Result<TrainingTable> {
    config.validate()?;
    if config.predictor_effects.is_empty() {
        return Err(Error::Config("no predictors to sample".into()));
    }
    let dists: Vec<((f64, f64), (f64, f64))> = config.predictor_effects.iter().map(class_distributions).collect();
    let mut rng = stream(seed, DOMAIN_DRAW, 0);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = u8::from(rng.gen::<bool>());
        let row = dists
            .iter()
            .zip(&config.predictor_effects)
            .map(|((other, event), e)| {
                let (m, s) = if y == 1 { *event } else { *other };
                let v = Normal::new(m, s).expect("sd validated").sample(&mut rng);
                if matches!(e.variable, Variable::Mmr(_)) {
                    v.max(0.0)
                } else {
                    v
                }
            })
            .collect();
        rows.push(row);
        labels.push(y);
    }
    let ids = (0..n).map(|_| RowId { cell: config.origin, scenario: "draw".into() }).collect();
    TrainingTable::new(config.predictor_variables().iter().map(|v| v.name()).collect(), rows, Target::Classification(labels), ids)
}

/// Two-scenario crossover stack: every cell once under the event layout
/// (label 1) and once under the faux layout (label 0), predictors from
/// `config.predictor_effects`.
pub fn event_faux_stack(panel: &Panel, config: &SynthConfig) -> Result<LabeledDataset> {
    let scenarios = [
        Scenario { tag: "event".into(), panel, spec: config.event_spec()?, label: 1 },
        Scenario { tag: "faux".into(), panel, spec: config.faux_spec()?, label: 0 },
    ];
    build_crossover_classification(&scenarios, &config.predictor_variables())
}

/// Dome amplitude per cell.
pub fn amplitudes(truth: &GroundTruth) -> BTreeMap<CellId, f64> {
    truth.cells.iter().map(|c| (c.cell, c.amplitude)).collect()
}
