//! Crossover quasi-experimental designs.
//!
//! A [`WindowSpec`] fixes a post-test window, an optional pre-test window and
//! the single day on which predictors are read. Gain designs take the
//! post-test minus pre-test mean surface temperature per cell; classification
//! designs stack several scenarios (one event, one or more time-shifted faux
//! events) with a binary label and drop the pre-test.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_data::{window_mean, CellId, DateRange, Panel, Variable};
use crate::table::{RowId, Target, TrainingTable};

/// Window layout of one design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub post_window: DateRange,
    pub pre_window: Option<DateRange>,
    pub predictor_lag_date: NaiveDate,
}

impl WindowSpec {
    pub fn new(post_window: DateRange, pre_window: Option<DateRange>, predictor_lag_date: NaiveDate) -> Result<Self> {
        if let Some(pre) = pre_window {
            if pre.end >= post_window.start {
                return Err(Error::InvalidSpec("pre-test window must end before the post-test starts".into()));
            }
        }
        if predictor_lag_date >= post_window.start {
            return Err(Error::InvalidSpec("predictor date must precede the post-test window".into()));
        }
        Ok(Self { post_window, pre_window, predictor_lag_date })
    }

    /// `window_days`-day post-test starting at `post_start`, an equally long
    /// pre-test immediately before it, and predictors read `lag_days` before
    /// the post-test starts.
    pub fn standard(post_start: NaiveDate, window_days: u32, lag_days: u32) -> Result<Self> {
        let post = DateRange::starting(post_start, window_days)?;
        let pre = DateRange::starting(post_start - Duration::days(window_days as i64), window_days)?;
        Self::new(post, Some(pre), post_start - Duration::days(lag_days as i64))
    }

    /// Same layout translated by `offset` days.
    pub fn shifted(&self, offset: i64) -> Self {
        Self {
            post_window: self.post_window.shifted(offset),
            pre_window: self.pre_window.map(|p| p.shifted(offset)),
            predictor_lag_date: self.predictor_lag_date + Duration::days(offset),
        }
    }

    /// Days between the predictor date and the post-test start.
    pub fn lag_gap(&self) -> i64 {
        (self.post_window.start - self.predictor_lag_date).num_days()
    }
}

/// Translates every date of `spec` by `offset` days.
pub fn shift_spec(spec: &WindowSpec, offset: i64) -> WindowSpec {
    spec.shifted(offset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub cell: CellId,
    pub pre_mean: f64,
    pub post_mean: f64,
    pub gain: f64,
    pub predictors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainDataset {
    pub rows: Vec<GainRow>,
    pub predictor_names: Vec<String>,
    /// Cells dropped because an aggregate or predictor was missing.
    pub dropped: Vec<CellId>,
}

impl GainDataset {
    pub fn gains(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gain).collect()
    }

    /// Regression table with the gain as response, every row tagged `scenario`.
    pub fn to_table(&self, scenario: &str) -> Result<TrainingTable> {
        TrainingTable::new(
            self.predictor_names.clone(),
            self.rows.iter().map(|r| r.predictors.clone()).collect(),
            Target::Regression(self.gains()),
            self.rows.iter().map(|r| RowId { cell: r.cell, scenario: scenario.to_string() }).collect(),
        )
    }
}

fn check_in_span(panel: &Panel, range: &DateRange) -> Result<()> {
    if panel.date_span().contains_range(range) {
        Ok(())
    } else {
        Err(Error::WindowOutOfSpan { start: range.start, end: range.end })
    }
}

fn lag_predictors(panel: &Panel, cell: CellId, date: NaiveDate, vars: &[Variable]) -> Option<Vec<f64>> {
    vars.iter().map(|v| panel.value(cell, date, *v)).collect()
}

/// Builds the gain-score design: one row per cell with complete pre-test,
/// post-test and lag-date predictors.
pub fn build_gain_design(panel: &Panel, spec: &WindowSpec, predictor_vars: &[Variable]) -> Result<GainDataset> {
    let pre_window = spec
        .pre_window
        .ok_or_else(|| Error::InvalidSpec("a gain design needs a pre-test window".into()))?;
    if predictor_vars.contains(&Variable::SurfAirTemp) {
        return Err(Error::InvalidParameter(
            "surf_air_temp forms the pre/post tests and cannot be a predictor".into(),
        ));
    }
    let lag = DateRange::new(spec.predictor_lag_date, spec.predictor_lag_date)?;
    for range in [&spec.post_window, &pre_window, &lag] {
        check_in_span(panel, range)?;
    }
    let pre = window_mean(panel, Variable::SurfAirTemp, &pre_window)?;
    let post = window_mean(panel, Variable::SurfAirTemp, &spec.post_window)?;
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for cell in panel.cells() {
        let predictors = lag_predictors(panel, cell, spec.predictor_lag_date, predictor_vars);
        match (pre[&cell], post[&cell], predictors) {
            (Some(pre_mean), Some(post_mean), Some(predictors)) => rows.push(GainRow {
                cell,
                pre_mean,
                post_mean,
                gain: post_mean - pre_mean,
                predictors,
            }),
            _ => dropped.push(cell),
        }
    }
    if rows.is_empty() {
        return Err(Error::NoCompleteRows);
    }
    Ok(GainDataset { rows, predictor_names: predictor_vars.iter().map(|v| v.name()).collect(), dropped })
}

/// One condition of a crossover stack.
#[derive(Debug, Clone)]
pub struct Scenario<'a> {
    pub tag: String,
    pub panel: &'a Panel,
    pub spec: WindowSpec,
    /// 1 = event, 0 = non-event.
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub cell: CellId,
    pub scenario_tag: String,
    pub label: u8,
    pub predictors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub rows: Vec<LabeledRow>,
    pub predictor_names: Vec<String>,
    /// (scenario tag, cell) pairs dropped for missing predictors.
    pub dropped: Vec<(String, CellId)>,
}

impl LabeledDataset {
    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn to_table(&self) -> Result<TrainingTable> {
        TrainingTable::new(
            self.predictor_names.clone(),
            self.rows.iter().map(|r| r.predictors.clone()).collect(),
            Target::Classification(self.labels()),
            self.rows.iter().map(|r| RowId { cell: r.cell, scenario: r.scenario_tag.clone() }).collect(),
        )
    }
}

fn scenario_rows(s: &Scenario<'_>, vars: &[Variable]) -> (Vec<LabeledRow>, Vec<(String, CellId)>) {
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for cell in s.panel.cells() {
        match lag_predictors(s.panel, cell, s.spec.predictor_lag_date, vars) {
            Some(predictors) => rows.push(LabeledRow { cell, scenario_tag: s.tag.clone(), label: s.label, predictors }),
            None => dropped.push((s.tag.clone(), cell)),
        }
    }
    (rows, dropped)
}

/// Stacks labelled scenarios into one classification dataset. Predictors are
/// read at each scenario's lag date; pre-test windows are ignored.
pub fn build_crossover_classification(scenarios: &[Scenario<'_>], predictor_vars: &[Variable]) -> Result<LabeledDataset> {
    if scenarios.len() < 2 {
        return Err(Error::LabelImbalance("a crossover stack needs at least two scenarios".into()));
    }
    if let Some(s) = scenarios.iter().find(|s| s.label > 1) {
        return Err(Error::InvalidParameter(format!("scenario `{}` has label {}", s.tag, s.label)));
    }
    if predictor_vars.contains(&Variable::SurfAirTemp) {
        return Err(Error::InvalidParameter("surf_air_temp cannot be a predictor".into()));
    }
    let has = |l: u8| scenarios.iter().any(|s| s.label == l);
    if !has(0) || !has(1) {
        return Err(Error::LabelImbalance("scenarios must include both labels".into()));
    }
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for s in scenarios {
        check_in_span(s.panel, &DateRange::new(s.spec.predictor_lag_date, s.spec.predictor_lag_date)?)?;
        let (r, d) = scenario_rows(s, predictor_vars);
        rows.extend(r);
        dropped.extend(d);
    }
    if rows.is_empty() {
        return Err(Error::NoCompleteRows);
    }
    let complete = |l: u8| rows.iter().any(|r| r.label == l);
    if !complete(0) || !complete(1) {
        return Err(Error::LabelImbalance("one class has no complete rows".into()));
    }
    Ok(LabeledDataset { rows, predictor_names: predictor_vars.iter().map(|v| v.name()).collect(), dropped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSummary {
    pub n: usize,
    pub mean: f64,
    pub n_negative: usize,
    pub histogram: Vec<HistogramBin>,
    pub bin_width: f64,
}

/// Mean, negative count and a histogram with edges on multiples of
/// `bin_width`.
pub fn summarize_gains(gains: &[f64], bin_width: f64) -> Result<GainSummary> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidParameter(format!("bin width {bin_width} must be positive")));
    }
    if gains.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let bin_of = |g: f64| (g / bin_width).floor() as i64;
    let lo = gains.iter().map(|g| bin_of(*g)).min().unwrap();
    let hi = gains.iter().map(|g| bin_of(*g)).max().unwrap();
    let mut histogram: Vec<HistogramBin> = (lo..=hi)
        .map(|k| HistogramBin { lower: k as f64 * bin_width, upper: (k + 1) as f64 * bin_width, count: 0 })
        .collect();
    for g in gains {
        histogram[(bin_of(*g) - lo) as usize].count += 1;
    }
    Ok(GainSummary {
        n: gains.len(),
        mean: gains.iter().sum::<f64>() / gains.len() as f64,
        n_negative: gains.iter().filter(|g| **g < 0.0).count(),
        histogram,
        bin_width,
    })
}

pub fn gain_summary(g: &GainDataset, bin_width: f64) -> Result<GainSummary> {
    summarize_gains(&g.gains(), bin_width)
}
