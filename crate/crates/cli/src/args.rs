use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "heatwave", version, about = "Rare extreme-heat forecasting pipeline: designs, forests, ideal types, conformal sets")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Global {
    /// Seed for every random stream of this run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory receiving outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic panel with a planted heat dome.
    Synth(SynthArgs),
    /// Validate a panel CSV, optionally cropping it to a bounding box.
    Ingest(IngestArgs),
    /// Build gain-score or stacked classification designs.
    #[command(subcommand)]
    Design(DesignCommand),
    /// Gain-score mean, negative count and histogram.
    Summary(SummaryArgs),
    /// Fit a forest to a design.
    Fit(FitArgs),
    /// Out-of-bag permutation importance.
    Importance(ImportanceArgs),
    /// Partial dependence profile of one predictor.
    Pdp(PdpArgs),
    /// Evolve a synthetic population against a regression forest.
    Ga(GaArgs),
    /// Rank predictors by the gap between two solution vectors.
    Compare(CompareArgs),
    /// Split, fit, calibrate and emit conformal prediction sets.
    Forecast(ForecastArgs),
    /// Empirical coverage of a calibrated predictor on labelled rows.
    Coverage(CoverageArgs),
    /// Manski-Lerman weights for a balanced stack.
    Weights(WeightsArgs),
    /// Fit with and without Manski-Lerman weights and compare errors.
    ReweighReport(ReweighArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    PaperLike,
    Regression,
    HighMargin,
    SingleSigmoid,
    Overlapping,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "paper-like")]
    pub preset: Preset,
    /// Target Bayes R² for the regression preset.
    #[arg(long, default_value_t = 0.75)]
    pub r2: f64,
    /// Full generator config as JSON; replaces the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub panel: PathBuf,
    /// south,west,north,east in degrees; south <= lat < north.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub bbox: Option<Vec<f64>>,
    #[arg(long, default_value = "ingested")]
    pub name: String,
}

#[derive(Debug, Args, Serialize)]
pub struct SpecArgs {
    /// Window layout as JSON (as written by `synth`).
    #[arg(long, conflicts_with_all = ["post_start", "window_days"])]
    pub spec: Option<PathBuf>,
    /// First day of the post-test window (YYYY-MM-DD).
    #[arg(long, requires = "window_days")]
    pub post_start: Option<String>,
    #[arg(long)]
    pub window_days: Option<u32>,
    /// Days from the predictor date to the post-test start.
    #[arg(long, default_value_t = 14)]
    pub lag_days: u32,
    /// Shift every date of the layout by this many days.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub offset: i64,
}

#[derive(Debug, Subcommand)]
pub enum DesignCommand {
    /// One row per cell: pre/post means, gain, lagged predictors.
    Gain(GainArgs),
    /// Stack labelled scenarios into a classification design.
    Stack(StackArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GainArgs {
    #[arg(long)]
    pub panel: PathBuf,
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Comma-separated predictor variables; default: every variable but surf_air_temp.
    #[arg(long, value_delimiter = ',')]
    pub predictors: Option<Vec<String>>,
    #[arg(long, default_value = "gain")]
    pub name: String,
}

#[derive(Debug, Args, Serialize)]
pub struct StackArgs {
    /// Default panel for scenarios that do not name their own.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// TAG:LABEL:SPEC_JSON[:PANEL_CSV], repeated.
    #[arg(long = "scenario", required = true)]
    pub scenarios: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub predictors: Option<Vec<String>>,
    #[arg(long, default_value = "stack")]
    pub name: String,
}

#[derive(Debug, Args, Serialize)]
pub struct SummaryArgs {
    /// Gain design CSV.
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub bin_width: f64,
    #[arg(long, default_value = "summary")]
    pub name: String,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskArg {
    Regression,
    Classification,
}

#[derive(Debug, Args, Serialize)]
pub struct ForestArgs {
    #[arg(long, default_value_t = 500)]
    pub trees: usize,
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long)]
    pub min_node_size: Option<usize>,
    /// Grow every tree on all rows.
    #[arg(long)]
    pub no_bootstrap: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Row weights as written by `weights`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value = "forest")]
    pub name: String,
}

#[derive(Debug, Args, Serialize)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub forest: PathBuf,
    /// The design the forest was trained on.
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    #[arg(long, default_value = "importance")]
    pub name: String,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdpModeArg {
    MeanFixed,
    AverageOverData,
}

#[derive(Debug, Args, Serialize)]
pub struct PdpArgs {
    #[arg(long)]
    pub forest: PathBuf,
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long)]
    pub predictor: String,
    #[arg(long, default_value_t = 20)]
    pub grid: usize,
    #[arg(long, value_enum, default_value = "mean-fixed")]
    pub mode: PdpModeArg,
    /// Output stem; default `pdp_<predictor>`.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct GaArgs {
    /// Regression forest used as the survival function.
    #[arg(long)]
    pub forest: PathBuf,
    /// Training design; supplies the per-predictor bounds.
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub population: usize,
    #[arg(long, default_value_t = 5000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 5)]
    pub elitism: usize,
    #[arg(long, default_value_t = 0.8)]
    pub crossover: f64,
    #[arg(long, default_value_t = 0.1)]
    pub mutation: f64,
    #[arg(long, default_value = "ga")]
    pub name: String,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Design CSVs whose pooled interquartile ranges scale the deltas; unit scales when absent.
    #[arg(long = "scale-design")]
    pub scale_designs: Vec<PathBuf>,
    #[arg(long, default_value = "compare")]
    pub name: String,
}

#[derive(Debug, Args, Serialize)]
pub struct ForecastArgs {
    /// Stacked classification design.
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub alpha: f64,
    /// Share of rows used for training.
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Rows to forecast; default: the calibration rows.
    #[arg(long)]
    pub predict: Option<PathBuf>,
    #[arg(long, default_value = "forecast")]
    pub name: String,
}

#[derive(Debug, Args, Serialize)]
pub struct CoverageArgs {
    #[arg(long)]
    pub forest: PathBuf,
    #[arg(long)]
    pub conformal: PathBuf,
    /// Labelled rows disjoint from the calibration rows.
    #[arg(long)]
    pub design: PathBuf,
    /// Evaluate at another miscoverage level of the same calibration.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value = "coverage")]
    pub name: String,
}

#[derive(Debug, Args, Serialize)]
pub struct PriorArgs {
    /// P(event) in the target population.
    #[arg(long, conflicts_with_all = ["days", "event_days"])]
    pub population_prior: Option<f64>,
    /// Days in the target period.
    #[arg(long, requires = "event_days")]
    pub days: Option<u32>,
    /// Event days in the target period.
    #[arg(long, requires = "days")]
    pub event_days: Option<u32>,
}

#[derive(Debug, Args, Serialize)]
pub struct WeightsArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, default_value = "weights")]
    pub name: String,
}

#[derive(Debug, Args, Serialize)]
pub struct ReweighArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long, default_value = "reweigh_report")]
    pub name: String,
}
