use std::io::Cursor;
use std::path::Path;

use chrono::NaiveDate;
use serde_json::{json, Value};

use heatwave::conformal::{empirical_coverage, predict_set, split_train_calibrate, ConformalPredictor, SetRecord};
use heatwave::design::{build_crossover_classification, build_gain_design, summarize_gains, LabeledDataset, LabeledRow, Scenario, WindowSpec};
use heatwave::diagnostics::{partial_dependence, permutation_importance, PdpMode};
use heatwave::forest::{oob_report, Forest, ForestParams};
use heatwave::ga_synth::{bounds_from_table, compare_solutions, evolve, solution_vector, GaParams, PredictorScales, SolutionVector};
use heatwave::grid_data::{read_panel, select_region, write_panel, BBox, Panel, Variable};
use heatwave::sampling::{manski_lerman_weights, scenario_prior, weighted_refit_report, PriorSpec, TargetPopulation, WeightVector};
use heatwave::synthgen::{generate, SynthConfig};
use heatwave::table::{read_design_csv, write_design_csv, Target, Task, TrainingTable};

use crate::args::*;
use crate::manifest::Run;
use crate::CliError;

fn usage(m: impl Into<String>) -> CliError {
    CliError::Usage(m.into())
}

fn params_json<T: serde::Serialize>(args: &T) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut run = Run::new(cli.global)?;
    let (name, stem, params, results) = match cli.command {
        Command::Synth(a) => ("synth", "synth".to_string(), params_json(&a), synth(&mut run, &a)?),
        Command::Ingest(a) => ("ingest", a.name.clone(), params_json(&a), ingest(&mut run, &a)?),
        Command::Design(DesignCommand::Gain(a)) => ("design gain", a.name.clone(), params_json(&a), design_gain(&mut run, &a)?),
        Command::Design(DesignCommand::Stack(a)) => ("design stack", a.name.clone(), params_json(&a), design_stack(&mut run, &a)?),
        Command::Summary(a) => ("summary", a.name.clone(), params_json(&a), summary(&mut run, &a)?),
        Command::Fit(a) => ("fit", a.name.clone(), params_json(&a), fit(&mut run, &a)?),
        Command::Importance(a) => ("importance", a.name.clone(), params_json(&a), importance(&mut run, &a)?),
        Command::Pdp(a) => {
            let stem = a.name.clone().unwrap_or_else(|| format!("pdp_{}", a.predictor));
            ("pdp", stem.clone(), params_json(&a), pdp(&mut run, &a, &stem)?)
        }
        Command::Ga(a) => ("ga", a.name.clone(), params_json(&a), ga(&mut run, &a)?),
        Command::Compare(a) => ("compare", a.name.clone(), params_json(&a), compare(&mut run, &a)?),
        Command::Forecast(a) => ("forecast", a.name.clone(), params_json(&a), forecast(&mut run, &a)?),
        Command::Coverage(a) => ("coverage", a.name.clone(), params_json(&a), coverage(&mut run, &a)?),
        Command::Weights(a) => ("weights", a.name.clone(), params_json(&a), weights(&mut run, &a)?),
        Command::ReweighReport(a) => ("reweigh-report", a.name.clone(), params_json(&a), reweigh(&mut run, &a)?),
    };
    run.finish(name, &stem, params, results)
}

// ---- shared helpers ----

fn load_panel(run: &mut Run, path: &Path) -> Result<Panel, CliError> {
    let bytes = run.read(path)?;
    read_panel(Cursor::new(bytes)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_design(run: &mut Run, path: &Path, task: Task) -> Result<TrainingTable, CliError> {
    let bytes = run.read(path)?;
    read_design_csv(Cursor::new(bytes), task).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_forest(run: &mut Run, path: &Path) -> Result<Forest, CliError> {
    let bytes = run.read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Data(format!("{}: not UTF-8", path.display())))?;
    Forest::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn design_bytes(table: &TrainingTable) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_design_csv(table, &mut buf)?;
    Ok(buf)
}

fn task_of(t: TaskArg) -> Task {
    match t {
        TaskArg::Regression => Task::Regression,
        TaskArg::Classification => Task::Classification,
    }
}

fn forest_params(a: &ForestArgs, seed: u64) -> ForestParams {
    ForestParams { n_trees: a.trees, mtry: a.mtry, min_node_size: a.min_node_size, seed, bootstrap: !a.no_bootstrap }
}

fn predictor_vars(list: &Option<Vec<String>>) -> Result<Vec<Variable>, CliError> {
    match list {
        Some(names) => names.iter().map(|n| n.parse::<Variable>().map_err(|e| usage(e.to_string()))).collect(),
        None => Ok(Variable::all().into_iter().filter(|v| *v != Variable::SurfAirTemp).collect()),
    }
}

fn window_spec(run: &mut Run, a: &SpecArgs) -> Result<WindowSpec, CliError> {
    let spec = match (&a.spec, &a.post_start, a.window_days) {
        (Some(path), _, _) => run.read_json::<WindowSpec>(path)?,
        (None, Some(start), Some(days)) => {
            let start = NaiveDate::parse_from_str(start, "%Y-%m-%d").map_err(|e| usage(format!("--post-start `{start}`: {e}")))?;
            WindowSpec::standard(start, days, a.lag_days).map_err(|e| usage(e.to_string()))?
        }
        _ => return Err(usage("give either --spec or --post-start with --window-days")),
    };
    Ok(spec.shifted(a.offset))
}

/// Classification design back to labelled rows.
fn labeled(table: &TrainingTable) -> Result<LabeledDataset, CliError> {
    let labels = table.labels().ok_or_else(|| CliError::Data("expected a classification design".into()))?;
    let rows = table
        .rows()
        .iter()
        .zip(labels)
        .zip(table.row_ids())
        .map(|((x, y), id)| LabeledRow { cell: id.cell, scenario_tag: id.scenario.clone(), label: *y, predictors: x.clone() })
        .collect();
    Ok(LabeledDataset { rows, predictor_names: table.names().to_vec(), dropped: Vec::new() })
}

fn prior(a: &PriorArgs, data: &LabeledDataset) -> Result<PriorSpec, CliError> {
    match (a.population_prior, a.days, a.event_days) {
        (Some(p), _, _) => {
            let sample = data.rows.iter().filter(|r| r.label == 1).count() as f64 / data.rows.len().max(1) as f64;
            Ok(PriorSpec::new(p, sample)?)
        }
        (None, Some(days_in_month), Some(event_days)) => {
            let spec = scenario_prior(data, TargetPopulation { days_in_month, event_days })?;
            spec.validate()?;
            Ok(spec)
        }
        _ => Err(usage("give --population-prior or --days with --event-days")),
    }
}

// ---- stages ----

fn synth(run: &mut Run, a: &SynthArgs) -> Result<Value, CliError> {
    let seed = run.global.seed;
    let mut cfg = match &a.config {
        Some(path) => {
            let mut c: SynthConfig = run.read_json(path)?;
            c.seed = seed;
            c
        }
        None => match a.preset {
            Preset::PaperLike => SynthConfig::paper_like(seed),
            Preset::Regression => {
                if !(a.r2 > 0.0 && a.r2 < 1.0) {
                    return Err(usage(format!("--r2 {} outside (0, 1)", a.r2)));
                }
                SynthConfig::regression(seed, a.r2)
            }
            Preset::HighMargin => SynthConfig::high_margin(seed),
            Preset::SingleSigmoid => SynthConfig::single_sigmoid(seed),
            Preset::Overlapping => SynthConfig::overlapping(seed),
        },
    };
    if let Some(r) = a.missing_rate {
        cfg.missing_rate = r;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let (panel, truth) = generate(&cfg)?;
    let mut csv = Vec::new();
    write_panel(&panel, &mut csv)?;
    run.write("panel.csv", &csv)?;
    run.write_json("truth.json", &truth)?;
    run.write_json("config.json", &cfg)?;
    run.write_json("event_spec.json", &cfg.event_spec()?)?;
    run.write_json("faux_spec.json", &cfg.faux_spec()?)?;
    Ok(json!({
        "n_observations": panel.len(),
        "n_cells": cfg.n_cells(),
        "n_missing_cell_days": truth.missing.len(),
        "predictors": cfg.predictor_variables().iter().map(|v| v.name()).collect::<Vec<_>>(),
        "bayes_r2": truth.bayes_r2,
        "bayes_error": truth.bayes_error,
    }))
}

fn ingest(run: &mut Run, a: &IngestArgs) -> Result<Value, CliError> {
    let mut panel = load_panel(run, &a.panel)?;
    if let Some(b) = &a.bbox {
        if b.len() != 4 {
            return Err(usage("--bbox takes south,west,north,east"));
        }
        let bbox = BBox::new(b[0], b[1], b[2], b[3]).map_err(|e| usage(e.to_string()))?;
        panel = select_region(&panel, &bbox)?;
    }
    let mut csv = Vec::new();
    write_panel(&panel, &mut csv)?;
    run.write(&format!("{}.csv", a.name), &csv)?;
    let span = panel.date_span();
    Ok(json!({ "n_observations": panel.len(), "n_cells": panel.cells().len(), "date_span": [span.start, span.end] }))
}

fn design_gain(run: &mut Run, a: &GainArgs) -> Result<Value, CliError> {
    let vars = predictor_vars(&a.predictors)?;
    let spec = window_spec(run, &a.spec)?;
    let panel = load_panel(run, &a.panel)?;
    let g = build_gain_design(&panel, &spec, &vars)?;
    let table = g.to_table(&a.name)?;
    run.write(&format!("{}.csv", a.name), &design_bytes(&table)?)?;
    Ok(json!({
        "n_rows": g.rows.len(),
        "dropped_cells": g.dropped,
        "spec": spec,
        "mean_gain": g.gains().iter().sum::<f64>() / g.rows.len() as f64,
    }))
}

fn design_stack(run: &mut Run, a: &StackArgs) -> Result<Value, CliError> {
    let vars = predictor_vars(&a.predictors)?;
    let mut parsed = Vec::new();
    for s in &a.scenarios {
        let parts: Vec<&str> = s.splitn(4, ':').collect();
        if parts.len() < 3 {
            return Err(usage(format!("--scenario `{s}`: expected TAG:LABEL:SPEC_JSON[:PANEL_CSV]")));
        }
        let label: u8 = parts[1].parse().map_err(|_| usage(format!("--scenario `{s}`: label must be 0 or 1")))?;
        let spec: WindowSpec = run.read_json(Path::new(parts[2]))?;
        let panel_path = match (parts.get(3), &a.panel) {
            (Some(p), _) => Path::new(p).to_path_buf(),
            (None, Some(p)) => p.clone(),
            (None, None) => return Err(usage(format!("--scenario `{s}` names no panel and --panel is absent"))),
        };
        parsed.push((parts[0].to_string(), label, spec, panel_path));
    }
    // Each distinct panel file is read once.
    let mut panels: Vec<(std::path::PathBuf, Panel)> = Vec::new();
    for (_, _, _, p) in &parsed {
        if !panels.iter().any(|(q, _)| q == p) {
            let panel = load_panel(run, p)?;
            panels.push((p.clone(), panel));
        }
    }
    let scenarios: Vec<Scenario<'_>> = parsed
        .iter()
        .map(|(tag, label, spec, p)| Scenario {
            tag: tag.clone(),
            panel: &panels.iter().find(|(q, _)| q == p).expect("panel loaded").1,
            spec: *spec,
            label: *label,
        })
        .collect();
    let data = build_crossover_classification(&scenarios, &vars)?;
    let table = data.to_table()?;
    run.write(&format!("{}.csv", a.name), &design_bytes(&table)?)?;
    let per: Vec<Value> = parsed
        .iter()
        .map(|(tag, label, _, _)| json!({ "tag": tag, "label": label, "rows": data.rows.iter().filter(|r| &r.scenario_tag == tag).count() }))
        .collect();
    Ok(json!({ "n_rows": data.rows.len(), "scenarios": per, "dropped": data.dropped }))
}

fn summary(run: &mut Run, a: &SummaryArgs) -> Result<Value, CliError> {
    let t = load_design(run, &a.design, Task::Regression)?;
    let Target::Regression(gains) = t.target() else { unreachable!() };
    let s = summarize_gains(gains, a.bin_width)?;
    run.write_json(&format!("{}.json", a.name), &s)?;
    Ok(json!({ "n": s.n, "mean": s.mean, "n_negative": s.n_negative }))
}

fn fit(run: &mut Run, a: &FitArgs) -> Result<Value, CliError> {
    let t = load_design(run, &a.design, task_of(a.task))?;
    let w = match &a.weights {
        Some(p) => Some(run.read_json::<WeightVector>(p)?.weights),
        None => None,
    };
    let params = forest_params(&a.forest, run.global.seed);
    let f = Forest::fit(&t, &params, w.as_deref())?;
    run.write(&format!("{}.json", a.name), f.to_json()?.as_bytes())?;
    let oob = if params.bootstrap { Some(oob_report(&f, &t)?) } else { None };
    if let Some(r) = &oob {
        run.write_json(&format!("{}.oob.json", a.name), r)?;
    }
    let mut results = json!({ "fingerprint": f.fingerprint, "params": f.params });
    if let Some(r) = oob {
        if let heatwave::forest::OobReport::Regression { variance_explained, oob_mse, .. } = &r {
            results["variance_explained"] = json!(variance_explained);
            results["oob_mse"] = json!(oob_mse);
        }
        results["oob"] = serde_json::to_value(&r).unwrap_or(Value::Null);
    }
    Ok(results)
}

fn importance(run: &mut Run, a: &ImportanceArgs) -> Result<Value, CliError> {
    let f = load_forest(run, &a.forest)?;
    let t = load_design(run, &a.design, f.task)?;
    let r = permutation_importance(&f, &t, a.repeats, run.global.seed)?;
    run.write_json(&format!("{}.json", a.name), &r)?;
    Ok(json!({ "ranking": r.ranking() }))
}

fn pdp(run: &mut Run, a: &PdpArgs, stem: &str) -> Result<Value, CliError> {
    let f = load_forest(run, &a.forest)?;
    let t = load_design(run, &a.design, f.task)?;
    let mode = match a.mode {
        PdpModeArg::MeanFixed => PdpMode::MeanFixed,
        PdpModeArg::AverageOverData => PdpMode::AverageOverData,
    };
    let p = partial_dependence(&f, &t, &a.predictor, a.grid, mode)?;
    run.write(&format!("{stem}.csv"), p.to_csv().as_bytes())?;
    run.write_json(&format!("{stem}.json"), &p)?;
    Ok(json!({ "n_points": p.grid.len() }))
}

fn ga(run: &mut Run, a: &GaArgs) -> Result<Value, CliError> {
    let f = load_forest(run, &a.forest)?;
    if f.task != Task::Regression {
        return Err(CliError::Data("the survival function must be a regression forest".into()));
    }
    let t = load_design(run, &a.design, Task::Regression)?;
    if t.names() != f.predictor_names.as_slice() {
        return Err(CliError::Data("design predictors differ from the forest's".into()));
    }
    let params = GaParams {
        population_size: a.population,
        n_iterations: a.iterations,
        elitism: a.elitism,
        crossover_prob: a.crossover,
        mutation_prob: a.mutation,
        ..GaParams::new(bounds_from_table(&t), run.global.seed)
    };
    params.validate(t.n_predictors()).map_err(|e| usage(e.to_string()))?;
    let pop = evolve(&f, &params)?;
    let sol = solution_vector(&pop)?;
    run.write_json(&format!("{}.population.json", a.name), &pop)?;
    run.write(&format!("{}.history.csv", a.name), pop.history_csv().as_bytes())?;
    run.write_json(&format!("{}.solution.json", a.name), &sol)?;
    run.write_json(&format!("{}.correlations.json", a.name), &pop.predictor_correlations())?;
    Ok(json!({ "mean_fitness": sol.mean_fitness, "best_fitness": sol.best_fitness }))
}

fn compare(run: &mut Run, a: &CompareArgs) -> Result<Value, CliError> {
    let sa: SolutionVector = run.read_json(&a.a)?;
    let sb: SolutionVector = run.read_json(&a.b)?;
    let scales = if a.scale_designs.is_empty() {
        PredictorScales::unit(sa.predictor_names.clone())
    } else {
        let mut tables = Vec::new();
        for p in &a.scale_designs {
            tables.push(load_design(run, p, Task::Regression)?);
        }
        PredictorScales::pooled_iqr(&tables.iter().collect::<Vec<_>>())?
    };
    let ranked = compare_solutions(&sa, &sb, a.k, &scales)?;
    run.write_json(&format!("{}.json", a.name), &ranked)?;
    let selected: Vec<&str> = ranked.iter().filter(|d| d.selected).map(|d| d.predictor.as_str()).collect();
    Ok(json!({ "selected": selected }))
}

fn set_records(cp: &ConformalPredictor, f: &Forest, t: &TrainingTable) -> Result<Vec<SetRecord>, CliError> {
    t.rows()
        .iter()
        .zip(t.row_ids())
        .map(|(x, id)| Ok(SetRecord::new(id.cell, &id.scenario, &predict_set(cp, f, x)?)))
        .collect()
}

fn forecast(run: &mut Run, a: &ForecastArgs) -> Result<Value, CliError> {
    let t = load_design(run, &a.design, Task::Classification)?;
    let sc = split_train_calibrate(&t, a.split, &forest_params(&a.forest, run.global.seed), a.alpha, run.global.seed)?;
    let targets = match &a.predict {
        Some(p) => {
            let bytes = run.read(p)?;
            read_design_csv(Cursor::new(&bytes), Task::Classification)
                .or_else(|_| read_design_csv(Cursor::new(&bytes), Task::Regression))
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?
        }
        None => t.subset(&sc.calibration_rows),
    };
    let records = set_records(&sc.predictor, &sc.forest, &targets)?;
    run.write(&format!("{}.forest.json", a.name), sc.forest.to_json()?.as_bytes())?;
    run.write_json(&format!("{}.conformal.json", a.name), &sc.predictor)?;
    run.write_json(&format!("{}.sets.json", a.name), &records)?;
    let count = |k: usize| records.iter().filter(|r| r.set.len() == k).count();
    Ok(json!({
        "threshold": sc.predictor.threshold,
        "n_calibration": sc.calibration_rows.len(),
        "n_train": sc.train_rows.len(),
        "n_sets": records.len(),
        "n_singleton": count(1),
        "n_both": count(2),
        "n_empty": count(0),
    }))
}

fn coverage(run: &mut Run, a: &CoverageArgs) -> Result<Value, CliError> {
    let f = load_forest(run, &a.forest)?;
    let mut cp: ConformalPredictor = run.read_json(&a.conformal)?;
    if let Some(alpha) = a.alpha {
        cp = cp.with_alpha(alpha).map_err(|e| usage(e.to_string()))?;
    }
    let t = load_design(run, &a.design, Task::Classification)?;
    let r = empirical_coverage(&cp, &f, &t)?;
    run.write_json(&format!("{}.json", a.name), &r)?;
    Ok(json!({ "alpha": cp.alpha, "coverage": r.coverage, "mean_set_size": r.mean_set_size }))
}

fn weights(run: &mut Run, a: &WeightsArgs) -> Result<Value, CliError> {
    let t = load_design(run, &a.design, Task::Classification)?;
    let data = labeled(&t)?;
    let p = prior(&a.prior, &data)?;
    let w = manski_lerman_weights(&data.labels(), &p)?;
    run.write_json(&format!("{}.json", a.name), &w)?;
    run.write_json(&format!("{}.prior.json", a.name), &p)?;
    Ok(json!({ "prior": p, "class_weights": w.class_weights }))
}

fn reweigh(run: &mut Run, a: &ReweighArgs) -> Result<Value, CliError> {
    let t = load_design(run, &a.design, Task::Classification)?;
    let data = labeled(&t)?;
    let p = prior(&a.prior, &data)?;
    let params = forest_params(&a.forest, run.global.seed);
    if !params.bootstrap {
        return Err(usage("reweigh-report needs bootstrap sampling for out-of-bag errors"));
    }
    let r = weighted_refit_report(&data, &p, &params)?;
    run.write_json(&format!("{}.json", a.name), &r)?;
    Ok(json!({
        "error_rate": [r.unweighted.error_rate, r.weighted.error_rate],
        "cost_ratio_fp_to_fn": r.shift.fp_per_fn,
        "implied_cost_fp_to_fn": r.shift.implied_cost_fp_to_fn,
    }))
}
