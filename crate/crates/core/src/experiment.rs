//! Experiment recipes. A run keeps its files in memory and returns them with
//! the manifest, so callers can compare payloads before writing anything.

use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::actions::{ActionSet, Window};
use crate::calibration::{
    calibration_curve, delta_min_with, scaling_fit, CalibrationCurve, DeltaGrid, DeltaMinResult,
};
use crate::config::{Config, ExperimentKind, ModeEstimate, ModelKind};
use crate::error::{Error, Result};
use crate::ingest::{ingest_scenarios, write_scenarios, IngestReport};
use crate::models::tube::removals_for;
use crate::models::{
    campi_violation_bound, decision_intervals, fit_quantile_tubes, fit_scenario_hull, fit_stepwise_gaussian,
    fit_stepwise_gmm, fit_two_mode_classifier, Decision, FittedModel, GaussianClass, GaussianModel, ModelDocument,
    QuantileTubeSet, RegionMode, TwoModeClassifier,
};
use crate::report::{fmt_float, write_outputs, CsvTable, Manifest, OutputFile};
use crate::rng::RngSpec;
use crate::synth::{add_noise, gen_gaussian_2d, gen_two_mode_1d, noise_width, NoiseKind};
use crate::trajectory::{split_state_action, Dataset, Point, Trajectory};

const TRAIN: u64 = 1;
const TEST: u64 = 2;
const FIT: u64 = 3;

/// Smallest `δ · mc_samples` for which a Monte Carlo density threshold is
/// kept on the grid.
const MIN_MC_TAIL: f64 = 10.0;

/// Ratios are summarized separately for δ at or below this level.
const LOW_DELTA: f64 = 1e-3;

/// Files produced by one run. `summary.json` is always present.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub experiment: ExperimentKind,
    pub files: Vec<OutputFile>,
    pub manifest: Manifest,
}

impl RunOutput {
    pub fn file(&self, name: &str) -> Option<&OutputFile> {
        self.files.iter().find(|f| f.name == name)
    }

    pub fn summary(&self) -> Result<Value> {
        let f = self
            .file("summary.json")
            .ok_or_else(|| Error::Data("run produced no summary".into()))?;
        Ok(serde_json::from_slice(&f.contents)?)
    }

    /// Writes every file plus `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_outputs(dir, &self.files, &self.manifest)
    }
}

/// Validates `cfg` for `kind` and runs the recipe. `config_text` is hashed
/// into the manifest.
pub fn run_experiment(kind: ExperimentKind, cfg: &Config, config_text: &str) -> Result<RunOutput> {
    cfg.validate(kind)?;
    let files = match kind {
        ExperimentKind::GaussianAudit => gaussian_audit(cfg)?,
        ExperimentKind::GmmAudit => gmm_audit(cfg)?,
        ExperimentKind::QuantileAudit => quantile_audit(cfg)?,
        ExperimentKind::QuantileScaling => quantile_scaling(cfg)?,
        ExperimentKind::ScenarioOpt => scenario_opt(cfg)?,
        ExperimentKind::HmmIntervals => hmm_intervals(cfg)?,
        ExperimentKind::IngestAudit => ingest_audit(cfg)?,
        ExperimentKind::Ingest => ingest(cfg)?,
        ExperimentKind::ExportTube => export_tube_run(cfg)?,
    };
    let manifest = Manifest::new(kind.name(), config_text, cfg.rng(), &files);
    Ok(RunOutput {
        experiment: kind,
        files,
        manifest,
    })
}

fn noise_name(kind: NoiseKind) -> &'static str {
    match kind {
        NoiseKind::None => "none",
        NoiseKind::Uniform => "uniform",
        NoiseKind::SymmetricNonuniform => "symmetric_nonuniform",
    }
}

fn noise_label(kind: NoiseKind) -> u64 {
    16 + kind as u64
}

/// Gaussian sample of size `n` drawn under `rng`, plus noise of the given
/// width. Distinct noise kinds share the base draws.
fn noisy_sample(cfg: &Config, n: usize, kind: NoiseKind, width: [f64; 2], rng: RngSpec) -> Result<Vec<Point>> {
    let s = &cfg.synthetic;
    let mut pts = gen_gaussian_2d(n, s.mean, s.cov, rng)?;
    add_noise(&mut pts, kind, width, rng.child(noise_label(kind)));
    Ok(pts)
}

/// Train and test samples for a synthetic audit. The noise width comes from
/// the noise-free training sample and is reused for the test sample.
fn synthetic_pair(cfg: &Config, n_train: usize, n_test: usize, kind: NoiseKind) -> Result<(ActionSet, ActionSet)> {
    let rng = cfg.rng();
    let s = &cfg.synthetic;
    let base = gen_gaussian_2d(n_train, s.mean, s.cov, rng.child(TRAIN))?;
    let width = noise_width(&base, s.noise_frac)?;
    let train = noisy_sample(cfg, n_train, kind, width, rng.child(TRAIN))?;
    let test = noisy_sample(cfg, n_test, kind, width, rng.child(TEST))?;
    Ok((ActionSet::from_points(train), ActionSet::from_points(test)))
}

fn mc_samples(cfg: &Config, full: usize, quick: usize) -> usize {
    if cfg.experiment.quick {
        full.min(quick)
    } else {
        full
    }
}

fn delta_min(cfg: &Config, curve: &CalibrationCurve) -> Result<DeltaMinResult> {
    delta_min_with(curve, cfg.calibration.eta, cfg.calibration.delta_min_rule)
}

/// Smallest and largest observed/expected ratio over records with
/// `δ <= max_delta`.
fn ratio_range(curve: &CalibrationCurve, max_delta: f64) -> Option<[f64; 2]> {
    curve
        .records
        .iter()
        .filter(|r| r.delta <= max_delta)
        .map(|r| r.ratio)
        .fold(None, |acc, x| match acc {
            None => Some([x, x]),
            Some([lo, hi]) => Some([lo.min(x), hi.max(x)]),
        })
}

/// Largest finite `|log10 ratio|` over records with `δ <= max_delta`, and
/// whether any record there saw no violations at all.
fn worst_log_ratio(curve: &CalibrationCurve, max_delta: f64) -> (Option<f64>, bool) {
    let low = curve.records.iter().filter(|r| r.delta <= max_delta);
    let worst = low
        .clone()
        .map(|r| r.log10_ratio.abs())
        .filter(|x| x.is_finite())
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
    (worst, low.clone().any(|r| r.observed_count == 0))
}

fn curve_summary(cfg: &Config, file: &str, curve: &CalibrationCurve) -> Result<Value> {
    let dm = delta_min(cfg, curve)?;
    let (worst, empty) = worst_log_ratio(curve, 1.0);
    Ok(json!({
        "file": file,
        "n_test": curve.n_test,
        "delta_min": dm.delta_min,
        "eta": dm.eta,
        "delta_min_rule": dm.rule,
        "ratio_range_low_delta": ratio_range(curve, LOW_DELTA),
        "max_abs_log10_ratio": worst,
        "any_delta_without_violations": empty,
    }))
}

fn summary_file(kind: ExperimentKind, cfg: &Config, body: Value) -> Result<OutputFile> {
    let mut doc = json!({
        "experiment": kind.name(),
        "seed": cfg.experiment.seed,
        "stream": cfg.experiment.stream,
        "quick": cfg.experiment.quick,
    });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    OutputFile::json("summary.json", &doc)
}

fn gaussian_class(m: ModelKind) -> Result<GaussianClass> {
    match m {
        ModelKind::Gaussian => Ok(GaussianClass::Gaussian),
        ModelKind::NoisyRational => Ok(GaussianClass::NoisyRational),
        other => Err(Error::Config(format!(
            "synthetic.models: `{}` is not a Gaussian-family model",
            other.name()
        ))),
    }
}

fn gaussian_expectation(kind: NoiseKind) -> &'static str {
    match kind {
        NoiseKind::None => "calibrated across the grid: ratio near 1 wherever violations are expected",
        NoiseKind::Uniform => "conservative at small delta: bounded noise thins the tails, ratio below 1",
        NoiseKind::SymmetricNonuniform => {
            "overconfident at small delta: peaked heavy noise widens the tails, ratio above 1"
        }
    }
}

fn gaussian_audit(cfg: &Config) -> Result<Vec<OutputFile>> {
    let grid = cfg.calibration.grid()?;
    let classes = cfg
        .synthetic
        .models
        .iter()
        .map(|&m| gaussian_class(m).map(|c| (m, c)))
        .collect::<Result<Vec<_>>>()?;
    let mut files = Vec::new();
    let mut curves = Vec::new();
    for &kind in &cfg.synthetic.generators {
        let (train, test) = synthetic_pair(cfg, cfg.synthetic.n_train, cfg.n_test(), kind)?;
        for &(m, class) in &classes {
            let model = FittedModel::Gaussian(fit_stepwise_gaussian(&train, class, cfg.calibration.region_mode)?);
            let curve = calibration_curve(&model, &test, &grid, Window::Full)?;
            let stem = format!("{}_{}", noise_name(kind), m.name());
            let name = format!("curve_{stem}.csv");
            let mut s = curve_summary(cfg, &name, &curve)?;
            s["generator"] = json!(noise_name(kind));
            s["model"] = json!(m.name());
            s["expectation"] = json!(gaussian_expectation(kind));
            curves.push(s);
            files.push(OutputFile::json(format!("model_{stem}.json"), &ModelDocument::new(model, train.len(), Some(cfg.rng())))?);
            files.push(OutputFile::text(name, curve.to_csv()));
        }
    }
    files.push(summary_file(
        ExperimentKind::GaussianAudit,
        cfg,
        json!({ "n_train": cfg.synthetic.n_train, "n_test": cfg.n_test(), "curves": curves }),
    )?);
    Ok(files)
}

fn gmm_audit(cfg: &Config) -> Result<Vec<OutputFile>> {
    let g = &cfg.gmm;
    let mc = mc_samples(cfg, g.mc_samples, g.quick_mc_samples);
    let grid = cfg.calibration.grid()?.truncated(MIN_MC_TAIL / mc as f64)?;
    let (train, test) = synthetic_pair(cfg, cfg.synthetic.n_train, cfg.n_test(), g.generator)?;
    let em = g.em();
    let mut files = Vec::new();
    let mut curves = Vec::new();
    for &k in &g.components {
        let fit = fit_stepwise_gmm(&train, k, &em, grid.deltas(), mc, cfg.rng().child(FIT).child(k as u64))?;
        let model = FittedModel::Gmm(fit);
        let curve = calibration_curve(&model, &test, &grid, Window::Full)?;
        let name = format!("curve_k{k}.csv");
        let mut s = curve_summary(cfg, &name, &curve)?;
        let (worst, empty) = worst_log_ratio(&curve, 1e-4);
        s["components"] = json!(k);
        s["max_abs_log10_ratio_below_1e-4"] = json!(worst);
        s["no_violations_below_1e-4"] = json!(empty);
        curves.push(s);
        files.push(OutputFile::json(format!("model_k{k}.json"), &ModelDocument::new(model, train.len(), Some(cfg.rng())))?);
        files.push(OutputFile::text(name, curve.to_csv()));
    }
    files.push(summary_file(
        ExperimentKind::GmmAudit,
        cfg,
        json!({
            "generator": noise_name(g.generator),
            "n_train": cfg.synthetic.n_train,
            "n_test": cfg.n_test(),
            "mc_samples": mc,
            "grid_floor": grid.deltas().last(),
            "expectation": "extra mixture components do not repair calibration at small delta",
            "curves": curves,
        }),
    )?);
    Ok(files)
}

/// Grid levels that leave at least three of `n` training actions in the tube.
fn tube_grid(grid: &DeltaGrid, n: usize) -> Result<DeltaGrid> {
    let kept: Vec<f64> = grid
        .deltas()
        .iter()
        .copied()
        .filter(|&d| n.saturating_sub(removals_for(d, n)) >= 3)
        .collect();
    DeltaGrid::new(kept).map_err(|_| Error::TooFew {
        what: "training actions for any tube level",
        needed: 3,
        got: n,
    })
}

fn tube_vertices(set: &QuantileTubeSet) -> String {
    let mut t = CsvTable::new(["delta", "step", "vertex", "x", "y"]);
    for tube in &set.tubes {
        for (s, poly) in tube.cross_sections.iter().enumerate() {
            for (v, p) in poly.vertices().iter().enumerate() {
                t.push(vec![
                    fmt_float(tube.target_delta),
                    s.to_string(),
                    v.to_string(),
                    fmt_float(p[0]),
                    fmt_float(p[1]),
                ]);
            }
        }
    }
    t.to_text()
}

fn fit_tube_model(train: &ActionSet, grid: &DeltaGrid) -> Result<(FittedModel, DeltaGrid)> {
    let grid = tube_grid(grid, train.len())?;
    let tubes = fit_quantile_tubes(train, grid.deltas(), Window::Full)?;
    Ok((FittedModel::QuantileTube(QuantileTubeSet { tubes }), grid))
}

fn quantile_audit(cfg: &Config) -> Result<Vec<OutputFile>> {
    let q = &cfg.quantile;
    let (train, test) = synthetic_pair(cfg, q.n_train, cfg.n_test(), q.generator)?;
    let (model, grid) = fit_tube_model(&train, &cfg.calibration.grid()?)?;
    let curve = calibration_curve(&model, &test, &grid, Window::Full)?;
    let FittedModel::QuantileTube(set) = &model else {
        unreachable!("tube fit yields tubes")
    };
    let mut s = curve_summary(cfg, "curve.csv", &curve)?;
    let inaccurate: Vec<f64> = delta_min(cfg, &curve)?
        .accurate
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(d, _)| *d)
        .collect();
    s["inaccurate_deltas"] = json!(inaccurate);
    let files = vec![
        OutputFile::text("curve.csv", curve.to_csv()),
        OutputFile::text("tube_vertices.csv", tube_vertices(set)),
        summary_file(
            ExperimentKind::QuantileAudit,
            cfg,
            json!({
                "generator": noise_name(q.generator),
                "n_train": q.n_train,
                "n_test": cfg.n_test(),
                "expectation": "accurate down to a delta a constant multiple above 1/N, inaccurate below it",
                "curve": s,
            }),
        )?,
    ];
    Ok(files)
}

fn quantile_scaling(cfg: &Config) -> Result<Vec<OutputFile>> {
    let q = &cfg.quantile;
    let rng = cfg.rng();
    let s = &cfg.synthetic;
    let grid = cfg.calibration.grid()?;
    // One noise width for every size, taken from the largest training draw.
    let n_max = *q.scaling_n_train.iter().max().expect("validated non-empty");
    let width = noise_width(&gen_gaussian_2d(n_max, s.mean, s.cov, rng.child(TRAIN).child(n_max as u64))?, s.noise_frac)?;
    let test = ActionSet::from_points(noisy_sample(cfg, cfg.n_test(), q.generator, width, rng.child(TEST))?);
    let mut files = Vec::new();
    let mut per_n = Vec::new();
    let mut points = Vec::new();
    for &n in &q.scaling_n_train {
        let train = ActionSet::from_points(noisy_sample(cfg, n, q.generator, width, rng.child(TRAIN).child(n as u64))?);
        let (model, tube_grid) = fit_tube_model(&train, &grid)?;
        let curve = calibration_curve(&model, &test, &tube_grid, Window::Full)?;
        let name = format!("curve_n{n}.csv");
        let mut sm = curve_summary(cfg, &name, &curve)?;
        sm["n_train"] = json!(n);
        if let Some(d) = delta_min(cfg, &curve)?.delta_min {
            points.push((n as f64, d));
        }
        per_n.push(sm);
        files.push(OutputFile::text(name, curve.to_csv()));
    }
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "delta_min defined for only {} training sizes; the scaling fit needs 3",
            points.len()
        )));
    }
    let fit = scaling_fit(&points)?;
    let extrapolated = q
        .extrapolate_deltas
        .iter()
        .map(|&d| Ok(json!({ "delta": d, "n_train": fit.extrapolate(d)? })))
        .collect::<Result<Vec<_>>>()?;
    files.push(OutputFile::text("scaling.csv", fit.to_csv()));
    files.push(summary_file(
        ExperimentKind::QuantileScaling,
        cfg,
        json!({
            "generator": noise_name(q.generator),
            "n_test": cfg.n_test(),
            "slope": fit.slope,
            "intercept": fit.intercept,
            "r2": fit.r2,
            "extrapolated": extrapolated,
            "expectation": "log delta_min falls linearly in log N with slope near -1",
            "curves": per_n,
        }),
    )?);
    Ok(files)
}

#[derive(Debug, Clone, Copy)]
struct Repetition {
    support: usize,
    epsilon: f64,
    violation: f64,
}

fn scenario_opt(cfg: &Config) -> Result<Vec<OutputFile>> {
    let sc = &cfg.scenario;
    let s = &cfg.synthetic;
    let rng = cfg.rng();
    let mc = mc_samples(cfg, sc.mc_samples, sc.quick_mc_samples);
    let truth = GaussianModel::new(s.mean.to_vec(), s.cov.to_vec())?;
    let mut reps = Vec::with_capacity(sc.repetitions);
    for r in 0..sc.repetitions as u64 {
        let train = gen_gaussian_2d(sc.n_train, s.mean, s.cov, rng.child(TRAIN).child(r))?;
        let hull = fit_scenario_hull(&ActionSet::from_points(train), Window::Full)?;
        let epsilon = campi_violation_bound(sc.n_train as u64, hull.support_count as u64, sc.beta)?;
        let outside: usize = rng
            .child(TEST)
            .child(r)
            .par_blocks(mc, |g, _| {
                let mut p = [0.0; 2];
                truth.sample_into(g, &mut p);
                !hull.contains(&[p])
            })
            .into_par_iter()
            .filter(|&o| o)
            .count();
        reps.push(Repetition {
            support: hull.support_count,
            epsilon,
            violation: outside as f64 / mc as f64,
        });
    }
    let mut t = CsvTable::new(["repetition", "support_count", "epsilon", "mc_violation", "exceeded"]);
    for (i, r) in reps.iter().enumerate() {
        t.push(vec![
            i.to_string(),
            r.support.to_string(),
            fmt_float(r.epsilon),
            fmt_float(r.violation),
            (r.violation > r.epsilon).to_string(),
        ]);
    }
    let mut table = CsvTable::new(["n_train", "support_count", "beta", "epsilon"]);
    for &n in &sc.table_n {
        let eps = campi_violation_bound(n, sc.table_support, sc.beta)?;
        table.push(vec![n.to_string(), sc.table_support.to_string(), fmt_float(sc.beta), fmt_float(eps)]);
    }
    let exceed = reps.iter().filter(|r| r.violation > r.epsilon).count();
    let mean_violation = reps.iter().map(|r| r.violation).sum::<f64>() / reps.len() as f64;
    Ok(vec![
        OutputFile::text("repetitions.csv", t.to_text()),
        OutputFile::text("bound_table.csv", table.to_text()),
        summary_file(
            ExperimentKind::ScenarioOpt,
            cfg,
            json!({
                "n_train": sc.n_train,
                "repetitions": sc.repetitions,
                "beta": sc.beta,
                "mc_samples": mc,
                "exceedances": exceed,
                "expected_exceedances_at_most": sc.beta * sc.repetitions as f64,
                "mean_mc_violation": mean_violation,
                "expectation": "the bound fails in at most about beta of the repetitions",
            }),
        )?,
    ])
}

fn decision_name(d: Decision) -> &'static str {
    match d {
        Decision::Mode1 => "mode1",
        Decision::Mode2 => "mode2",
        Decision::Gray => "gray",
    }
}

fn population_model(spec: &crate::synth::ModeSpec) -> Result<GaussianModel> {
    let (m, v) = spec.distribution.moments();
    GaussianModel::new(vec![m], vec![v])
}

fn hmm_intervals(cfg: &Config) -> Result<Vec<OutputFile>> {
    let h = &cfg.hmm;
    let mut t = CsvTable::new(["case", "delta", "lo", "hi", "decision"]);
    let mut cases = Vec::new();
    for (ci, case) in h.cases.iter().enumerate() {
        let (x1, x2) = gen_two_mode_1d(&case.mode1, &case.mode2, cfg.rng().child(TRAIN).child(ci as u64))?;
        let classifier = match case.estimate {
            ModeEstimate::Sample => fit_two_mode_classifier(&x1, &x2)?,
            ModeEstimate::Population => {
                TwoModeClassifier::new(population_model(&case.mode1)?, population_model(&case.mode2)?)?
            }
        };
        let range = match case.range {
            Some([lo, hi]) => (lo, hi),
            None => x1.iter().chain(&x2).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            }),
        };
        let mut per_delta = Vec::new();
        for &delta in &h.deltas {
            let di = decision_intervals(&classifier, delta, range, h.grid)?;
            for iv in &di.intervals {
                t.push(vec![
                    case.name.clone(),
                    fmt_float(delta),
                    fmt_float(iv.lo),
                    fmt_float(iv.hi),
                    decision_name(iv.decision).to_string(),
                ]);
            }
            let gray: Vec<[f64; 2]> = di.of(Decision::Gray).map(|i| [i.lo, i.hi]).collect();
            per_delta.push(json!({
                "delta": delta,
                "gray_intervals": gray,
                "gray_fraction": di.length(Decision::Gray) / (range.1 - range.0),
            }));
        }
        cases.push(json!({
            "name": case.name,
            "estimate": case.estimate,
            "range": [range.0, range.1],
            "mode1": { "mean": classifier.mode1.mean()[0], "variance": classifier.mode1.variance(0) },
            "mode2": { "mean": classifier.mode2.mean()[0], "variance": classifier.mode2.variance(0) },
            "levels": per_delta,
        }));
    }
    Ok(vec![
        OutputFile::text("intervals.csv", t.to_text()),
        summary_file(
            ExperimentKind::HmmIntervals,
            cfg,
            json!({
                "grid": h.grid,
                "expectation": "overlapping modes leave the whole range gray at small delta",
                "cases": cases,
            }),
        )?,
    ])
}

fn malformed_csv(report: &IngestReport) -> String {
    let mut t = CsvTable::new(["line", "reason"]);
    for m in &report.malformed {
        t.push(vec![m.line.to_string(), m.reason.clone()]);
    }
    t.to_text()
}

fn ingest_summary(report: &IngestReport) -> Value {
    json!({
        "rows": report.rows,
        "scenarios": report.dataset.len(),
        "malformed_rows": report.malformed.len(),
        "partial_segments_dropped": report.partial_dropped,
    })
}

fn ingest(cfg: &Config) -> Result<Vec<OutputFile>> {
    let path = cfg.data.input.as_deref().expect("validated input path");
    let report = ingest_scenarios(path, &cfg.schema)?;
    Ok(vec![
        OutputFile::text("scenarios.csv", write_scenarios(&report.dataset, &cfg.schema)?),
        OutputFile::text("malformed.csv", malformed_csv(&report)),
        summary_file(ExperimentKind::Ingest, cfg, json!({ "ingest": ingest_summary(&report) }))?,
    ])
}

/// Displacement actions after `split_secs`, over `horizon` seconds (the
/// whole remaining action when `None`).
pub fn dataset_actions(data: &Dataset, split_secs: f64, horizon: Option<f64>) -> Result<ActionSet> {
    let actions: Vec<Trajectory> = data
        .scenarios()
        .iter()
        .map(|s| split_state_action(s, split_secs).map(|sa| sa.action))
        .collect::<Result<_>>()?;
    let first = actions
        .first()
        .ok_or_else(|| Error::Data("no scenarios to build actions from".into()))?;
    ActionSet::displacements(&actions, horizon.unwrap_or(first.duration()))
}

fn ingest_audit(cfg: &Config) -> Result<Vec<OutputFile>> {
    let a = &cfg.audit;
    let train = ingest_scenarios(cfg.data.train.as_deref().expect("validated"), &cfg.schema)?;
    let test = ingest_scenarios(cfg.data.test.as_deref().expect("validated"), &cfg.schema)?;
    let pruned = crate::trajectory::prune_training_set(&test.dataset, &train.dataset, &cfg.pruning)?;
    if pruned.is_empty() {
        return Err(Error::Data(
            "no training scenario is equivalent to any test scenario; loosen [pruning]".into(),
        ));
    }
    let horizon = cfg.calibration.window_secs;
    let train_a = dataset_actions(&pruned, a.split_secs, horizon)?;
    let test_a = dataset_actions(&test.dataset, a.split_secs, horizon)?;
    let grid = cfg.calibration.grid()?;
    let mut files = Vec::new();
    let mut curves = Vec::new();
    for &m in &a.models {
        let (model, grid) = match m {
            ModelKind::Gaussian | ModelKind::NoisyRational => (
                FittedModel::Gaussian(fit_stepwise_gaussian(&train_a, gaussian_class(m)?, cfg.calibration.region_mode)?),
                grid.clone(),
            ),
            ModelKind::Gmm => {
                let mc = mc_samples(cfg, a.gmm_mc_samples, cfg.gmm.quick_mc_samples);
                let grid = grid.truncated(MIN_MC_TAIL / mc as f64)?;
                let fit = fit_stepwise_gmm(&train_a, a.gmm_components, &cfg.gmm.em(), grid.deltas(), mc, cfg.rng().child(FIT))?;
                (FittedModel::Gmm(fit), grid)
            }
            ModelKind::QuantileTube => fit_tube_model(&train_a, &grid)?,
            ModelKind::ScenarioHull => (FittedModel::ScenarioHull(fit_scenario_hull(&train_a, Window::Full)?), grid.clone()),
        };
        let curve = calibration_curve(&model, &test_a, &grid, Window::Full)?;
        let name = format!("curve_{}.csv", m.name());
        let mut s = curve_summary(cfg, &name, &curve)?;
        s["model"] = json!(m.name());
        curves.push(s);
        files.push(OutputFile::json(format!("model_{}.json", m.name()), &ModelDocument::new(model, train_a.len(), Some(cfg.rng())))?);
        files.push(OutputFile::text(name, curve.to_csv()));
    }
    files.push(summary_file(
        ExperimentKind::IngestAudit,
        cfg,
        json!({
            "train": ingest_summary(&train),
            "test": ingest_summary(&test),
            "n_train_pruned": pruned.len(),
            "action_steps": train_a.steps(),
            "expectation": "Gaussian-family fits grow overconfident at small delta on recorded driving data",
            "curves": curves,
        }),
    )?);
    Ok(files)
}

/// Per-step center and axis-aligned boundary offsets `level · σ` of a
/// per-step Gaussian fit, one row per (level, step). Columns: level, step,
/// time, center_x, center_y, offset_x, offset_y.
pub fn export_tube(model: &FittedModel, levels: &[f64], step_times: &[f64]) -> Result<String> {
    let g = match model {
        FittedModel::Gaussian(g) if g.mode == RegionMode::PerStep => g,
        other => {
            return Err(Error::Unsupported(format!(
                "tube export needs a per-step Gaussian-family model, got {}",
                other.class_name()
            )))
        }
    };
    if step_times.len() != g.steps {
        return Err(Error::Schema(format!(
            "{} step times for a {}-step model",
            step_times.len(),
            g.steps
        )));
    }
    let mut t = CsvTable::new(["level", "step", "time", "center_x", "center_y", "offset_x", "offset_y"]);
    for &level in levels {
        if !(level >= 0.0) {
            return Err(Error::range("level", level, "must be >= 0"));
        }
        for (s, (m, &time)) in g.models.iter().zip(step_times).enumerate() {
            let c = m.mean();
            t.push(vec![
                fmt_float(level),
                s.to_string(),
                fmt_float(time),
                fmt_float(c[0]),
                fmt_float(c[1]),
                fmt_float(level * m.variance(0).sqrt()),
                fmt_float(level * m.variance(1).sqrt()),
            ]);
        }
    }
    Ok(t.to_text())
}

fn export_tube_run(cfg: &Config) -> Result<Vec<OutputFile>> {
    let e = &cfg.export;
    let report = ingest_scenarios(cfg.data.train.as_deref().expect("validated"), &cfg.schema)?;
    let data = match e.mode_label {
        Some(l) => report.dataset.with_mode(l),
        None => report.dataset.clone(),
    };
    if data.is_empty() {
        return Err(Error::Data(format!("no scenarios with mode label {:?}", e.mode_label)));
    }
    let actions = dataset_actions(&data, e.split_secs, e.horizon_secs)?;
    let model = FittedModel::Gaussian(fit_stepwise_gaussian(&actions, GaussianClass::Gaussian, RegionMode::PerStep)?);
    let times = actions
        .step_times()
        .unwrap_or_else(|| (1..=actions.steps()).map(|t| t as f64).collect());
    let csv = export_tube(&model, &e.levels, &times)?;
    Ok(vec![
        OutputFile::text("tube.csv", csv),
        OutputFile::json("model.json", &ModelDocument::new(model, actions.len(), None))?,
        summary_file(
            ExperimentKind::ExportTube,
            cfg,
            json!({
                "ingest": ingest_summary(&report),
                "mode_label": e.mode_label,
                "n_train": actions.len(),
                "steps": actions.steps(),
                "levels": e.levels,
            }),
        )?,
    ])
}
