//! Violation counting, calibration curves, δ_min, data-scaling fits, and the
//! VC sample-size expression.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::{ActionSet, Window};
use crate::error::{Error, Result};
use crate::models::FittedModel;
use crate::report::{fmt_float, CsvTable};

/// Strictly decreasing safety thresholds in (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DeltaGrid(Vec<f64>);

impl DeltaGrid {
    pub fn new(deltas: Vec<f64>) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::Config("empty δ grid".into()));
        }
        for &d in &deltas {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::range("delta", d, "must lie in (0, 1)"));
            }
        }
        if deltas.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("δ grid must be strictly decreasing".into()));
        }
        Ok(Self(deltas))
    }

    /// `10^(-k/2)` for `k = k_min..=k_max`.
    pub fn half_decades(k_min: u32, k_max: u32) -> Result<Self> {
        Self::new((k_min..=k_max).map(|k| 10f64.powf(-(k as f64) / 2.0)).collect())
    }

    /// δ from 1e-1 down to 1e-8 in half-decade steps.
    pub fn standard() -> Self {
        Self::half_decades(2, 16).expect("valid default grid")
    }

    pub fn deltas(&self) -> &[f64] {
        &self.0
    }

    /// The grid restricted to δ no smaller than `min`.
    pub fn truncated(&self, min: f64) -> Result<Self> {
        Self::new(self.0.iter().copied().filter(|&d| d >= min).collect())
    }
}

impl TryFrom<Vec<f64>> for DeltaGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DeltaGrid> for Vec<f64> {
    fn from(g: DeltaGrid) -> Self {
        g.0
    }
}

fn window_len(model: &FittedModel, test: &ActionSet, window: Window) -> Result<usize> {
    let k = test.window_steps(window)?;
    match model.steps() {
        Some(s) if s == k => Ok(k),
        Some(s) => Err(Error::Schema(format!(
            "window covers {k} steps but the model was fitted on {s}"
        ))),
        None => Err(Error::Unsupported(format!(
            "{} has no δ-region to count violations against",
            model.class_name()
        ))),
    }
}

/// Test actions whose window leaves the model's 1-δ region. Each action
/// counts at most once. Returns `(observed, n_test)`.
pub fn count_violations(
    model: &FittedModel,
    test: &ActionSet,
    delta: f64,
    window: Window,
) -> Result<(usize, usize)> {
    let k = window_len(model, test, window)?;
    let region = model.region(delta)?;
    let observed = test
        .as_slice()
        .par_chunks(test.steps())
        .filter(|a| !region.contains(&a[..k]))
        .count();
    Ok((observed, test.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub delta: f64,
    pub expected_count: f64,
    pub observed_count: usize,
    /// Observed over expected violation proportion.
    pub ratio: f64,
    /// `-inf` exactly when nothing was observed.
    pub log10_ratio: f64,
}

impl CurveRecord {
    pub fn new(delta: f64, observed: usize, n_test: usize) -> Self {
        let expected = delta * n_test as f64;
        let ratio = observed as f64 / expected;
        let log10_ratio = if observed == 0 {
            f64::NEG_INFINITY
        } else {
            ratio.log10()
        };
        Self {
            delta,
            expected_count: expected,
            observed_count: observed,
            ratio,
            log10_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub n_test: usize,
    pub records: Vec<CurveRecord>,
}

pub const CURVE_COLUMNS: [&str; 5] = ["delta", "expected_count", "observed_count", "ratio", "log10_ratio"];

impl CalibrationCurve {
    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(CURVE_COLUMNS);
        for r in &self.records {
            t.push(vec![
                fmt_float(r.delta),
                fmt_float(r.expected_count),
                r.observed_count.to_string(),
                fmt_float(r.ratio),
                fmt_float(r.log10_ratio),
            ]);
        }
        t.to_text()
    }

    /// Parses [`Self::to_csv`] output. `n_test` is not stored in the CSV and
    /// is recovered from the first record's expected count.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != CURVE_COLUMNS {
            return Err(Error::Schema(format!("unexpected curve columns {header:?}")));
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let num = |j: usize| -> Result<f64> {
                row[j]
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("row {}: column {}: {e}", i + 2, CURVE_COLUMNS[j])))
            };
            records.push(CurveRecord {
                delta: num(0)?,
                expected_count: num(1)?,
                observed_count: row[2]
                    .parse()
                    .map_err(|e| Error::Data(format!("row {}: observed_count: {e}", i + 2)))?,
                ratio: num(3)?,
                log10_ratio: num(4)?,
            });
        }
        let n_test = records
            .first()
            .map(|r| (r.expected_count / r.delta).round() as usize)
            .unwrap_or(0);
        Ok(Self { n_test, records })
    }
}

/// One violation count per grid δ. Gaussian-family and mixture models score
/// every test action once and reuse the scores across the grid.
pub fn calibration_curve(
    model: &FittedModel,
    test: &ActionSet,
    grid: &DeltaGrid,
    window: Window,
) -> Result<CalibrationCurve> {
    let k = window_len(model, test, window)?;
    let n = test.len();
    if n == 0 {
        return Err(Error::Data("empty test set".into()));
    }
    let observed: Vec<usize> = if model.score(&test.action(0)[..k]).is_some() {
        let scores: Vec<f64> = test
            .as_slice()
            .par_chunks(test.steps())
            .map(|a| model.score(&a[..k]).expect("score model"))
            .collect();
        let mut out = Vec::with_capacity(grid.deltas().len());
        for &d in grid.deltas() {
            let region = model.region(d)?;
            let crate::models::Region::Score { threshold, .. } = region else {
                unreachable!("score models have score regions")
            };
            out.push(scores.par_iter().filter(|&&s| !(s <= threshold)).count());
        }
        out
    } else if let FittedModel::Gmm(g) = model {
        let dens: Vec<f64> = test
            .as_slice()
            .par_chunks(test.steps())
            .flat_map_iter(|a| g.models.iter().zip(&a[..k]).map(|(m, p)| m.log_density(p)))
            .collect();
        let mut out = Vec::with_capacity(grid.deltas().len());
        for &d in grid.deltas() {
            let crate::models::Region::Gmm { log_thresholds, .. } = model.region(d)? else {
                unreachable!("mixture models have mixture regions")
            };
            out.push(
                dens.par_chunks(k)
                    .filter(|ld| !ld.iter().zip(log_thresholds).all(|(l, t)| l >= t))
                    .count(),
            );
        }
        out
    } else {
        grid.deltas()
            .iter()
            .map(|&d| count_violations(model, test, d, window).map(|(o, _)| o))
            .collect::<Result<_>>()?
    };
    Ok(CalibrationCurve {
        n_test: n,
        records: grid
            .deltas()
            .iter()
            .zip(observed)
            .map(|(&d, o)| CurveRecord::new(d, o, n))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMinRule {
    /// Smallest δ such that every grid δ' ≥ δ is accurate.
    #[default]
    MonotonePrefix,
    /// Smallest accurate grid δ, regardless of failures above it.
    RawMin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaMinResult {
    pub delta_min: Option<f64>,
    pub eta: f64,
    pub rule: DeltaMinRule,
    /// `(δ, accurate)` for every record, in curve order.
    pub accurate: Vec<(f64, bool)>,
}

/// A record is accurate when something was observed and
/// `|log10(expected / observed)| <= eta`.
pub fn is_accurate(r: &CurveRecord, eta: f64) -> bool {
    r.observed_count >= 1 && r.log10_ratio.abs() <= eta
}

pub fn delta_min(curve: &CalibrationCurve, eta: f64) -> Result<DeltaMinResult> {
    delta_min_with(curve, eta, DeltaMinRule::MonotonePrefix)
}

pub fn delta_min_with(curve: &CalibrationCurve, eta: f64, rule: DeltaMinRule) -> Result<DeltaMinResult> {
    if !(eta > 0.0) {
        return Err(Error::range("eta", eta, "must be > 0"));
    }
    let accurate: Vec<(f64, bool)> = curve
        .records
        .iter()
        .map(|r| (r.delta, is_accurate(r, eta)))
        .collect();
    let mut by_delta = accurate.clone();
    by_delta.sort_by(|a, b| b.0.total_cmp(&a.0));
    let delta_min = match rule {
        DeltaMinRule::MonotonePrefix => by_delta
            .iter()
            .take_while(|(_, ok)| *ok)
            .last()
            .map(|(d, _)| *d),
        DeltaMinRule::RawMin => by_delta.iter().filter(|(_, ok)| *ok).last().map(|(d, _)| *d),
    };
    Ok(DeltaMinResult {
        delta_min,
        eta,
        rule,
        accurate,
    })
}

/// Least-squares line through `(log10 N, log10 δ_min)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl ScalingFit {
    /// Training-set size at which the fitted line reaches `delta_target`.
    pub fn extrapolate(&self, delta_target: f64) -> Result<f64> {
        if !(delta_target > 0.0) {
            return Err(Error::range("delta_target", delta_target, "must be > 0"));
        }
        if self.slope == 0.0 {
            return Err(Error::Degenerate("flat scaling fit cannot be inverted".into()));
        }
        Ok(10f64.powf((delta_target.log10() - self.intercept) / self.slope))
    }

    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(["n_train", "delta_min"]);
        for &(n, d) in &self.points {
            t.push(vec![fmt_float(n), fmt_float(d)]);
        }
        t.to_text()
    }
}

pub fn scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::range("points", points.len() as f64, "need at least 3 (N, δ_min) pairs"));
    }
    for &(n, d) in points {
        if !(n > 0.0) || !(d > 0.0) {
            return Err(Error::range("scaling point", if n > 0.0 { d } else { n }, "must be positive"));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all training sizes are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(ScalingFit {
        points: points.to_vec(),
        slope,
        intercept,
        r2,
    })
}

/// Inputs to the VC sample-size expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VcBoundQuery {
    pub delta: f64,
    pub vcdim: f64,
    pub c1: f64,
    pub c2: f64,
}

impl VcBoundQuery {
    pub fn new(delta: f64, vcdim: f64) -> Self {
        Self {
            delta,
            vcdim,
            c1: 1.0,
            c2: 1.0,
        }
    }
}

/// `c1·(1/δ)·ln(1/δ) + c2·VC/δ`: the order of the training-set size needed
/// for error probability δ. With unit constants this is a comparator, not a
/// certified bound.
pub fn vc_lower_bound(q: &VcBoundQuery) -> Result<f64> {
    if !(q.delta > 0.0 && q.delta < 1.0) {
        return Err(Error::range("delta", q.delta, "must lie in (0, 1)"));
    }
    if !(q.vcdim >= 1.0) {
        return Err(Error::range("vcdim", q.vcdim, "must be >= 1"));
    }
    let inv = 1.0 / q.delta;
    Ok(q.c1 * inv * inv.ln() + q.c2 * q.vcdim * inv)
}
