//! Property checks shared by the proptest suite and the acceptance runner.
//! Each check takes a generated case and returns a `TestCaseError` on the
//! first violation; oracles here are written independently of the library.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use statrs::distribution::{Binomial, DiscreteCDF};

use tailcal::actions::{ActionSet, Window};
use tailcal::calibration::{calibration_curve, delta_min, scaling_fit, CalibrationCurve, CurveRecord, DeltaGrid};
use tailcal::geometry::ConvexPolygon;
use tailcal::models::tube::removal_sequence;
use tailcal::models::{
    fit_gaussian, fit_gmm, fit_quantile_tubes, fit_scenario_hull, fit_stepwise_gaussian, gaussian_region_radius,
    mode_posterior, EmConfig, FittedModel, GaussianClass, GaussianModel, QuantileTubeSet, RegionMode,
    TwoModeClassifier,
};
use tailcal::rng::RngSpec;
use tailcal::synth::gen_gaussian_2d;
use tailcal::trajectory::{
    equivalent_scenarios, prune_training_set, split_state_action, Dataset, EnvironmentContext, Point,
    PruningConfig, Role, Scenario, ScenarioId, Trajectory,
};

pub const RATE: f64 = 5.0;

fn fail(msg: String) -> Result<(), TestCaseError> {
    Err(TestCaseError::fail(msg))
}

/// Runs `check` over `cases` inputs from a fixed-seed runner.
pub fn run<S, F>(cases: u32, strategy: S, check: F) -> Result<(), String>
where
    S: Strategy,
    F: Fn(S::Value) -> Result<(), TestCaseError>,
{
    let config = PtConfig {
        cases,
        failure_persistence: None,
        ..PtConfig::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, check).map_err(|e| e.to_string())
}

// ---- scenarios ----------------------------------------------------------

/// Raw scenario material: per-sample lateral offsets on a straight path and
/// one optional context feature.
pub type RawScenario = (Vec<f64>, Option<f64>);

pub fn raw_scenarios(max: usize) -> impl Strategy<Value = Vec<RawScenario>> {
    // 3 s at 5 Hz: 16 samples, prefix of 2 s is 11 samples.
    prop::collection::vec(
        (
            prop::collection::vec(-1.5f64..1.5, 16),
            prop::option::weighted(0.8, -3.0f64..3.0),
        ),
        1..max,
    )
}

pub fn build(role: Role, source: &str, raw: &[RawScenario]) -> Dataset {
    let source: Arc<str> = Arc::from(source);
    let scenarios = raw
        .iter()
        .enumerate()
        .map(|(i, (ys, ctx))| Scenario {
            id: ScenarioId {
                source: source.clone(),
                index: i,
            },
            trajectory: Trajectory::new(
                ys.iter().enumerate().map(|(k, y)| [k as f64 * 0.5, *y]).collect(),
                RATE,
            )
            .unwrap(),
            context: EnvironmentContext::new(vec![*ctx]),
            mode_label: None,
        })
        .collect();
    Dataset::new(role, scenarios).unwrap()
}

fn ids(d: &Dataset) -> BTreeSet<usize> {
    d.scenarios().iter().map(|s| s.id.index).collect()
}

/// Independent equivalence test: strict ∞-norm closeness over the first
/// `prefix_secs` of both trajectories, absent features only match absent.
fn oracle_equivalent(a: &Scenario, b: &Scenario, cfg: &PruningConfig) -> bool {
    let n = (cfg.prefix_secs * RATE).round() as usize + 1;
    let (pa, pb) = (a.trajectory.positions(), b.trajectory.positions());
    if pa.len() < n || pb.len() < n {
        return false;
    }
    let mut d = 0.0f64;
    for k in 0..n {
        d = d.max((pa[k][0] - pb[k][0]).abs()).max((pa[k][1] - pb[k][1]).abs());
    }
    let mut e = 0.0f64;
    for (x, y) in a.context.features.iter().zip(&b.context.features) {
        e = e.max(match (x, y) {
            (Some(x), Some(y)) => (x - y).abs(),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        });
    }
    d < cfg.epsilon_traj && e < cfg.epsilon_env
}

pub fn pruning_case() -> impl Strategy<Value = (Vec<RawScenario>, Vec<RawScenario>, f64, f64, f64, f64)> {
    (raw_scenarios(6), raw_scenarios(25), 0.05f64..2.0, 0.0f64..1.0, 0.05f64..3.0, 0.0f64..2.0)
}

/// Enlarging either threshold never drops a scenario.
pub fn check_pruning_monotone(
    (test, train, e, de, env, denv): (Vec<RawScenario>, Vec<RawScenario>, f64, f64, f64, f64),
) -> Result<(), TestCaseError> {
    let test = build(Role::Test, "test", &test);
    let train = build(Role::Train, "train", &train);
    let small = PruningConfig {
        epsilon_traj: e,
        epsilon_env: env,
        ..PruningConfig::default()
    };
    let large = PruningConfig {
        epsilon_traj: e + de,
        epsilon_env: env + denv,
        ..small
    };
    let a = ids(&prune_training_set(&test, &train, &small).unwrap());
    let b = ids(&prune_training_set(&test, &train, &large).unwrap());
    if !a.is_subset(&b) {
        return fail(format!("{a:?} not within {b:?}"));
    }
    Ok(())
}

/// The pruned set is exactly the training scenarios matching some test
/// scenario under the oracle, in training order.
pub fn check_pruning_oracle(
    (test, train, e, _, env, _): (Vec<RawScenario>, Vec<RawScenario>, f64, f64, f64, f64),
) -> Result<(), TestCaseError> {
    let test = build(Role::Test, "test", &test);
    let train = build(Role::Train, "train", &train);
    let cfg = PruningConfig {
        epsilon_traj: e,
        epsilon_env: env,
        ..PruningConfig::default()
    };
    let got: Vec<usize> = prune_training_set(&test, &train, &cfg)
        .unwrap()
        .scenarios()
        .iter()
        .map(|s| s.id.index)
        .collect();
    let want: Vec<usize> = train
        .scenarios()
        .iter()
        .filter(|s| test.scenarios().iter().any(|t| oracle_equivalent(t, s, &cfg)))
        .map(|s| s.id.index)
        .collect();
    if got != want {
        return fail(format!("pruned {got:?}, oracle {want:?}"));
    }
    Ok(())
}

pub fn permutation_case() -> impl Strategy<Value = (Vec<RawScenario>, Vec<usize>, f64, f64)> {
    raw_scenarios(25).prop_flat_map(|train| {
        let n = train.len();
        (
            Just(train),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            0.1f64..2.0,
            0.1f64..3.0,
        )
    })
}

/// Reordering the training set leaves the equivalent set unchanged.
pub fn check_permutation_invariant(
    (train, perm, e, env): (Vec<RawScenario>, Vec<usize>, f64, f64),
) -> Result<(), TestCaseError> {
    let cfg = PruningConfig {
        epsilon_traj: e,
        epsilon_env: env,
        ..PruningConfig::default()
    };
    let data = build(Role::Train, "train", &train);
    let mut shuffled: Vec<Scenario> = perm.iter().map(|&i| data.scenarios()[i].clone()).collect();
    shuffled.reverse();
    let shuffled = Dataset::new(Role::Train, shuffled).unwrap();
    let probe = &data.scenarios()[0];
    let a = ids(&equivalent_scenarios(probe, &data, &cfg).unwrap());
    let b = ids(&equivalent_scenarios(probe, &shuffled, &cfg).unwrap());
    if a != b {
        return fail(format!("{a:?} vs {b:?}"));
    }
    Ok(())
}

pub fn split_case() -> impl Strategy<Value = (Vec<RawScenario>, usize)> {
    (raw_scenarios(3), 1usize..15)
}

/// Prefix and action share the split sample and rejoin bit-exactly.
pub fn check_split_round_trip((raw, k): (Vec<RawScenario>, usize)) -> Result<(), TestCaseError> {
    let data = build(Role::Train, "s", &raw);
    for s in data.scenarios() {
        let sa = split_state_action(s, k as f64 / RATE).unwrap();
        if sa.rejoin() != s.trajectory {
            return fail("rejoin differs from source".into());
        }
        if sa.prefix.positions().last() != sa.action.positions().first() {
            return fail("split sample not shared".into());
        }
    }
    Ok(())
}

// ---- geometry and tubes -------------------------------------------------

pub fn cloud(max: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(
        prop_oneof![
            (-10.0f64..10.0, -10.0f64..10.0).prop_map(|(x, y)| [x, y]),
            // Coarse lattice points give duplicates and collinear runs.
            (-3i32..3, -3i32..3).prop_map(|(x, y)| [x as f64, y as f64]),
        ],
        3..max,
    )
}

/// Jarvis march over distinct points, counter-clockwise, collinear points
/// excluded.
pub fn gift_wrap(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point, a: Point, b: Point| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let d2 = |a: Point, b: Point| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let start = pts[0];
    let mut hull = vec![start];
    let mut cur = start;
    loop {
        let mut next = if pts[0] == cur { pts[1] } else { pts[0] };
        for &p in &pts {
            if p == cur {
                continue;
            }
            let c = cross(cur, next, p);
            if c < 0.0 || (c == 0.0 && d2(cur, p) > d2(cur, next)) {
                next = p;
            }
        }
        if next == start {
            break;
        }
        hull.push(next);
        cur = next;
        if hull.len() > pts.len() {
            break;
        }
    }
    if hull.len() == 2 && cross(hull[0], hull[1], start) == 0.0 {
        return hull;
    }
    hull
}

/// The library hull has the oracle's vertex set.
pub fn check_hull_oracle(points: Vec<Point>) -> Result<(), TestCaseError> {
    let ours = ConvexPolygon::hull_of(&points);
    let mut a: Vec<Point> = ours.vertices().to_vec();
    let mut b = gift_wrap(&points);
    if b.len() < 3 {
        // Degenerate input: only the extreme points are required.
        return Ok(());
    }
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    if a != b {
        return fail(format!("hull {a:?}, oracle {b:?}"));
    }
    if !points.iter().all(|&p| ours.contains(p)) {
        return fail("hull misses an input point".into());
    }
    Ok(())
}

pub fn tube_case() -> impl Strategy<Value = (Vec<Point>, usize, f64, f64)> {
    (1usize..4).prop_flat_map(|steps| {
        (
            prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0).prop_map(|(x, y)| [x, y]), steps * 8..steps * 40)
                .prop_map(move |mut v| {
                    v.truncate(v.len() / steps * steps);
                    v
                }),
            Just(steps),
            0.0f64..0.5,
            0.0f64..0.5,
        )
    })
}

/// Smaller δ gives a tube containing the larger-δ tube; the scenario hull
/// contains both; tubes follow a prefix of one removal sequence.
pub fn check_tube_nesting((data, steps, a, b): (Vec<Point>, usize, f64, f64)) -> Result<(), TestCaseError> {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if lo == hi || lo == 0.0 {
        return Ok(());
    }
    let set = ActionSet::new(steps, data).unwrap();
    let n = set.len();
    if n - ((hi * n as f64 + 1e-9).floor() as usize) < 3 {
        return Ok(());
    }
    let tubes = fit_quantile_tubes(&set, &[hi, lo], Window::Full).unwrap();
    let hull = fit_scenario_hull(&set, Window::Full).unwrap();
    let seq = removal_sequence(&set, n - tubes[0].coverage, Window::Full).unwrap();
    for t in 0..steps {
        let outer = &tubes[1].cross_sections[t];
        let inner = &tubes[0].cross_sections[t];
        if !outer.contains_polygon(inner) {
            return fail(format!("step {t}: tube({hi}) not inside tube({lo})"));
        }
        if !hull.cross_sections[t].contains_polygon(outer) {
            return fail(format!("step {t}: hull does not contain tube({lo})"));
        }
    }
    // Kept actions lie in the tube; the lower-δ removals are a prefix.
    let removed_hi: BTreeSet<usize> = seq.iter().copied().collect();
    let removed_lo: BTreeSet<usize> = seq[..n - tubes[1].coverage].iter().copied().collect();
    if !removed_lo.is_subset(&removed_hi) {
        return fail("removal sets not nested".into());
    }
    for i in (0..n).filter(|i| !removed_hi.contains(i)) {
        if !tubes[0].contains(set.action(i)) {
            return fail(format!("kept action {i} outside tube({hi})"));
        }
    }
    Ok(())
}

// ---- Gaussian family and mixtures ---------------------------------------

pub fn check_radius_decreasing((a, b): (f64, f64)) -> Result<(), TestCaseError> {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if lo == hi {
        return Ok(());
    }
    let g = GaussianModel::standard(2);
    let (r_lo, r_hi) = (gaussian_region_radius(&g, lo).unwrap(), gaussian_region_radius(&g, hi).unwrap());
    if !(r_lo > r_hi) {
        return fail(format!("r({lo}) = {r_lo} <= r({hi}) = {r_hi}"));
    }
    Ok(())
}

pub fn em_case() -> impl Strategy<Value = (Vec<Point>, usize, u64)> {
    (prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0).prop_map(|(x, y)| [x, y]), 30..120), 1usize..4, any::<u64>())
}

/// Log-likelihood never decreases across EM iterations; K=1 reproduces the
/// Gaussian MLE.
pub fn check_em((points, k, seed): (Vec<Point>, usize, u64)) -> Result<(), TestCaseError> {
    let cfg = EmConfig {
        restarts: 2,
        max_iter: 200,
        ..EmConfig::default()
    };
    let m = match fit_gmm(&points, k, &cfg, RngSpec::new(seed, 0)) {
        Ok(m) => m,
        Err(e) if e.exit_code() == 4 => return Ok(()),
        Err(e) => return fail(format!("{e}")),
    };
    for w in m.diagnostics.trace.windows(2) {
        if w[1] < w[0] - 1e-9 * w[0].abs().max(1.0) {
            return fail(format!("log-likelihood fell from {} to {}", w[0], w[1]));
        }
    }
    if k == 1 && !m.diagnostics.floored {
        let g = fit_gaussian(&points).unwrap();
        let c = &m.components[0].gaussian;
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-10 * (1.0 + y.abs()));
        if !close(c.mean(), g.mean()) || !close(c.cov(), g.cov()) {
            return fail("K=1 mixture differs from the Gaussian fit".into());
        }
    }
    Ok(())
}

pub fn posterior_case() -> impl Strategy<Value = (f64, f64, f64)> {
    (-5.0f64..5.0, 0.1f64..5.0, 0.1f64..3.0)
}

/// Equal-σ modes: log-odds is the closed-form affine function of x.
pub fn check_posterior_affine((m1, gap, sigma): (f64, f64, f64)) -> Result<(), TestCaseError> {
    let m2 = m1 + gap;
    let v = sigma * sigma;
    let c = TwoModeClassifier::new(
        GaussianModel::new(vec![m1], vec![v]).unwrap(),
        GaussianModel::new(vec![m2], vec![v]).unwrap(),
    )
    .unwrap();
    for i in 0..1000 {
        let x = m1 - 4.0 * sigma + (gap + 8.0 * sigma) * i as f64 / 999.0;
        let want = (m2 - m1) / v * x + (m1 * m1 - m2 * m2) / (2.0 * v);
        let got = c.log_odds(x);
        if (got - want).abs() > 1e-9 * (1.0 + want.abs()) {
            return fail(format!("log-odds at {x}: {got} vs {want}"));
        }
        let (p1, p2) = mode_posterior(&c, x);
        let q2 = 1.0 / (1.0 + (-want).exp());
        if (p2 - q2).abs() > 1e-9 || (p1 + p2 - 1.0).abs() > 1e-12 {
            return fail(format!("posterior at {x}: {p2} vs {q2}"));
        }
    }
    Ok(())
}

// ---- calibration --------------------------------------------------------

pub fn curve_case() -> impl Strategy<Value = (u64, usize, bool)> {
    (any::<u64>(), 50usize..400, any::<bool>())
}

/// Observed counts never increase with δ for nested regions.
pub fn check_counts_monotone((seed, n_train, tube): (u64, usize, bool)) -> Result<(), TestCaseError> {
    let rng = RngSpec::new(seed, 0);
    let cov = [1.0, 0.4, 0.4, 2.0];
    let train = ActionSet::from_points(gen_gaussian_2d(n_train, [0.0, 0.0], cov, rng.child(1)).unwrap());
    let test = ActionSet::from_points(gen_gaussian_2d(5000, [0.0, 0.0], cov, rng.child(2)).unwrap());
    let grid = DeltaGrid::half_decades(1, 8).unwrap();
    let model = if tube {
        let deltas: Vec<f64> = grid.deltas().iter().copied().filter(|d| d * (n_train as f64) < n_train as f64 - 3.0).collect();
        FittedModel::QuantileTube(QuantileTubeSet {
            tubes: fit_quantile_tubes(&train, &deltas, Window::Full).unwrap(),
        })
    } else {
        FittedModel::Gaussian(fit_stepwise_gaussian(&train, GaussianClass::Gaussian, RegionMode::PerStep).unwrap())
    };
    let c = calibration_curve(&model, &test, &grid, Window::Full).unwrap();
    for w in c.records.windows(2) {
        // Grid is decreasing in δ; smaller δ means a larger region.
        if w[1].observed_count > w[0].observed_count {
            return fail(format!("count falls with δ: {:?} then {:?}", w[0], w[1]));
        }
    }
    Ok(())
}

pub fn records_case() -> impl Strategy<Value = (Vec<(u32, usize)>, usize)> {
    (prop::collection::vec((0u32..2000, 0usize..100_000), 1..12), 1usize..1_000_000)
}

fn curve_from(rows: &[(u32, usize)], n: usize) -> CalibrationCurve {
    let mut deltas: Vec<f64> = rows.iter().map(|(k, _)| 10f64.powf(-(*k as f64 + 1.0) / 250.0)).collect();
    deltas.sort_by(|a, b| b.total_cmp(a));
    deltas.dedup();
    CalibrationCurve {
        n_test: n,
        records: deltas
            .iter()
            .zip(rows)
            .map(|(&d, &(_, o))| CurveRecord::new(d, o.min(n), n))
            .collect(),
    }
}

/// CSV text reproduces the curve exactly.
pub fn check_csv_round_trip((rows, n): (Vec<(u32, usize)>, usize)) -> Result<(), TestCaseError> {
    let c = curve_from(&rows, n);
    let back = CalibrationCurve::from_csv(&c.to_csv()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    if back != c {
        return fail("curve changed across CSV".into());
    }
    Ok(())
}

/// Larger η never gives a larger δ_min.
pub fn check_delta_min_antitone(((rows, n), a, b): ((Vec<(u32, usize)>, usize), f64, f64)) -> Result<(), TestCaseError> {
    let c = curve_from(&rows, n);
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let d_lo = delta_min(&c, lo).unwrap().delta_min;
    let d_hi = delta_min(&c, hi).unwrap().delta_min;
    let ok = match (d_lo, d_hi) {
        (Some(x), Some(y)) => y <= x,
        (Some(_), None) => false,
        _ => true,
    };
    if !ok {
        return fail(format!("η {lo} -> {d_lo:?}, η {hi} -> {d_hi:?}"));
    }
    Ok(())
}

pub fn antitone_case() -> impl Strategy<Value = ((Vec<(u32, usize)>, usize), f64, f64)> {
    (records_case(), 0.01f64..2.0, 0.01f64..2.0)
}

pub fn line_case() -> impl Strategy<Value = (f64, f64, Vec<f64>)> {
    (-3.0f64..3.0, -5.0f64..5.0, prop::collection::btree_set(0u32..80, 3..10).prop_map(|s| s.into_iter().map(|k| 1.0 + k as f64 / 10.0).collect()))
}

/// Points on a log-log line are fitted exactly.
pub fn check_scaling_exact((slope, intercept, logs): (f64, f64, Vec<f64>)) -> Result<(), TestCaseError> {
    let points: Vec<(f64, f64)> = logs.iter().map(|&x| (10f64.powf(x), 10f64.powf(intercept + slope * x))).collect();
    let f = scaling_fit(&points).unwrap();
    if (f.slope - slope).abs() > 1e-10 * (1.0 + slope.abs())
        || (f.intercept - intercept).abs() > 1e-10 * (1.0 + intercept.abs())
        || (f.r2 - 1.0).abs() > 1e-10
    {
        return fail(format!("fit {f:?} for slope {slope}, intercept {intercept}"));
    }
    Ok(())
}

/// Two-sided exact binomial p-value of `k` successes in `n` trials at `p`.
pub fn binomial_two_sided(k: u64, n: u64, p: f64) -> f64 {
    let b = Binomial::new(p, n).unwrap();
    let lower = b.cdf(k);
    let upper = if k == 0 { 1.0 } else { b.sf(k - 1) };
    (2.0 * lower.min(upper)).min(1.0)
}

/// Per-δ binomial test at significance 1e-4 for every grid δ with at least
/// 100 expected violations, with test data drawn from the fitted model.
pub fn check_binomial_calibration(seed: u64, n_test: usize) -> Result<(), String> {
    let rng = RngSpec::new(seed, 7);
    let train = ActionSet::from_points(gen_gaussian_2d(2000, [1.0, -2.0], [2.0, 0.5, 0.5, 1.0], rng.child(1)).unwrap());
    let fit = fit_stepwise_gaussian(&train, GaussianClass::Gaussian, RegionMode::PerStep).unwrap();
    let g = &fit.models[0];
    let cov = g.cov();
    let test = gen_gaussian_2d(n_test, [g.mean()[0], g.mean()[1]], [cov[0], cov[1], cov[2], cov[3]], rng.child(2)).unwrap();
    let model = FittedModel::Gaussian(fit);
    let curve = calibration_curve(&model, &ActionSet::from_points(test), &DeltaGrid::standard(), Window::Full).unwrap();
    for r in curve.records.iter().filter(|r| r.expected_count >= 100.0) {
        let p = binomial_two_sided(r.observed_count as u64, n_test as u64, r.delta);
        if p < 1e-4 {
            return Err(format!("δ = {:e}: observed {} vs expected {}, p = {p:e}", r.delta, r.observed_count, r.expected_count));
        }
    }
    Ok(())
}

/// Inside-fraction of the fitted model's own samples at each δ lies within
/// the binomial band around 1-δ.
pub fn check_region_mass(seed: u64, n: usize) -> Result<(), String> {
    let g = GaussianModel::new(vec![0.5, -1.0], vec![1.5, -0.3, -0.3, 0.7]).unwrap();
    let pts = gen_gaussian_2d(n, [0.5, -1.0], [1.5, -0.3, -0.3, 0.7], RngSpec::new(seed, 3)).unwrap();
    for delta in [0.1, 0.01, 1e-3] {
        let r = gaussian_region_radius(&g, delta).unwrap();
        let outside = pts.iter().filter(|p| g.mahalanobis_sq(&p[..]) > r * r).count();
        let p = binomial_two_sided(outside as u64, n as u64, delta);
        if p < 1e-4 {
            return Err(format!("δ = {delta}: {outside} outside of {n}, p = {p:e}"));
        }
    }
    Ok(())
}
