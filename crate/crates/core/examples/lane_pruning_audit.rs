//! Real-data style pipeline on synthetic lane changes: write scenarios to CSV,
//! ingest them, keep only training scenarios equivalent to some test
//! scenario, then audit a Gaussian over the 2 s replanning window.

use tailcal::actions::Window;
use tailcal::calibration::{calibration_curve, DeltaGrid};
use tailcal::experiment::dataset_actions;
use tailcal::ingest::{ingest_reader, write_scenarios, IngestSchema};
use tailcal::models::{fit_stepwise_gaussian, FittedModel, GaussianClass, RegionMode};
use tailcal::rng::RngSpec;
use tailcal::synth::{gen_lane_trajectories, LaneConfig};
use tailcal::trajectory::{prune_training_set, PruningConfig};

fn main() -> tailcal::error::Result<()> {
    let schema = IngestSchema {
        features: vec!["speed".into()],
        mode_column: Some("lane".into()),
        sample_rate: 25.0,
        ..IngestSchema::default()
    };
    let lane = LaneConfig::default();
    let mut sets = Vec::new();
    for (name, n, stream) in [("train", 2000, 1), ("test", 300, 2)] {
        let generated = gen_lane_trajectories(n, 0.2, 25.0, &lane, RngSpec::new(0, stream), name)?;
        let csv = write_scenarios(&generated.dataset, &schema)?;
        let report = ingest_reader(csv.as_bytes(), name, &schema)?;
        println!("{name}: {} rows, {} scenarios, {} malformed", report.rows, report.dataset.len(), report.malformed.len());
        sets.push(report.dataset);
    }
    let (train, test) = (&sets[0], &sets[1]);

    let tight = PruningConfig { epsilon_traj: 0.3, epsilon_env: 0.2, ..PruningConfig::default() };
    for cfg in [tight, PruningConfig::default()] {
        let kept = prune_training_set(test, train, &cfg)?.len();
        println!("ε = {}, ε_env = {}: kept {kept} of {} training scenarios", cfg.epsilon_traj, cfg.epsilon_env, train.len());
    }
    let pruned = prune_training_set(test, train, &PruningConfig::default())?;

    let horizon = Some(2.0);
    let model = FittedModel::Gaussian(fit_stepwise_gaussian(
        &dataset_actions(&pruned, 2.0, horizon)?,
        GaussianClass::Gaussian,
        RegionMode::PerStep,
    )?);
    let grid = DeltaGrid::new(vec![1e-1, 1e-2, 1e-3])?;
    let curve = calibration_curve(&model, &dataset_actions(test, 2.0, horizon)?, &grid, Window::Full)?;
    // Per-step regions: an action violates if any step leaves its ellipse.
    for r in &curve.records {
        println!("δ = {:e}: {} of {} test actions leave the region (ratio {:.2})", r.delta, r.observed_count, curve.n_test, r.ratio);
    }
    Ok(())
}
