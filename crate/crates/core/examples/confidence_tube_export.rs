//! Export per-step Gaussian confidence tubes at fixed sigma levels for
//! plotting, keyed by the action's time stamps.

use tailcal::experiment::{dataset_actions, export_tube};
use tailcal::models::{fit_stepwise_gaussian, FittedModel, GaussianClass, RegionMode};
use tailcal::rng::RngSpec;
use tailcal::synth::{gen_lane_trajectories, LaneConfig};

fn main() -> tailcal::error::Result<()> {
    let data = gen_lane_trajectories(500, 0.3, 25.0, &LaneConfig::default(), RngSpec::new(0, 1), "lanes")?;
    // Only the scenarios ending in the neighboring lane.
    let swerves = data.dataset.with_mode(1);
    let actions = dataset_actions(&swerves, 2.0, Some(4.0))?;
    let model = FittedModel::Gaussian(fit_stepwise_gaussian(&actions, GaussianClass::Gaussian, RegionMode::PerStep)?);
    let times = actions.step_times().expect("displacements carry time stamps");
    let csv = export_tube(&model, &[0.0, 1.0, 2.0, 5.0], &times)?;
    for line in csv.lines().take(5) {
        println!("{line}");
    }
    println!("... {} rows for {} swerving scenarios", csv.lines().count() - 1, swerves.len());
    Ok(())
}
