//! Quantile tubes lose accuracy below a δ set by the training size. Fitting
//! log δ_min against log N gives the data needed for a target δ.

use tailcal::actions::{ActionSet, Window};
use tailcal::calibration::{calibration_curve, delta_min, scaling_fit, DeltaGrid};
use tailcal::models::{fit_quantile_tubes, FittedModel, QuantileTubeSet};
use tailcal::rng::RngSpec;
use tailcal::synth::gen_gaussian_2d;

fn main() -> tailcal::error::Result<()> {
    let rng = RngSpec::new(0, 0);
    let identity = [1.0, 0.0, 0.0, 1.0];
    let test = ActionSet::from_points(gen_gaussian_2d(1_000_000, [0.0, 0.0], identity, rng.child(2))?);

    let mut points = Vec::new();
    for n in [1_000, 3_162, 10_000, 31_623] {
        let train = ActionSet::from_points(gen_gaussian_2d(n, [0.0, 0.0], identity, rng.child(1).child(n as u64))?);
        // A tube needs at least three actions left after peeling.
        let deltas: Vec<f64> = DeltaGrid::standard()
            .deltas()
            .iter()
            .copied()
            .filter(|d| (n as f64 * (1.0 - d)).floor() >= 3.0)
            .collect();
        let grid = DeltaGrid::new(deltas)?;
        let tubes = fit_quantile_tubes(&train, grid.deltas(), Window::Full)?;
        let model = FittedModel::QuantileTube(QuantileTubeSet { tubes });
        let curve = calibration_curve(&model, &test, &grid, Window::Full)?;
        let dm = delta_min(&curve, 0.5)?.delta_min;
        println!("N = {n:>6}: δ_min = {dm:?}");
        if let Some(d) = dm {
            points.push((n as f64, d));
        }
    }

    let fit = scaling_fit(&points)?;
    println!("slope {:.3}, r² {:.3}", fit.slope, fit.r2);
    for target in [1e-5, 1e-8] {
        println!("N for δ = {target:e}: {:.3e}", fit.extrapolate(target)?);
    }
    Ok(())
}
