//! Mixture models on heavy-tailed data: more components fit the bulk but
//! the tail stays miscalibrated.

use tailcal::actions::{ActionSet, Window};
use tailcal::calibration::{calibration_curve, DeltaGrid};
use tailcal::models::{fit_stepwise_gmm, EmConfig, FittedModel};
use tailcal::rng::RngSpec;
use tailcal::synth::{gen_noisy_gaussian_2d, NoiseKind};

fn main() -> tailcal::error::Result<()> {
    let rng = RngSpec::new(0, 0);
    let identity = [1.0, 0.0, 0.0, 1.0];
    let kind = NoiseKind::SymmetricNonuniform;
    let (train, _) = gen_noisy_gaussian_2d(10_000, [0.0, 0.0], identity, kind, 0.3, rng.child(1))?;
    let (test, _) = gen_noisy_gaussian_2d(500_000, [0.0, 0.0], identity, kind, 0.3, rng.child(2))?;
    let (train, test) = (ActionSet::from_points(train), ActionSet::from_points(test));

    let mc = 200_000;
    // Highest-density thresholds are only resolved down to about 10 / mc.
    let grid = DeltaGrid::standard().truncated(10.0 / mc as f64)?;

    for k in [1, 2, 3, 4] {
        let gmm = fit_stepwise_gmm(&train, k, &EmConfig::default(), grid.deltas(), mc, rng.child(3).child(k as u64))?;
        let curve = calibration_curve(&FittedModel::Gmm(gmm), &test, &grid, Window::Full)?;
        let ratios: Vec<String> = curve.records.iter().map(|r| format!("{:.2}", r.ratio)).collect();
        println!("K = {k}: ratios {}", ratios.join(" "));
    }
    Ok(())
}
