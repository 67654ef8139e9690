//! Fit a Gaussian to noisy 2D points and compare observed against expected
//! violations over the standard δ grid, once per noise generator.

use tailcal::actions::{ActionSet, Window};
use tailcal::calibration::{calibration_curve, delta_min, DeltaGrid};
use tailcal::models::{fit_stepwise_gaussian, FittedModel, GaussianClass, RegionMode};
use tailcal::rng::RngSpec;
use tailcal::synth::{add_noise, gen_gaussian_2d, noise_width, NoiseKind};

fn main() -> tailcal::error::Result<()> {
    let rng = RngSpec::new(0, 0);
    let identity = [1.0, 0.0, 0.0, 1.0];
    let base_train = gen_gaussian_2d(10_000, [0.0, 0.0], identity, rng.child(1))?;
    let width = noise_width(&base_train, 0.3)?;
    let grid = DeltaGrid::standard();

    for (i, kind) in [NoiseKind::None, NoiseKind::Uniform, NoiseKind::SymmetricNonuniform].into_iter().enumerate() {
        let mut train = base_train.clone();
        let mut test = gen_gaussian_2d(1_000_000, [0.0, 0.0], identity, rng.child(2))?;
        add_noise(&mut train, kind, width, rng.child(10 + i as u64));
        add_noise(&mut test, kind, width, rng.child(20 + i as u64));

        let model = FittedModel::Gaussian(fit_stepwise_gaussian(
            &ActionSet::from_points(train),
            GaussianClass::Gaussian,
            RegionMode::PerStep,
        )?);
        let curve = calibration_curve(&model, &ActionSet::from_points(test), &grid, Window::Full)?;

        println!("{kind:?}");
        for r in &curve.records {
            println!("  δ = {:8.1e}  observed {:>7}  expected {:>9.1}  ratio {:.3}", r.delta, r.observed_count, r.expected_count, r.ratio);
        }
        println!("  δ_min(η = 0.5) = {:?}", delta_min(&curve, 0.5)?.delta_min);
    }
    Ok(())
}
