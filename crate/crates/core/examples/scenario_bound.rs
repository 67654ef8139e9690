//! Distribution-free guarantee from the training hull: ε(N, k, β) bounds the
//! probability a new action leaves the hull, with confidence 1 - β.

use tailcal::actions::{ActionSet, Window};
use tailcal::models::{campi_violation_bound, fit_scenario_hull};
use tailcal::rng::RngSpec;
use tailcal::synth::gen_gaussian_2d;

fn main() -> tailcal::error::Result<()> {
    let rng = RngSpec::new(0, 0);
    let identity = [1.0, 0.0, 0.0, 1.0];

    for n in [500u64, 1_000, 10_000, 40_000, 1_000_000] {
        println!("N = {n:>7}: ε(k = 1) = {:.3e}", campi_violation_bound(n, 1, 0.01)?);
    }

    let train = ActionSet::from_points(gen_gaussian_2d(500, [0.0, 0.0], identity, rng.child(1))?);
    let hull = fit_scenario_hull(&train, Window::Full)?;
    let eps = campi_violation_bound(500, hull.support_count as u64, 0.01)?;
    let test = gen_gaussian_2d(1_000_000, [0.0, 0.0], identity, rng.child(2))?;
    let outside = test.iter().filter(|p| !hull.contains(std::slice::from_ref(*p))).count();
    println!(
        "hull of 500 points: {} vertices, bound {eps:.4}, Monte Carlo violation {:.4}",
        hull.support_count,
        outside as f64 / test.len() as f64
    );
    Ok(())
}
