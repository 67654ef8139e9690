//! Which observations can be attributed to one of two modes with
//! confidence 1 - δ? Everything else is gray.

use tailcal::models::{decision_intervals, fit_two_mode_classifier, mode_posterior, Decision};
use tailcal::rng::RngSpec;
use tailcal::synth::{gen_two_mode_1d, ModeDistribution, ModeSpec};

fn main() -> tailcal::error::Result<()> {
    let cases = [
        (
            "gaussian",
            ModeDistribution::Gaussian { mean: -1.0, sigma: 0.5 },
            ModeDistribution::Gaussian { mean: 1.0, sigma: 0.5 },
            (-4.0, 4.0),
        ),
        (
            "uniform",
            ModeDistribution::Uniform { lo: -2.0, hi: 1.0 },
            ModeDistribution::Uniform { lo: -1.0, hi: 2.0 },
            (-2.0, 2.0),
        ),
    ];
    for (name, a, b, range) in cases {
        let (x1, x2) = gen_two_mode_1d(
            &ModeSpec { distribution: a, count: 1000 },
            &ModeSpec { distribution: b, count: 1000 },
            RngSpec::new(0, 0),
        )?;
        let classifier = fit_two_mode_classifier(&x1, &x2)?;
        println!("{name}: P(mode 1 | x = 0.5) = {:.3}", mode_posterior(&classifier, 0.5).0);
        for delta in [1e-2, 1e-8] {
            let di = decision_intervals(&classifier, delta, range, 1000)?;
            let gray: Vec<String> = di.of(Decision::Gray).map(|i| format!("[{:.4}, {:.4}]", i.lo, i.hi)).collect();
            let share = di.length(Decision::Gray) / (range.1 - range.0);
            println!("  δ = {delta:e}: gray {} ({:.0}% of {range:?})", gray.join(" "), 100.0 * share);
        }
    }
    Ok(())
}
