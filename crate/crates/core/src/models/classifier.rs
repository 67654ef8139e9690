//! Static two-mode Bayes classification in one dimension.

use serde::{Deserialize, Serialize};

use super::gaussian::{fit_gaussian, GaussianModel};
use crate::error::{Error, Result};
use crate::stats::logistic;

/// Two 1D Gaussian modes under a uniform prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoModeClassifier {
    pub mode1: GaussianModel,
    pub mode2: GaussianModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Mode1,
    Mode2,
    Gray,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub decision: Decision,
}

/// Partition of a range into confident-mode and gray intervals, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionIntervals {
    pub delta: f64,
    pub intervals: Vec<Interval>,
}

impl DecisionIntervals {
    pub fn of(&self, decision: Decision) -> impl Iterator<Item = &Interval> + '_ {
        self.intervals.iter().filter(move |i| i.decision == decision)
    }

    /// Total length labeled `decision`.
    pub fn length(&self, decision: Decision) -> f64 {
        self.of(decision).map(|i| i.hi - i.lo).sum()
    }
}

impl TwoModeClassifier {
    pub fn new(mode1: GaussianModel, mode2: GaussianModel) -> Result<Self> {
        for m in [&mode1, &mode2] {
            if m.dim() != 1 {
                return Err(Error::Schema(format!("mode of dimension {}", m.dim())));
            }
        }
        Ok(Self { mode1, mode2 })
    }

    /// `ln p2(x) - ln p1(x)`; positive favors mode 2.
    pub fn log_odds(&self, x: f64) -> f64 {
        self.mode2.log_pdf(&[x]) - self.mode1.log_pdf(&[x])
    }

    fn decide(&self, x: f64, threshold: f64) -> Decision {
        let lo = self.log_odds(x);
        if -lo >= threshold {
            Decision::Mode1
        } else if lo >= threshold {
            Decision::Mode2
        } else {
            Decision::Gray
        }
    }
}

pub fn fit_two_mode_classifier(points1: &[f64], points2: &[f64]) -> Result<TwoModeClassifier> {
    let fit = |pts: &[f64]| {
        let p: Vec<[f64; 1]> = pts.iter().map(|&x| [x]).collect();
        fit_gaussian(&p).map_err(|e| match e {
            Error::TooFew { got, .. } => {
                Error::Degenerate(format!("{got} point(s) give no variance estimate"))
            }
            other => other,
        })
    };
    TwoModeClassifier::new(fit(points1)?, fit(points2)?)
}

/// Posterior `(p1, p2)` under the uniform prior.
pub fn mode_posterior(classifier: &TwoModeClassifier, x: f64) -> (f64, f64) {
    let lo = classifier.log_odds(x);
    (logistic(-lo), logistic(lo))
}

/// Splits `[lo, hi]` into maximal intervals where one mode has posterior at
/// least `1 - δ`, and gray intervals elsewhere. Label changes are found on a
/// uniform grid of `grid` cells and refined by bisection to 1e-9.
pub fn decision_intervals(
    classifier: &TwoModeClassifier,
    delta: f64,
    range: (f64, f64),
    grid: usize,
) -> Result<DecisionIntervals> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::range("delta", delta, "must lie in (0, 1)"));
    }
    let (lo, hi) = range;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::range("range", hi - lo, "need finite lo < hi"));
    }
    if grid < 1000 {
        return Err(Error::range("grid", grid as f64, "need at least 1000 cells"));
    }
    // p ≥ 1 - δ  ⇔  log-odds ≥ ln((1 - δ)/δ)
    let threshold = (-delta).ln_1p() - delta.ln();
    let x_at = |i: usize| lo + (hi - lo) * i as f64 / grid as f64;
    let mut intervals = Vec::new();
    let mut start = lo;
    let mut current = classifier.decide(lo, threshold);
    for i in 1..=grid {
        let x = if i == grid { hi } else { x_at(i) };
        let d = classifier.decide(x, threshold);
        if d == current {
            continue;
        }
        let (mut a, mut b) = (x_at(i - 1), x);
        while b - a > 1e-9 {
            let m = 0.5 * (a + b);
            if classifier.decide(m, threshold) == current {
                a = m;
            } else {
                b = m;
            }
        }
        let boundary = 0.5 * (a + b);
        intervals.push(Interval {
            lo: start,
            hi: boundary,
            decision: current,
        });
        start = boundary;
        current = d;
    }
    intervals.push(Interval {
        lo: start,
        hi,
        decision: current,
    });
    Ok(DecisionIntervals { delta, intervals })
}
