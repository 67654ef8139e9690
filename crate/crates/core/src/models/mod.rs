//! Uncertainty-model classes and their δ-membership queries.
//!
//! Every model answers "is this windowed action inside the 1-δ region?".
//! Gaussian-family models reduce that question to a scalar score compared
//! against a δ-dependent threshold, which lets calibration score a test set
//! once and sweep the whole δ grid.

pub mod classifier;
pub mod gaussian;
pub mod gmm;
pub mod scenario_bound;
pub mod tube;

use serde::{Deserialize, Serialize};

use crate::actions::ActionSet;
use crate::error::{Error, Result};
use crate::rng::RngSpec;
use crate::trajectory::Point;

pub use classifier::{
    decision_intervals, fit_two_mode_classifier, mode_posterior, Decision, DecisionIntervals,
    Interval, TwoModeClassifier,
};
pub use gaussian::{fit_gaussian, fit_noisy_rational, gaussian_region_radius, region_radius, GaussianModel};
pub use gmm::{fit_gmm, gmm_density_threshold, gmm_log_density_thresholds, EmConfig, GmmModel};
pub use scenario_bound::campi_violation_bound;
pub use tube::{fit_quantile_tube, fit_quantile_tubes, fit_scenario_hull, QuantileTube, ScenarioHull};

/// Which member of the Gaussian family produced the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianClass {
    Gaussian,
    /// Boltzmann-rational actions under a quadratic cost. The rationality
    /// coefficient is not identifiable apart from the covariance scale and is
    /// absorbed into it.
    NoisyRational,
}

/// How a multi-step action is tested against a Gaussian fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    /// A 2D Mahalanobis test at every step; leaving at any step is a violation.
    #[default]
    PerStep,
    /// One chi-square test on the stacked action.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseGaussian {
    pub family: GaussianClass,
    pub mode: RegionMode,
    /// One 2D model per step, or a single stacked model in joint mode.
    pub models: Vec<GaussianModel>,
    pub steps: usize,
}

impl StepwiseGaussian {
    fn score(&self, action: &[Point]) -> f64 {
        match self.mode {
            RegionMode::PerStep => self
                .models
                .iter()
                .zip(action)
                .map(|(m, p)| m.mahalanobis_sq(p))
                .fold(f64::NEG_INFINITY, f64::max),
            RegionMode::Joint => {
                let flat: Vec<f64> = action.iter().flat_map(|p| [p[0], p[1]]).collect();
                self.models[0].mahalanobis_sq(&flat)
            }
        }
    }

    /// Squared Mahalanobis radius at level δ.
    fn threshold(&self, delta: f64) -> Result<f64> {
        let dim = match self.mode {
            RegionMode::PerStep => 2,
            RegionMode::Joint => 2 * self.steps,
        };
        let r = region_radius(dim, delta)?;
        Ok(r * r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmThreshold {
    pub delta: f64,
    /// `ln t_δ` per step.
    pub log_thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseGmm {
    pub models: Vec<GmmModel>,
    pub mc_samples: usize,
    /// Highest-density thresholds, one entry per cached δ.
    pub thresholds: Vec<GmmThreshold>,
}

impl StepwiseGmm {
    fn cached(&self, delta: f64) -> Result<&GmmThreshold> {
        self.thresholds
            .iter()
            .find(|t| t.delta == delta)
            .ok_or(Error::UncachedDelta(delta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTubeSet {
    pub tubes: Vec<QuantileTube>,
}

impl QuantileTubeSet {
    pub fn get(&self, delta: f64) -> Result<&QuantileTube> {
        self.tubes
            .iter()
            .find(|t| t.target_delta == delta)
            .ok_or(Error::UncachedDelta(delta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum FittedModel {
    Gaussian(StepwiseGaussian),
    Gmm(StepwiseGmm),
    QuantileTube(QuantileTubeSet),
    ScenarioHull(ScenarioHull),
    TwoModeClassifier(TwoModeClassifier),
}

/// A model's region at one δ, ready for repeated membership tests.
pub enum Region<'a> {
    /// Inside iff `score <= threshold`.
    Score { model: &'a FittedModel, threshold: f64 },
    /// Per-step log-density thresholds.
    Gmm { model: &'a StepwiseGmm, log_thresholds: &'a [f64] },
    Tube(&'a QuantileTube),
    Hull(&'a ScenarioHull),
}

impl Region<'_> {
    pub fn contains(&self, action: &[Point]) -> bool {
        match self {
            Region::Score { model, threshold } => {
                model.score(action).expect("score model") <= *threshold
            }
            Region::Gmm { model, log_thresholds } => model
                .models
                .iter()
                .zip(action)
                .zip(*log_thresholds)
                .all(|((m, p), t)| m.log_density(p) >= *t),
            Region::Tube(t) => t.contains(action),
            Region::Hull(h) => h.contains(action),
        }
    }
}

impl FittedModel {
    pub fn class_name(&self) -> &'static str {
        match self {
            FittedModel::Gaussian(g) => match g.family {
                GaussianClass::Gaussian => "gaussian",
                GaussianClass::NoisyRational => "noisy_rational",
            },
            FittedModel::Gmm(_) => "gmm",
            FittedModel::QuantileTube(_) => "quantile_tube",
            FittedModel::ScenarioHull(_) => "scenario_hull",
            FittedModel::TwoModeClassifier(_) => "two_mode_classifier",
        }
    }

    /// Number of action steps the model covers.
    pub fn steps(&self) -> Option<usize> {
        match self {
            FittedModel::Gaussian(g) => Some(g.steps),
            FittedModel::Gmm(g) => Some(g.models.len()),
            FittedModel::QuantileTube(t) => t.tubes.first().map(|t| t.cross_sections.len()),
            FittedModel::ScenarioHull(h) => Some(h.cross_sections.len()),
            FittedModel::TwoModeClassifier(_) => None,
        }
    }

    /// Scalar outlyingness for Gaussian-family models; larger is farther
    /// out, and the δ-region is `score <= threshold`. The action must have
    /// exactly [`Self::steps`] points.
    pub fn score(&self, action: &[Point]) -> Option<f64> {
        match self {
            FittedModel::Gaussian(g) => Some(g.score(action)),
            _ => None,
        }
    }

    pub fn region(&self, delta: f64) -> Result<Region<'_>> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::range("delta", delta, "must lie in (0, 1)"));
        }
        match self {
            FittedModel::Gaussian(g) => Ok(Region::Score {
                model: self,
                threshold: g.threshold(delta)?,
            }),
            FittedModel::Gmm(g) => Ok(Region::Gmm {
                model: g,
                log_thresholds: &g.cached(delta)?.log_thresholds,
            }),
            FittedModel::QuantileTube(t) => Ok(Region::Tube(t.get(delta)?)),
            FittedModel::ScenarioHull(h) => Ok(Region::Hull(h)),
            FittedModel::TwoModeClassifier(_) => Err(Error::Unsupported(
                "the two-mode classifier has no δ-region; use mode_posterior".into(),
            )),
        }
    }

    /// Whether `action` lies in the closed 1-δ region.
    pub fn contains(&self, action: &[Point], delta: f64) -> Result<bool> {
        if let Some(steps) = self.steps() {
            if action.len() != steps {
                return Err(Error::Schema(format!(
                    "action of {} steps against a {steps}-step model",
                    action.len()
                )));
            }
        }
        Ok(self.region(delta)?.contains(action))
    }
}

/// Per-step (or stacked) Gaussian fit over windowed actions.
pub fn fit_stepwise_gaussian(
    actions: &ActionSet,
    class: GaussianClass,
    mode: RegionMode,
) -> Result<StepwiseGaussian> {
    let fit = match class {
        GaussianClass::Gaussian => fit_gaussian::<Point>,
        GaussianClass::NoisyRational => fit_noisy_rational::<Point>,
    };
    let models = match mode {
        RegionMode::PerStep => (0..actions.steps())
            .map(|t| fit(&actions.step_points(t)))
            .collect::<Result<Vec<_>>>()?,
        RegionMode::Joint => {
            let flat = actions.flattened();
            let m = match class {
                GaussianClass::Gaussian => fit_gaussian(&flat)?,
                GaussianClass::NoisyRational => fit_noisy_rational(&flat)?,
            };
            vec![m]
        }
    };
    Ok(StepwiseGaussian {
        family: class,
        mode,
        models,
        steps: actions.steps(),
    })
}

/// Per-step mixture fit with highest-density thresholds cached for `deltas`.
pub fn fit_stepwise_gmm(
    actions: &ActionSet,
    k: usize,
    cfg: &EmConfig,
    deltas: &[f64],
    mc_samples: usize,
    rng: RngSpec,
) -> Result<StepwiseGmm> {
    let mut models = Vec::with_capacity(actions.steps());
    let mut per_step = Vec::with_capacity(actions.steps());
    for t in 0..actions.steps() {
        let m = fit_gmm(&actions.step_points(t), k, cfg, rng.child(2 * t as u64))?;
        per_step.push(gmm_log_density_thresholds(
            &m,
            deltas,
            mc_samples,
            rng.child(2 * t as u64 + 1),
        )?);
        models.push(m);
    }
    let thresholds = deltas
        .iter()
        .enumerate()
        .map(|(i, &delta)| GmmThreshold {
            delta,
            log_thresholds: per_step.iter().map(|s| s[i]).collect(),
        })
        .collect();
    Ok(StepwiseGmm {
        models,
        mc_samples,
        thresholds,
    })
}

/// A fitted model with the provenance needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub model: FittedModel,
    pub n_train: usize,
    pub rng: Option<RngSpec>,
    pub library_version: String,
}

impl ModelDocument {
    pub fn new(model: FittedModel, n_train: usize, rng: Option<RngSpec>) -> Self {
        Self {
            model,
            n_train,
            rng,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::Window;
    use rand_distr::{Distribution, StandardNormal};

    fn cloud(n: usize, seed: u64) -> ActionSet {
        let mut rng = RngSpec::new(seed, 0).rng();
        ActionSet::from_points(
            (0..n)
                .map(|_| [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)])
                .collect(),
        )
    }

    #[test]
    fn gaussian_membership_boundary_and_mean() {
        let g = GaussianModel::new(vec![1.0, 2.0], vec![4.0, 0.0, 0.0, 1.0]).unwrap();
        let m = FittedModel::Gaussian(StepwiseGaussian {
            family: GaussianClass::Gaussian,
            mode: RegionMode::PerStep,
            models: vec![g],
            steps: 1,
        });
        for delta in [0.5, 1e-3, 1e-8] {
            assert!(m.contains(&[[1.0, 2.0]], delta).unwrap());
        }
        // Exactly on the boundary along the second axis (unit variance).
        let r = region_radius(2, (-0.5f64).exp()).unwrap();
        assert!(m.contains(&[[1.0, 2.0 + r]], (-0.5f64).exp()).unwrap());
        assert!(!m.contains(&[[1.0, 2.0 + r + 1e-9]], (-0.5f64).exp()).unwrap());
        assert!(m.contains(&[[1.0, 2.0], [0.0, 0.0]], 0.1).is_err());
    }

    #[test]
    fn gaussian_inside_fraction() {
        let train = cloud(2000, 1);
        let g = fit_stepwise_gaussian(&train, GaussianClass::Gaussian, RegionMode::PerStep).unwrap();
        let model = FittedModel::Gaussian(g.clone());
        let mut rng = RngSpec::new(2, 0).rng();
        let n = 100_000;
        let mut x = [0.0; 2];
        let mut inside = 0;
        for _ in 0..n {
            g.models[0].sample_into(&mut rng, &mut x);
            inside += model.contains(&[x], 0.1).unwrap() as usize;
        }
        let frac = inside as f64 / n as f64;
        assert!((frac - 0.9).abs() < 4.0 * (0.09f64 / n as f64).sqrt(), "{frac}");
    }

    #[test]
    fn joint_and_per_step_agree_on_one_step() {
        let train = cloud(500, 3);
        let a = FittedModel::Gaussian(fit_stepwise_gaussian(&train, GaussianClass::Gaussian, RegionMode::PerStep).unwrap());
        let b = FittedModel::Gaussian(fit_stepwise_gaussian(&train, GaussianClass::Gaussian, RegionMode::Joint).unwrap());
        for p in cloud(200, 4).iter() {
            assert_eq!(a.contains(p, 0.05).unwrap(), b.contains(p, 0.05).unwrap());
        }
    }

    #[test]
    fn gmm_thresholds_cached_only() {
        let train = cloud(600, 5);
        let g = fit_stepwise_gmm(&train, 2, &EmConfig::default(), &[0.1, 0.01], 10_000, RngSpec::new(1, 0)).unwrap();
        let m = FittedModel::Gmm(g);
        assert!(m.contains(&[[0.0, 0.0]], 0.1).unwrap());
        assert!(!m.contains(&[[9.0, 9.0]], 0.01).unwrap());
        assert!(matches!(m.contains(&[[0.0, 0.0]], 0.2), Err(Error::UncachedDelta(_))));
    }

    #[test]
    fn classifier_has_no_region() {
        let c = fit_two_mode_classifier(&[0.0, 1.0, 2.0], &[3.0, 4.0, 6.0]).unwrap();
        let m = FittedModel::TwoModeClassifier(c);
        assert!(matches!(m.contains(&[[0.0, 0.0]], 0.1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn hull_contains_every_tube() {
        let train = cloud(400, 6);
        let hull = fit_scenario_hull(&train, Window::Full).unwrap();
        let tubes = fit_quantile_tubes(&train, &[0.01, 0.1, 0.3], Window::Full).unwrap();
        for t in &tubes {
            assert!(hull.cross_sections[0].contains_polygon(&t.cross_sections[0]));
        }
    }

    #[test]
    fn document_round_trip() {
        let train = cloud(300, 7);
        let tubes = fit_quantile_tubes(&train, &[0.1], Window::Full).unwrap();
        for model in [
            FittedModel::Gaussian(fit_stepwise_gaussian(&train, GaussianClass::NoisyRational, RegionMode::PerStep).unwrap()),
            FittedModel::QuantileTube(QuantileTubeSet { tubes }),
            FittedModel::ScenarioHull(fit_scenario_hull(&train, Window::Full).unwrap()),
        ] {
            let doc = ModelDocument::new(model, 300, Some(RngSpec::new(1, 2)));
            let s = serde_json::to_string(&doc).unwrap();
            assert!(s.contains("\"class\""));
            let back: ModelDocument = serde_json::from_str(&s).unwrap();
            assert_eq!(back, doc);
        }
    }
}
