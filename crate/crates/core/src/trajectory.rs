//! Trajectories, scenarios and equivalent-scenario pruning.

use std::collections::HashSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar position in meters.
pub type Point = [f64; 2];

/// Relative tolerance used when deciding whether a time lands on the grid.
const GRID_TOL: f64 = 1e-9;

/// Number of whole samples in `seconds` at `sample_rate`, or an off-grid error.
pub fn grid_steps(seconds: f64, sample_rate: f64) -> Result<usize> {
    if !(seconds.is_finite() && seconds >= 0.0) {
        return Err(Error::range("time", seconds, "must be finite and non-negative"));
    }
    let x = seconds * sample_rate;
    let k = x.round();
    if (x - k).abs() > GRID_TOL * x.abs().max(1.0) {
        return Err(Error::OffGrid {
            value: seconds,
            step: 1.0 / sample_rate,
        });
    }
    Ok(k as usize)
}

/// Uniformly sampled planar path. `positions[0]` is at t = 0 and the last
/// sample is at t = duration, so there are `duration * sample_rate + 1`
/// samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    positions: Vec<Point>,
    sample_rate: f64,
}

impl Trajectory {
    pub fn new(positions: Vec<Point>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::range("sample_rate", sample_rate, "must be > 0"));
        }
        if positions.is_empty() {
            return Err(Error::TooFew {
                what: "trajectory samples",
                needed: 1,
                got: 0,
            });
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Data("non-finite trajectory coordinate".into()));
        }
        Ok(Self {
            positions,
            sample_rate,
        })
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.positions.len() - 1) as f64 / self.sample_rate
    }

    /// Samples covering `[0, seconds]`, endpoints included.
    pub fn prefix(&self, seconds: f64) -> Result<Trajectory> {
        let k = grid_steps(seconds, self.sample_rate)?;
        if k >= self.positions.len() {
            return Err(Error::range(
                "prefix",
                seconds,
                format!("exceeds duration {}", self.duration()),
            ));
        }
        Ok(Self {
            positions: self.positions[..=k].to_vec(),
            sample_rate: self.sample_rate,
        })
    }
}

/// Context features for a scenario. `None` marks an absent neighbor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnvironmentContext {
    pub features: Vec<Option<f64>>,
}

impl EnvironmentContext {
    pub fn new(features: Vec<Option<f64>>) -> Self {
        Self { features }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    /// ∞-norm distance. Presence/absence mismatch is infinitely far.
    pub fn distance(&self, other: &Self) -> f64 {
        self.features
            .iter()
            .zip(&other.features)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => (a - b).abs(),
                (None, None) => 0.0,
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }
}

/// Stable identity of a scenario: where it came from and its record index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScenarioId {
    pub source: Arc<str>,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: ScenarioId,
    pub trajectory: Trajectory,
    pub context: EnvironmentContext,
    /// Target lane, present when oracle labeling is enabled.
    pub mode_label: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub role: Role,
    scenarios: Vec<Scenario>,
}

impl Dataset {
    /// Checks that every member shares the sample rate and context width.
    pub fn new(role: Role, scenarios: Vec<Scenario>) -> Result<Self> {
        if let Some(first) = scenarios.first() {
            let rate = first.trajectory.sample_rate();
            let dim = first.context.dim();
            for s in &scenarios {
                if s.trajectory.sample_rate() != rate {
                    return Err(Error::Schema(format!(
                        "sample rate {} differs from {rate} in {:?}",
                        s.trajectory.sample_rate(),
                        s.id
                    )));
                }
                if s.context.dim() != dim {
                    return Err(Error::Schema(format!(
                        "context dimension {} differs from {dim} in {:?}",
                        s.context.dim(),
                        s.id
                    )));
                }
            }
        }
        Ok(Self { role, scenarios })
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn into_scenarios(self) -> Vec<Scenario> {
        self.scenarios
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn sample_rate(&self) -> Option<f64> {
        self.scenarios.first().map(|s| s.trajectory.sample_rate())
    }

    pub fn context_dim(&self) -> Option<usize> {
        self.scenarios.first().map(|s| s.context.dim())
    }

    /// Members carrying the given mode label.
    pub fn with_mode(&self, label: i64) -> Dataset {
        Dataset {
            role: self.role,
            scenarios: self
                .scenarios
                .iter()
                .filter(|s| s.mode_label == Some(label))
                .cloned()
                .collect(),
        }
    }
}

/// Closeness thresholds for equivalent scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruningConfig {
    /// Trajectory closeness in meters.
    pub epsilon_traj: f64,
    /// Context closeness in native feature units.
    pub epsilon_env: f64,
    /// Length of the compared trajectory prefix.
    pub prefix_secs: f64,
}

impl Default for PruningConfig {
    fn default() -> Self {
        Self {
            epsilon_traj: 0.6096,
            epsilon_env: 2.0,
            prefix_secs: 2.0,
        }
    }
}

impl PruningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_traj > 0.0) {
            return Err(Error::range("epsilon_traj", self.epsilon_traj, "must be > 0"));
        }
        if !(self.epsilon_env > 0.0) {
            return Err(Error::range("epsilon_env", self.epsilon_env, "must be > 0"));
        }
        if !(self.prefix_secs > 0.0) {
            return Err(Error::range("prefix_secs", self.prefix_secs, "must be > 0"));
        }
        Ok(())
    }
}

/// State (prefix and context) and action (remaining path) of a scenario.
/// The two trajectories share the sample at the split time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateAction {
    pub prefix: Trajectory,
    pub context: EnvironmentContext,
    pub action: Trajectory,
}

impl StateAction {
    /// Reassembles the source trajectory.
    pub fn rejoin(&self) -> Trajectory {
        let mut positions = self.prefix.positions.clone();
        positions.extend_from_slice(&self.action.positions[1..]);
        Trajectory {
            positions,
            sample_rate: self.prefix.sample_rate,
        }
    }
}

pub fn split_state_action(scenario: &Scenario, split_time: f64) -> Result<StateAction> {
    let traj = &scenario.trajectory;
    if !(split_time > 0.0 && split_time < traj.duration()) {
        return Err(Error::range(
            "split_time",
            split_time,
            format!("must lie strictly inside (0, {})", traj.duration()),
        ));
    }
    let k = grid_steps(split_time, traj.sample_rate)?;
    Ok(StateAction {
        prefix: Trajectory {
            positions: traj.positions[..=k].to_vec(),
            sample_rate: traj.sample_rate,
        },
        context: scenario.context.clone(),
        action: Trajectory {
            positions: traj.positions[k..].to_vec(),
            sample_rate: traj.sample_rate,
        },
    })
}

/// First `horizon` seconds of an action.
pub fn replan_window(action: &Trajectory, horizon: f64) -> Result<Trajectory> {
    if horizon > action.duration() + GRID_TOL {
        return Err(Error::range(
            "horizon",
            horizon,
            format!("exceeds action duration {}", action.duration()),
        ));
    }
    let k = grid_steps(horizon, action.sample_rate)?;
    Ok(Trajectory {
        positions: action.positions[..=k].to_vec(),
        sample_rate: action.sample_rate,
    })
}

fn check_compatible(test: &Scenario, train: &Dataset) -> Result<()> {
    if let Some(rate) = train.sample_rate() {
        if rate != test.trajectory.sample_rate() {
            return Err(Error::Schema(format!(
                "sample rate {} vs {}",
                test.trajectory.sample_rate(),
                rate
            )));
        }
    }
    if let Some(dim) = train.context_dim() {
        if dim != test.context.dim() {
            return Err(Error::Schema(format!(
                "context dimension {} vs {}",
                test.context.dim(),
                dim
            )));
        }
    }
    Ok(())
}

fn prefix_distance(a: &[Point], b: &[Point]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(p, q)| [(p[0] - q[0]).abs(), (p[1] - q[1]).abs()])
        .fold(0.0, f64::max)
}

fn prefix_len(traj: &Trajectory, cfg: &PruningConfig) -> Result<usize> {
    let k = grid_steps(cfg.prefix_secs, traj.sample_rate)?;
    if k >= traj.len() {
        return Err(Error::range(
            "prefix_secs",
            cfg.prefix_secs,
            "exceeds trajectory duration",
        ));
    }
    Ok(k + 1)
}

fn is_equivalent(test: &Scenario, test_len: usize, cand: &Scenario, cfg: &PruningConfig) -> bool {
    cand.trajectory.len() >= test_len
        && prefix_distance(
            &test.trajectory.positions[..test_len],
            &cand.trajectory.positions[..test_len],
        ) < cfg.epsilon_traj
        && test.context.distance(&cand.context) < cfg.epsilon_env
}

/// Train scenarios whose prefix and context are both strictly within the
/// configured ∞-norm distance of `test`. Train order is preserved.
pub fn equivalent_scenarios(
    test: &Scenario,
    train: &Dataset,
    cfg: &PruningConfig,
) -> Result<Dataset> {
    cfg.validate()?;
    check_compatible(test, train)?;
    let n = prefix_len(&test.trajectory, cfg)?;
    let scenarios = train
        .scenarios
        .par_iter()
        .filter(|s| is_equivalent(test, n, s, cfg))
        .cloned()
        .collect();
    Ok(Dataset {
        role: Role::Train,
        scenarios,
    })
}

/// Union of the equivalent scenarios of every test member, each train
/// scenario appearing once (by identity), in train order.
pub fn prune_training_set(test: &Dataset, train: &Dataset, cfg: &PruningConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut lens = Vec::with_capacity(test.len());
    for t in &test.scenarios {
        check_compatible(t, train)?;
        lens.push(prefix_len(&t.trajectory, cfg)?);
    }
    let keep: Vec<bool> = train
        .scenarios
        .par_iter()
        .map(|s| {
            test.scenarios
                .iter()
                .zip(&lens)
                .any(|(t, &n)| is_equivalent(t, n, s, cfg))
        })
        .collect();
    let mut seen = HashSet::new();
    let scenarios = train
        .scenarios
        .iter()
        .zip(keep)
        .filter(|(s, k)| *k && seen.insert(s.id.clone()))
        .map(|(s, _)| s.clone())
        .collect();
    Ok(Dataset {
        role: Role::Train,
        scenarios,
    })
}
