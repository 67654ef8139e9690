//! Seeded synthetic data: Gaussian point clouds with optional noise, 1D
//! two-mode samples, and lane-keeping trajectories with rare swerves.
//!
//! Point `i` of any generator is a pure function of `(RngSpec, i)`, so output
//! does not depend on the number of threads.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::gaussian::GaussianModel;
use crate::rng::RngSpec;
use crate::trajectory::{
    grid_steps, Dataset, EnvironmentContext, Point, Role, Scenario, ScenarioId, Trajectory,
};

/// Stream label for additive noise, kept apart from the base draws so the
/// noise-free part is the same for every noise kind.
const NOISE_STREAM: u64 = 0x6e6f697365;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    /// Per-axis `Uniform(-w, w)`.
    Uniform,
    /// Per-axis `w·s·B` with a fair sign `s` and `B ~ Beta(0.5, 2)`.
    SymmetricNonuniform,
}

/// `n` draws from a 2D normal with row-major covariance `cov`.
pub fn gen_gaussian_2d(n: usize, mean: Point, cov: [f64; 4], rng: RngSpec) -> Result<Vec<Point>> {
    let g = GaussianModel::new(mean.to_vec(), cov.to_vec())?;
    Ok(rng.par_blocks(n, |r, _| {
        let mut p = [0.0; 2];
        g.sample_into(r, &mut p);
        p
    }))
}

/// Per-axis `max - min`.
pub fn axis_range(points: &[Point]) -> [f64; 2] {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    if points.is_empty() {
        return [0.0; 2];
    }
    [hi[0] - lo[0], hi[1] - lo[1]]
}

/// Noise half-width per axis: `frac` times the per-axis range of `points`.
pub fn noise_width(points: &[Point], frac: f64) -> Result<[f64; 2]> {
    if !(0.0..=1.0).contains(&frac) {
        return Err(Error::range("noise_frac", frac, "must lie in [0, 1]"));
    }
    let r = axis_range(points);
    Ok([frac * r[0], frac * r[1]])
}

/// Adds noise of the given kind and per-axis width in place. Order and count
/// are preserved.
pub fn add_noise(points: &mut [Point], kind: NoiseKind, width: [f64; 2], rng: RngSpec) {
    if kind == NoiseKind::None || width == [0.0, 0.0] {
        return;
    }
    let beta = Beta::new(0.5, 2.0).expect("valid Beta parameters");
    let offsets = rng.par_blocks(points.len(), |r, _| {
        let mut d = [0.0; 2];
        for (a, w) in width.iter().enumerate() {
            d[a] = match kind {
                NoiseKind::None => 0.0,
                NoiseKind::Uniform => w * (2.0 * r.random::<f64>() - 1.0),
                NoiseKind::SymmetricNonuniform => {
                    let s = if r.random::<bool>() { 1.0 } else { -1.0 };
                    w * s * beta.sample(r)
                }
            };
        }
        d
    });
    for (p, d) in points.iter_mut().zip(offsets) {
        p[0] += d[0];
        p[1] += d[1];
    }
}

/// Gaussian draws plus noise whose width is `noise_frac` of the noise-free
/// sample's per-axis range. Also returns that width so a second sample can
/// be given the same noise distribution.
pub fn gen_noisy_gaussian_2d(
    n: usize,
    mean: Point,
    cov: [f64; 4],
    kind: NoiseKind,
    noise_frac: f64,
    rng: RngSpec,
) -> Result<(Vec<Point>, [f64; 2])> {
    let mut pts = gen_gaussian_2d(n, mean, cov, rng)?;
    let width = noise_width(&pts, noise_frac)?;
    add_noise(&mut pts, kind, width, rng.child(NOISE_STREAM));
    Ok((pts, width))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeDistribution {
    Gaussian { mean: f64, sigma: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl ModeDistribution {
    /// Population mean and variance.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            ModeDistribution::Gaussian { mean, sigma } => (mean, sigma * sigma),
            ModeDistribution::Uniform { lo, hi } => (0.5 * (lo + hi), (hi - lo).powi(2) / 12.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    #[serde(flatten)]
    pub distribution: ModeDistribution,
    pub count: usize,
}

impl ModeSpec {
    pub fn validate(&self) -> Result<()> {
        match self.distribution {
            ModeDistribution::Gaussian { sigma, .. } if !(sigma > 0.0) => {
                return Err(Error::range("sigma", sigma, "must be > 0"))
            }
            ModeDistribution::Uniform { lo, hi } if !(lo < hi) => {
                return Err(Error::range("hi", hi, format!("must exceed lo = {lo}")))
            }
            _ => {}
        }
        if self.count == 0 {
            return Err(Error::range("count", 0.0, "need at least one point"));
        }
        Ok(())
    }

    fn draw(&self, rng: RngSpec) -> Vec<f64> {
        match self.distribution {
            ModeDistribution::Gaussian { mean, sigma } => {
                let d = Normal::new(mean, sigma).expect("validated sigma");
                rng.par_blocks(self.count, |r, _| d.sample(r))
            }
            ModeDistribution::Uniform { lo, hi } => {
                rng.par_blocks(self.count, |r, _| lo + (hi - lo) * r.random::<f64>())
            }
        }
    }
}

/// Independent labeled draws for two 1D modes.
pub fn gen_two_mode_1d(mode1: &ModeSpec, mode2: &ModeSpec, rng: RngSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    mode1.validate()?;
    mode2.validate()?;
    Ok((mode1.draw(rng.child(1)), mode2.draw(rng.child(2))))
}

/// Shape of the synthetic lane-keeping scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaneConfig {
    pub duration_secs: f64,
    pub lane_width: f64,
    pub ramp_secs: f64,
    /// Swerve start is uniform on `[ramp_start_min, ramp_start_max]` seconds.
    pub ramp_start_min: f64,
    pub ramp_start_max: f64,
    /// Lateral jitter standard deviation per sample.
    pub jitter_sigma: f64,
    /// Longitudinal speed per scenario, normal with these parameters.
    pub speed_mean: f64,
    pub speed_sigma: f64,
}

impl Default for LaneConfig {
    fn default() -> Self {
        Self {
            duration_secs: 10.0,
            lane_width: 3.5,
            ramp_secs: 3.0,
            ramp_start_min: 2.0,
            ramp_start_max: 7.0,
            jitter_sigma: 0.1,
            speed_mean: 30.0,
            speed_sigma: 0.2,
        }
    }
}

/// Generated scenarios with the ground-truth swerve indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneData {
    pub dataset: Dataset,
    pub swerved: Vec<bool>,
}

/// Per-scenario header draws, taken first from the scenario's own block.
struct Header {
    swerve: bool,
    ramp_start: f64,
    speed: f64,
}

fn header<R: Rng>(r: &mut R, p_swerve: f64, cfg: &LaneConfig) -> Header {
    let u: f64 = r.random();
    let v: f64 = r.random();
    let z: f64 = r.sample(StandardNormal);
    Header {
        swerve: u < p_swerve,
        ramp_start: cfg.ramp_start_min + (cfg.ramp_start_max - cfg.ramp_start_min) * v,
        speed: cfg.speed_mean + cfg.speed_sigma * z,
    }
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

fn check_lane(p_swerve: f64, sample_rate: f64, cfg: &LaneConfig) -> Result<usize> {
    if !(0.0..=1.0).contains(&p_swerve) {
        return Err(Error::range("p_swerve", p_swerve, "must lie in [0, 1]"));
    }
    if !(cfg.ramp_start_min <= cfg.ramp_start_max) || !(cfg.ramp_secs > 0.0) || !(cfg.jitter_sigma >= 0.0) {
        return Err(Error::Config("inconsistent lane generator constants".into()));
    }
    Ok(grid_steps(cfg.duration_secs, sample_rate)? + 1)
}

/// `n` lane-keeping scenarios. With probability `p_swerve` a scenario changes
/// lanes by `lane_width` along a smoothstep ramp; its mode label is the final
/// lane (0 or 1). Context is the scenario's speed.
pub fn gen_lane_trajectories(
    n: usize,
    p_swerve: f64,
    sample_rate: f64,
    cfg: &LaneConfig,
    rng: RngSpec,
    source: &str,
) -> Result<LaneData> {
    let len = check_lane(p_swerve, sample_rate, cfg)?;
    let source: Arc<str> = Arc::from(source);
    let jitter = Normal::new(0.0, cfg.jitter_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let made: Vec<(Scenario, bool)> = rng
        .par_blocks(n, |_, i| {
            let mut r = rng.child(i as u64).rng();
            let h = header(&mut r, p_swerve, cfg);
            let positions: Vec<Point> = (0..len)
                .map(|k| {
                    let t = k as f64 / sample_rate;
                    let ramp = if h.swerve {
                        cfg.lane_width * smoothstep((t - h.ramp_start) / cfg.ramp_secs)
                    } else {
                        0.0
                    };
                    [h.speed * t, ramp + jitter.sample(&mut r)]
                })
                .collect();
            let scenario = Scenario {
                id: ScenarioId {
                    source: source.clone(),
                    index: i,
                },
                trajectory: Trajectory::new(positions, sample_rate).expect("finite samples"),
                context: EnvironmentContext::new(vec![Some(h.speed)]),
                mode_label: Some(h.swerve as i64),
            };
            (scenario, h.swerve)
        });
    let (scenarios, swerved): (Vec<_>, Vec<_>) = made.into_iter().unzip();
    Ok(LaneData {
        dataset: Dataset::new(Role::Train, scenarios)?,
        swerved,
    })
}

/// The swerve indicators [`gen_lane_trajectories`] would produce, without
/// building trajectories.
pub fn swerve_events(n: usize, p_swerve: f64, cfg: &LaneConfig, rng: RngSpec) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&p_swerve) {
        return Err(Error::range("p_swerve", p_swerve, "must lie in [0, 1]"));
    }
    Ok(rng.par_blocks(n, |_, i| header(&mut rng.child(i as u64).rng(), p_swerve, cfg).swerve))
}
