//! Experiment configuration, read from TOML (`key = value` lines grouped
//! under `[section]` headers). Every section and key is optional; omitted
//! values take the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{DeltaGrid, DeltaMinRule};
use crate::error::{Error, Result};
use crate::ingest::IngestSchema;
use crate::models::{EmConfig, RegionMode};
use crate::rng::RngSpec;
use crate::synth::{ModeDistribution, ModeSpec, NoiseKind};
use crate::trajectory::PruningConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GaussianAudit,
    GmmAudit,
    QuantileAudit,
    QuantileScaling,
    ScenarioOpt,
    HmmIntervals,
    IngestAudit,
    Ingest,
    ExportTube,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::GaussianAudit => "gaussian_audit",
            ExperimentKind::GmmAudit => "gmm_audit",
            ExperimentKind::QuantileAudit => "quantile_audit",
            ExperimentKind::QuantileScaling => "quantile_scaling",
            ExperimentKind::ScenarioOpt => "scenario_opt",
            ExperimentKind::HmmIntervals => "hmm_intervals",
            ExperimentKind::IngestAudit => "ingest_audit",
            ExperimentKind::Ingest => "ingest",
            ExperimentKind::ExportTube => "export_tube",
        }
    }
}

/// Model classes an audit can fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gaussian,
    NoisyRational,
    Gmm,
    QuantileTube,
    ScenarioHull,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Gaussian => "gaussian",
            ModelKind::NoisyRational => "noisy_rational",
            ModelKind::Gmm => "gmm",
            ModelKind::QuantileTube => "quantile_tube",
            ModelKind::ScenarioHull => "scenario_hull",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: Option<ExperimentKind>,
    pub seed: u64,
    pub stream: u64,
    pub output_dir: PathBuf,
    pub quick: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            kind: None,
            seed: 0,
            stream: 0,
            output_dir: PathBuf::from("tailcal-out"),
            quick: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    /// Strictly decreasing δ values; the half-decade grid from 1e-1 to 1e-8
    /// when omitted.
    pub grid: Option<Vec<f64>>,
    /// Evaluated part of each action in seconds; the whole action when
    /// omitted.
    pub window_secs: Option<f64>,
    pub eta: f64,
    pub delta_min_rule: DeltaMinRule,
    pub region_mode: RegionMode,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            grid: None,
            window_secs: None,
            eta: 0.5,
            delta_min_rule: DeltaMinRule::MonotonePrefix,
            region_mode: RegionMode::PerStep,
        }
    }
}

impl CalibrationSection {
    pub fn grid(&self) -> Result<DeltaGrid> {
        match &self.grid {
            Some(g) => DeltaGrid::new(g.clone()).map_err(|e| Error::Config(format!("calibration.grid: {e}"))),
            None => Ok(DeltaGrid::standard()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub n_train: usize,
    pub n_test: usize,
    /// Test-set size under `--quick`.
    pub quick_n_test: usize,
    pub mean: [f64; 2],
    /// Row-major 2×2 covariance.
    pub cov: [f64; 4],
    pub noise_frac: f64,
    pub generators: Vec<NoiseKind>,
    pub models: Vec<ModelKind>,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            n_train: 10_000,
            n_test: 10_000_000,
            quick_n_test: 100_000,
            mean: [0.0, 0.0],
            cov: [1.0, 0.0, 0.0, 1.0],
            noise_frac: 0.3,
            generators: vec![NoiseKind::None, NoiseKind::Uniform, NoiseKind::SymmetricNonuniform],
            models: vec![ModelKind::Gaussian, ModelKind::NoisyRational],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmSection {
    pub components: Vec<usize>,
    pub generator: NoiseKind,
    pub mc_samples: usize,
    pub quick_mc_samples: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
    pub cov_floor: f64,
}

impl GmmSection {
    pub fn em(&self) -> EmConfig {
        EmConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            restarts: self.restarts,
            cov_floor: self.cov_floor,
        }
    }
}

impl Default for GmmSection {
    fn default() -> Self {
        let em = EmConfig::default();
        Self {
            components: vec![2, 3, 4],
            generator: NoiseKind::SymmetricNonuniform,
            mc_samples: 1_000_000,
            quick_mc_samples: 100_000,
            max_iter: em.max_iter,
            tol: em.tol,
            restarts: em.restarts,
            cov_floor: em.cov_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantileSection {
    pub n_train: usize,
    pub generator: NoiseKind,
    /// Training sizes for the scaling experiment.
    pub scaling_n_train: Vec<usize>,
    /// Targets reported through the scaling-fit extrapolation.
    pub extrapolate_deltas: Vec<f64>,
}

impl Default for QuantileSection {
    fn default() -> Self {
        Self {
            n_train: 1_000_000,
            generator: NoiseKind::None,
            scaling_n_train: (6..=12).map(|k| 10f64.powf(k as f64 / 2.0).round() as usize).collect(),
            extrapolate_deltas: vec![1e-5, 1e-6, 1e-7, 1e-8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub n_train: usize,
    pub repetitions: usize,
    pub beta: f64,
    pub mc_samples: usize,
    pub quick_mc_samples: usize,
    /// Sample counts for the bound table, each paired with `table_support`.
    pub table_n: Vec<u64>,
    pub table_support: u64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            n_train: 500,
            repetitions: 200,
            beta: 0.01,
            mc_samples: 1_000_000,
            quick_mc_samples: 100_000,
            table_n: vec![500, 1_000, 10_000, 40_000, 100_000, 1_000_000],
            table_support: 1,
        }
    }
}

/// Where a two-mode case takes its Gaussian mode parameters from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeEstimate {
    /// Maximum-likelihood fit to the generated points.
    #[default]
    Sample,
    /// Mean and variance of the generating distribution.
    Population,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmmCase {
    pub name: String,
    pub mode1: ModeSpec,
    pub mode2: ModeSpec,
    #[serde(default)]
    pub estimate: ModeEstimate,
    /// Range to partition; the pooled data range when omitted.
    pub range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmSection {
    pub deltas: Vec<f64>,
    pub grid: usize,
    pub cases: Vec<HmmCase>,
}

impl Default for HmmSection {
    fn default() -> Self {
        let mode = |distribution| ModeSpec {
            distribution,
            count: 1000,
        };
        Self {
            deltas: vec![1e-8],
            grid: 1000,
            cases: vec![
                HmmCase {
                    name: "gaussian".into(),
                    mode1: mode(ModeDistribution::Gaussian { mean: -1.0, sigma: 0.5 }),
                    mode2: mode(ModeDistribution::Gaussian { mean: 1.0, sigma: 0.5 }),
                    estimate: ModeEstimate::Population,
                    range: Some([-4.0, 4.0]),
                },
                HmmCase {
                    name: "uniform".into(),
                    mode1: mode(ModeDistribution::Uniform { lo: -2.0, hi: 1.0 }),
                    mode2: mode(ModeDistribution::Uniform { lo: -1.0, hi: 2.0 }),
                    estimate: ModeEstimate::Population,
                    range: Some([-2.0, 2.0]),
                },
            ],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Input of the `ingest` task.
    pub input: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub models: Vec<ModelKind>,
    /// Prefix/action split point in seconds.
    pub split_secs: f64,
    pub gmm_components: usize,
    pub gmm_mc_samples: usize,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Gaussian, ModelKind::QuantileTube],
            split_secs: 2.0,
            gmm_components: 2,
            gmm_mc_samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    /// σ multiples at which boundaries are emitted.
    pub levels: Vec<f64>,
    /// Fit only on training actions with this mode label.
    pub mode_label: Option<i64>,
    pub split_secs: f64,
    /// Length of the exported tube; the rest of the action when omitted.
    pub horizon_secs: Option<f64>,
}

impl Default for ExportSection {
    fn default() -> Self {
        Self {
            levels: vec![0.0, 1.0, 2.0, 5.0],
            mode_label: None,
            split_secs: 2.0,
            horizon_secs: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub experiment: ExperimentSection,
    pub calibration: CalibrationSection,
    pub synthetic: SyntheticSection,
    pub gmm: GmmSection,
    pub quantile: QuantileSection,
    pub scenario: ScenarioSection,
    pub hmm: HmmSection,
    pub data: DataSection,
    pub schema: IngestSchema,
    pub pruning: PruningConfig,
    pub audit: AuditSection,
    pub export: ExportSection,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and parses a config file. Relative data paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.data.input, &mut cfg.data.train, &mut cfg.data.test]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok((cfg, text))
    }

    pub fn rng(&self) -> RngSpec {
        RngSpec::new(self.experiment.seed, self.experiment.stream)
    }

    /// Test-set size after `--quick`.
    pub fn n_test(&self) -> usize {
        if self.experiment.quick {
            self.synthetic.n_test.min(self.synthetic.quick_n_test)
        } else {
            self.synthetic.n_test
        }
    }

    /// Checks everything the given experiment will read.
    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        if let Some(k) = self.experiment.kind {
            if k != kind {
                return Err(Error::Config(format!(
                    "config declares `{}` but `{}` was requested",
                    k.name(),
                    kind.name()
                )));
            }
        }
        self.calibration.grid()?;
        if !(self.calibration.eta > 0.0) {
            return Err(Error::Config("calibration.eta must be > 0".into()));
        }
        let need_path = |p: &Option<PathBuf>, key: &str| -> Result<()> {
            match p {
                None => Err(Error::Config(format!("data.{key} is required"))),
                Some(p) if !p.exists() => {
                    Err(Error::Config(format!("data.{key}: {} does not exist", p.display())))
                }
                Some(_) => Ok(()),
            }
        };
        match kind {
            ExperimentKind::GaussianAudit | ExperimentKind::GmmAudit | ExperimentKind::QuantileAudit
            | ExperimentKind::QuantileScaling => {
                if !(0.0..=1.0).contains(&self.synthetic.noise_frac) {
                    return Err(Error::Config("synthetic.noise_frac must lie in [0, 1]".into()));
                }
                if self.n_test() == 0 || self.synthetic.n_train < 3 {
                    return Err(Error::Config("synthetic sizes too small".into()));
                }
                crate::models::GaussianModel::new(self.synthetic.mean.to_vec(), self.synthetic.cov.to_vec())
                    .map_err(|e| Error::Config(format!("synthetic.cov: {e}")))?;
                if kind == ExperimentKind::GmmAudit && self.gmm.components.iter().any(|&k| k == 0) {
                    return Err(Error::Config("gmm.components must be >= 1".into()));
                }
                if kind == ExperimentKind::QuantileScaling && self.quantile.scaling_n_train.len() < 3 {
                    return Err(Error::Config("quantile.scaling_n_train needs at least 3 sizes".into()));
                }
            }
            ExperimentKind::ScenarioOpt => {
                let s = &self.scenario;
                if !(s.beta > 0.0 && s.beta < 1.0) {
                    return Err(Error::Config("scenario.beta must lie in (0, 1)".into()));
                }
                if s.n_train < 3 || s.repetitions == 0 || s.mc_samples == 0 {
                    return Err(Error::Config("scenario sizes too small".into()));
                }
            }
            ExperimentKind::HmmIntervals => {
                for c in &self.hmm.cases {
                    c.mode1.validate().map_err(cfg_err)?;
                    c.mode2.validate().map_err(cfg_err)?;
                }
                if self.hmm.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
                    return Err(Error::Config("hmm.deltas must lie in (0, 1)".into()));
                }
                if self.hmm.grid < 1000 {
                    return Err(Error::Config("hmm.grid must be >= 1000".into()));
                }
            }
            ExperimentKind::IngestAudit => {
                self.schema.validate()?;
                self.pruning.validate().map_err(cfg_err)?;
                need_path(&self.data.train, "train")?;
                need_path(&self.data.test, "test")?;
            }
            ExperimentKind::Ingest => {
                self.schema.validate()?;
                need_path(&self.data.input, "input")?;
            }
            ExperimentKind::ExportTube => {
                self.schema.validate()?;
                need_path(&self.data.train, "train")?;
                if self.export.levels.iter().any(|l| !(*l >= 0.0)) {
                    return Err(Error::Config("export.levels must be >= 0".into()));
                }
            }
        }
        Ok(())
    }
}
