//! Small experiment configurations and scenario files for end-to-end runs.
#![allow(dead_code)]

use std::path::Path;

use tailcal::config::{Config, ExperimentKind};
use tailcal::experiment::{run_experiment, RunOutput};
use tailcal::ingest::{write_scenarios, IngestSchema};
use tailcal::rng::RngSpec;
use tailcal::synth::{gen_lane_trajectories, LaneConfig};

pub const LANE_RATE: f64 = 25.0;

pub fn lane_schema() -> IngestSchema {
    IngestSchema {
        features: vec!["speed".into()],
        mode_column: Some("lane".into()),
        sample_rate: LANE_RATE,
        ..IngestSchema::default()
    }
}

/// Writes `train.csv` (400 scenarios) and `test.csv` (100) of synthetic lane
/// keeping with 30% swerves into `dir`.
pub fn write_lane_files(dir: &Path) {
    let schema = lane_schema();
    let lane = LaneConfig::default();
    for (name, n, stream) in [("train.csv", 400, 1), ("test.csv", 100, 2)] {
        let data = gen_lane_trajectories(n, 0.3, LANE_RATE, &lane, RngSpec::new(99, stream), name).unwrap();
        std::fs::write(dir.join(name), write_scenarios(&data.dataset, &schema).unwrap()).unwrap();
    }
}

const SCHEMA: &str = r#"
[schema]
features = ["speed"]
mode_column = "lane"
sample_rate = 25.0
"#;

/// Reduced-size configuration text for `kind`. Data paths are relative to
/// the config file, which callers place next to the lane files.
pub fn small_config(kind: ExperimentKind) -> String {
    let body = match kind {
        ExperimentKind::GaussianAudit => "[synthetic]\nn_train = 2000\nn_test = 50000\n".to_string(),
        ExperimentKind::GmmAudit => {
            "[synthetic]\nn_train = 2000\nn_test = 50000\n[gmm]\ncomponents = [2]\nrestarts = 2\nmc_samples = 100000\n"
                .to_string()
        }
        ExperimentKind::QuantileAudit => "[synthetic]\nn_test = 50000\n[quantile]\nn_train = 5000\n".to_string(),
        ExperimentKind::QuantileScaling => {
            "[synthetic]\nn_test = 50000\n[quantile]\nscaling_n_train = [300, 1000, 3000]\n".to_string()
        }
        ExperimentKind::ScenarioOpt => "[scenario]\nrepetitions = 10\nmc_samples = 20000\n".to_string(),
        ExperimentKind::HmmIntervals => "[hmm]\ndeltas = [1e-8, 1e-2]\n".to_string(),
        ExperimentKind::IngestAudit => format!(
            "[data]\ntrain = \"train.csv\"\ntest = \"test.csv\"\n[calibration]\nwindow_secs = 2.0\n[audit]\nmodels = [\"gaussian\", \"noisy_rational\", \"quantile_tube\", \"scenario_hull\"]\n{SCHEMA}"
        ),
        ExperimentKind::Ingest => format!("[data]\ninput = \"train.csv\"\n{SCHEMA}"),
        ExperimentKind::ExportTube => {
            format!("[data]\ntrain = \"train.csv\"\n[export]\nlevels = [0.0, 1.0, 5.0]\nmode_label = 1\nhorizon_secs = 4.0\n{SCHEMA}")
        }
    };
    format!("[experiment]\nseed = 7\n{body}")
}

pub const ALL_KINDS: [ExperimentKind; 9] = [
    ExperimentKind::GaussianAudit,
    ExperimentKind::GmmAudit,
    ExperimentKind::QuantileAudit,
    ExperimentKind::QuantileScaling,
    ExperimentKind::ScenarioOpt,
    ExperimentKind::HmmIntervals,
    ExperimentKind::IngestAudit,
    ExperimentKind::Ingest,
    ExperimentKind::ExportTube,
];

/// Writes the config for `kind` into `dir` and runs it on a pool of
/// `threads` workers.
pub fn run_in_pool(dir: &Path, kind: ExperimentKind, threads: usize) -> RunOutput {
    let path = dir.join(format!("{}.toml", kind.name()));
    std::fs::write(&path, small_config(kind)).unwrap();
    let (cfg, text) = Config::load(&path).unwrap();
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| run_experiment(kind, &cfg, &text))
        .unwrap_or_else(|e| panic!("{}: {e}", kind.name()))
}
