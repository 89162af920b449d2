//! Scenario configuration, the per-step simulation pipeline, logs and metrics.

mod builtin;
mod config;
pub mod logs;
mod metrics;
mod runner;

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

pub use builtin::{builtin, builtin_description, BUILTIN_NAMES};
pub use config::{
    AgentInit, CommsConfig, EstimatorSettings, OutputConfig, ScenarioConfig, SensorConfig,
    TargetInit, WorldConfig, SCHEMA_VERSION,
};
pub use logs::LogSet;
pub use metrics::{compute_metrics, phase_gap_series, phase_gaps, rmse, ModeCounts, RunMetrics};
pub use runner::{run_scenario, RunOutput, Simulation};

use crate::error::{Error, Result};
use crate::relative::EstimatorKind;

/// Runs, writes the CSV logs and `metrics.json` into `dir`, and returns the metrics.
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path) -> Result<RunMetrics> {
    let out = run_scenario(cfg)?;
    out.logs.write(dir)?;
    let metrics = compute_metrics(&out.logs, cfg.output.window_start)?;
    write_json(&dir.join(logs::METRICS_FILE), &metrics)?;
    Ok(metrics)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRmse {
    pub seed: u64,
    pub rmse: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorComparison {
    pub trials: Vec<TrialRmse>,
    /// Mean over trials of each estimator's RMSE.
    pub mean: BTreeMap<String, f64>,
}

impl EstimatorComparison {
    pub fn mean_of(&self, kind: EstimatorKind) -> Option<f64> {
        self.mean.get(kind.as_str()).copied()
    }
}

/// Seed used for trial `n` of a comparison starting from `base`.
pub fn trial_seed(base: u64, n: u64) -> u64 {
    base.wrapping_add(n)
}

/// Runs `trials` seeded copies of `cfg` and averages each estimator's RMSE
/// over the metric window.
pub fn compare_estimators(cfg: &ScenarioConfig, trials: u64) -> Result<EstimatorComparison> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    let mut rows = Vec::new();
    for n in 0..trials {
        let mut c = cfg.clone();
        c.seed = trial_seed(cfg.seed, n);
        let out = run_scenario(&c)?;
        let m = compute_metrics(&out.logs, c.output.window_start)?;
        rows.push(TrialRmse {
            seed: c.seed,
            rmse: m.relative_rmse,
        });
    }
    let mut mean = BTreeMap::new();
    for kind in EstimatorKind::ALL {
        let vals: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.rmse.get(kind.as_str()).copied())
            .collect();
        if !vals.is_empty() {
            mean.insert(
                kind.as_str().to_string(),
                vals.iter().sum::<f64>() / vals.len() as f64,
            );
        }
    }
    Ok(EstimatorComparison { trials: rows, mean })
}
