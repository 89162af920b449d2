use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::logs::LogSet;
use crate::error::{Error, Result};
use crate::target::FusionMode;

/// `sqrt(mean(e²))`; an empty window is an error rather than NaN.
pub fn rmse(errors: impl IntoIterator<Item = f64>) -> Result<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for e in errors {
        n += 1;
        sum += e * e;
    }
    if n == 0 {
        return Err(Error::EmptyWindow("no samples in the metric window".into()));
    }
    Ok((sum / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModeCounts {
    pub direct: u64,
    pub indirect: u64,
    pub none: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub steps: u64,
    pub window_start: f64,
    /// RMSE over all ordered pairs, per estimator kind.
    pub relative_rmse: BTreeMap<String, f64>,
    /// RMSE per estimator kind and ordered pair `i-j`.
    pub relative_rmse_pairs: BTreeMap<String, BTreeMap<String, f64>>,
    pub target_est_rmse: BTreeMap<String, f64>,
    pub target_meas_rmse: BTreeMap<String, f64>,
    pub mode_counts: BTreeMap<String, ModeCounts>,
    pub radius_error_rms: f64,
    pub radius_error_max: f64,
    pub yaw_error_max: f64,
    pub final_phase_gaps: Vec<f64>,
    pub numerical_failures: u64,
}

/// Sorted cyclic gaps between the given phases; a single phase has gap 2π.
pub fn phase_gaps(thetas: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = thetas.iter().map(|th| th.rem_euclid(TAU)).collect();
    t.sort_by(f64::total_cmp);
    if t.len() < 2 {
        return if t.is_empty() { Vec::new() } else { vec![TAU] };
    }
    let mut gaps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.push(t[0] + TAU - t[t.len() - 1]);
    gaps
}

/// Per step `(k, t, gaps)` from the logged phases of agents with a phase.
pub fn phase_gap_series(logs: &LogSet) -> Vec<(u64, f64, Vec<f64>)> {
    let mut by_step: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for r in &logs.control {
        let e = by_step.entry(r.k).or_insert((r.t, Vec::new()));
        if let Some(th) = r.theta {
            e.1.push(th);
        }
    }
    by_step
        .into_iter()
        .map(|(k, (t, th))| (k, t, phase_gaps(&th)))
        .collect()
}

fn max_or_zero(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

pub fn compute_metrics(logs: &LogSet, window_start: f64) -> Result<RunMetrics> {
    let in_window = |t: f64| t >= window_start - 1e-9;

    let mut rel: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in logs.relative.iter().filter(|r| in_window(r.t)) {
        rel.entry(r.estimator.clone())
            .or_default()
            .entry(format!("{}-{}", r.agent, r.neighbor))
            .or_default()
            .push(r.error);
    }
    let mut relative_rmse = BTreeMap::new();
    let mut relative_rmse_pairs = BTreeMap::new();
    for (kind, pairs) in &rel {
        relative_rmse.insert(kind.clone(), rmse(pairs.values().flatten().copied())?);
        let mut per = BTreeMap::new();
        for (pair, errs) in pairs {
            per.insert(pair.clone(), rmse(errs.iter().copied())?);
        }
        relative_rmse_pairs.insert(kind.clone(), per);
    }

    let mut est: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut meas: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut mode_counts: BTreeMap<String, ModeCounts> = BTreeMap::new();
    let mut numerical_failures = 0;
    for r in &logs.target {
        let c = mode_counts.entry(r.agent.to_string()).or_default();
        match r.mode {
            FusionMode::Direct => c.direct += 1,
            FusionMode::Indirect => c.indirect += 1,
            FusionMode::None => c.none += 1,
        }
        numerical_failures += u64::from(r.numerical_failure);
        if in_window(r.t) {
            if let Some(e) = r.est_error {
                est.entry(r.agent.to_string()).or_default().push(e);
            }
            if let Some(e) = r.meas_error {
                meas.entry(r.agent.to_string()).or_default().push(e);
            }
        }
    }
    let target_est_rmse = est
        .into_iter()
        .map(|(a, e)| Ok((a, rmse(e)?)))
        .collect::<Result<_>>()?;
    let target_meas_rmse = meas
        .into_iter()
        .map(|(a, e)| Ok((a, rmse(e)?)))
        .collect::<Result<_>>()?;

    let window: Vec<_> = logs.control.iter().filter(|r| in_window(r.t)).collect();
    let radius_error_rms = rmse(window.iter().map(|r| r.radius_error))?;
    let radius_error_max = max_or_zero(window.iter().map(|r| r.radius_error.abs()));
    let yaw_error_max = max_or_zero(window.iter().map(|r| r.yaw_error.abs()));
    let final_phase_gaps = phase_gap_series(logs)
        .pop()
        .map(|(_, _, g)| g)
        .unwrap_or_default();
    let steps = logs.trajectory.iter().map(|r| r.k + 1).max().unwrap_or(0);

    Ok(RunMetrics {
        steps,
        window_start,
        relative_rmse,
        relative_rmse_pairs,
        target_est_rmse,
        target_meas_rmse,
        mode_counts,
        radius_error_rms,
        radius_error_max,
        yaw_error_max,
        final_phase_gaps,
        numerical_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert!((rmse([0.5; 7]).unwrap() - 0.5).abs() < 1e-15);
        assert!((rmse([3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((rmse([3.0, 4.0]).unwrap() - 3.5355).abs() < 1e-4);
        assert!(matches!(
            rmse(std::iter::empty()),
            Err(Error::EmptyWindow(_))
        ));
    }

    #[test]
    fn gaps() {
        let g = phase_gaps(&[0.0, TAU / 3.0, 2.0 * TAU / 3.0]);
        assert!(g.iter().all(|x| (x - TAU / 3.0).abs() < 1e-12));
        let g = phase_gaps(&[6.0, 0.5]);
        assert!((g.iter().sum::<f64>() - TAU).abs() < 1e-12);
        assert!((g[0] - 5.5).abs() < 1e-12);
    }
}
