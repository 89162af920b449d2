//! Inter-agent relative state estimation from UWB range and VIO displacement.
//!
//! The state is `x_ij = [p_ij; v_ij]` with `p_ij = p_i − p_j`. Each step builds
//! the pseudo-measurement
//!
//! ```text
//! y  = ½ (d_k² − d_{k−1}² ± ‖δ_ij‖²)      ≈ δ_ijᵀ p_ij
//! ξ  = δ_ij + Δt² u_ij,k−1                 = Δt v_ij
//! ```
//!
//! and runs a Kalman correction with the measured `δ_ij` inside `H`. The
//! modified filter inflates the variance of `y` by `tanh(a k) · p̄ᵀ Σ_δ p̄` to
//! account for the noise that `δ_ij` injects into `H`; the classical filter
//! keeps the base covariance. A forgetting-factor RLS on the position block is
//! provided as a third baseline.

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    diag2, diag4, input_matrix, position, spd_inverse, symmetrize, transition, velocity, Mat2,
    Mat4, Vec2, Vec4,
};

/// Which identity turns the two squared ranges into the `y` pseudo-measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SquaredRangeForm {
    /// `½(d_k² − d_{k−1}² − ‖δ‖²)`, which equals `δᵀ p_{k−1}`.
    SubtractDisplacement,
    /// `½(d_k² − d_{k−1}² + ‖δ‖²)`, which equals `δᵀ p_k` and matches `H x_k`.
    #[default]
    AddDisplacement,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    #[default]
    Modified,
    Classical,
    Rls,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [Self::Modified, Self::Classical, Self::Rls];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Modified => "modified",
            Self::Classical => "classical",
            Self::Rls => "rls",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeEstimate {
    pub x: Vec4,
    pub p: Mat4,
}

impl RelativeEstimate {
    pub fn new(x: Vec4, p: Mat4) -> Self {
        Self { x, p }
    }

    pub fn position(&self) -> Vec2 {
        position(&self.x)
    }

    pub fn velocity(&self) -> Vec2 {
        velocity(&self.x)
    }

    pub fn position_cov(&self) -> Mat2 {
        self.p.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementBundle {
    pub z: Vector3<f64>,
    pub h: Matrix3x4<f64>,
    pub sigma: Matrix3<f64>,
}

/// Runtime parameters shared by the Kalman variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub q: Mat4,
    pub sigma_star: Matrix3<f64>,
    pub sigma_delta: Mat2,
    /// Rate `a` of the tanh schedule, in (0, 1).
    pub tanh_rate: f64,
    pub dt: f64,
    pub form: SquaredRangeForm,
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tanh_rate > 0.0 && self.tanh_rate < 1.0) {
            return Err(Error::Config(format!(
                "tanh rate must be in (0,1), got {}",
                self.tanh_rate
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be > 0".into()));
        }
        Ok(())
    }
}

/// Serialisable diagonal parameters for the relative filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelativeParams {
    pub q_diag: [f64; 4],
    pub sigma_star_diag: [f64; 3],
    pub sigma_delta_diag: [f64; 2],
    pub tanh_rate: f64,
    pub initial_cov_diag: [f64; 4],
    pub rls_forgetting: f64,
    pub rls_initial_cov: f64,
    #[serde(default)]
    pub range_form: SquaredRangeForm,
}

impl Default for RelativeParams {
    fn default() -> Self {
        Self {
            q_diag: [0.0002; 4],
            sigma_star_diag: [0.025, 0.002, 0.002],
            sigma_delta_diag: [0.002, 0.002],
            tanh_rate: 0.05,
            initial_cov_diag: [25.0, 25.0, 1.0, 1.0],
            rls_forgetting: 0.98,
            rls_initial_cov: 25.0,
            range_form: SquaredRangeForm::AddDisplacement,
        }
    }
}

impl RelativeParams {
    pub fn estimator_config(&self, dt: f64) -> EstimatorConfig {
        EstimatorConfig {
            q: diag4(self.q_diag),
            sigma_star: Matrix3::from_diagonal(&Vector3::from(self.sigma_star_diag)),
            sigma_delta: diag2(self.sigma_delta_diag),
            tanh_rate: self.tanh_rate,
            dt,
            form: self.range_form,
        }
    }

    pub fn initial_estimate(&self) -> RelativeEstimate {
        RelativeEstimate::new(Vec4::zeros(), diag4(self.initial_cov_diag))
    }
}

/// Inputs of one relative-filter step, all from step `k` except the control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeInputs {
    pub d_k: f64,
    pub d_km1: f64,
    pub delta_ij: Vec2,
    pub u_ij_km1: Vec2,
}

pub fn build_measurement(
    d_k: f64,
    d_km1: f64,
    delta_ij: Vec2,
    u_ij_km1: Vec2,
    cfg: &EstimatorConfig,
) -> Result<(f64, Vec2, Matrix3x4<f64>)> {
    if !(d_k >= 0.0) || !(d_km1 >= 0.0) {
        return Err(Error::InvalidMeasurement(format!(
            "ranges must be non-negative: d_k={d_k}, d_km1={d_km1}"
        )));
    }
    let sq = delta_ij.norm_squared();
    let y = match cfg.form {
        SquaredRangeForm::SubtractDisplacement => 0.5 * (d_k * d_k - d_km1 * d_km1 - sq),
        SquaredRangeForm::AddDisplacement => 0.5 * (d_k * d_k - d_km1 * d_km1 + sq),
    };
    let dt = cfg.dt;
    let xi = delta_ij + u_ij_km1 * (dt * dt);
    let mut h = Matrix3x4::zeros();
    h[(0, 0)] = delta_ij.x;
    h[(0, 1)] = delta_ij.y;
    h[(1, 2)] = dt;
    h[(2, 3)] = dt;
    Ok((y, xi, h))
}

/// `tanh(a k) · diag[p̄ᵀ Σ_δ p̄, 0, 0] + Σ*`.
pub fn measurement_covariance(p_bar: Vec2, k: u64, cfg: &EstimatorConfig) -> Matrix3<f64> {
    let weight = (cfg.tanh_rate * k as f64).tanh();
    let mut sigma = cfg.sigma_star;
    sigma[(0, 0)] += weight * (p_bar.transpose() * cfg.sigma_delta * p_bar)[(0, 0)];
    sigma
}

pub fn predict(est: &RelativeEstimate, u_ij_km1: Vec2, cfg: &EstimatorConfig) -> RelativeEstimate {
    let a = transition(cfg.dt);
    RelativeEstimate {
        x: a * est.x + input_matrix(cfg.dt) * u_ij_km1,
        p: symmetrize(&(a * est.p * a.transpose() + cfg.q)),
    }
}

/// Kalman correction with the Joseph-form covariance update.
pub fn correct(est: &RelativeEstimate, m: &MeasurementBundle) -> Result<RelativeEstimate> {
    let s = m.h * est.p * m.h.transpose() + m.sigma;
    let s_inv = spd_inverse(&s)?;
    let gain = est.p * m.h.transpose() * s_inv;
    let x = est.x + gain * (m.z - m.h * est.x);
    let ikh = Mat4::identity() - gain * m.h;
    let p = ikh * est.p * ikh.transpose() + gain * m.sigma * gain.transpose();
    if !x.iter().all(|v| v.is_finite()) || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalFailure(
            "non-finite relative estimate".into(),
        ));
    }
    Ok(RelativeEstimate {
        x,
        p: symmetrize(&p),
    })
}

fn step_kf(
    est: &RelativeEstimate,
    inputs: &RelativeInputs,
    k: u64,
    cfg: &EstimatorConfig,
    inflate: bool,
) -> Result<RelativeEstimate> {
    let prior = predict(est, inputs.u_ij_km1, cfg);
    let (y, xi, h) = build_measurement(
        inputs.d_k,
        inputs.d_km1,
        inputs.delta_ij,
        inputs.u_ij_km1,
        cfg,
    )?;
    let sigma = if inflate {
        measurement_covariance(prior.position(), k, cfg)
    } else {
        cfg.sigma_star
    };
    correct(
        &prior,
        &MeasurementBundle {
            z: Vector3::new(y, xi.x, xi.y),
            h,
            sigma,
        },
    )
}

/// Predict, build `z`, inflate the `y` variance around the prior position, correct.
pub fn step_modified_kf(
    est: &RelativeEstimate,
    inputs: &RelativeInputs,
    k: u64,
    cfg: &EstimatorConfig,
) -> Result<RelativeEstimate> {
    step_kf(est, inputs, k, cfg, true)
}

/// Same pipeline with the measurement covariance fixed at `Σ*`.
pub fn step_classical_kf(
    est: &RelativeEstimate,
    inputs: &RelativeInputs,
    k: u64,
    cfg: &EstimatorConfig,
) -> Result<RelativeEstimate> {
    step_kf(est, inputs, k, cfg, false)
}

/// Exponentially forgetting least squares on `y = δᵀ p`, with the position
/// carried forward by the measured relative displacement between updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlsEstimator {
    pub p_hat: Vec2,
    pub cov: Mat2,
    pub forgetting: f64,
}

impl RlsEstimator {
    pub fn new(p0: Vec2, initial_cov: f64, forgetting: f64) -> Result<Self> {
        if !(forgetting > 0.0 && forgetting <= 1.0) {
            return Err(Error::Config(format!(
                "forgetting must be in (0,1], got {forgetting}"
            )));
        }
        Ok(Self {
            p_hat: p0,
            cov: Mat2::identity() * initial_cov,
            forgetting,
        })
    }

    pub fn propagate(&mut self, delta_ij: Vec2) {
        self.p_hat += delta_ij;
    }

    /// Standard RLS update; returns false when the gain denominator is degenerate.
    pub fn update(&mut self, phi: Vec2, y: f64) -> bool {
        let p_phi = self.cov * phi;
        let denom = self.forgetting + phi.dot(&p_phi);
        if !(denom.abs() > 1e-12) || !denom.is_finite() {
            return false;
        }
        let gain = p_phi / denom;
        self.p_hat += gain * (y - phi.dot(&self.p_hat));
        self.cov = symmetrize(&((self.cov - gain * p_phi.transpose()) / self.forgetting));
        true
    }

    pub fn step(&mut self, inputs: &RelativeInputs, cfg: &EstimatorConfig) -> Result<Vec2> {
        let (y, _, _) = build_measurement(
            inputs.d_k,
            inputs.d_km1,
            inputs.delta_ij,
            inputs.u_ij_km1,
            cfg,
        )?;
        self.propagate(inputs.delta_ij);
        self.update(inputs.delta_ij, y);
        Ok(self.p_hat)
    }
}

/// One relative estimator of any kind, as held by agent `i` for neighbour `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairEstimator {
    Kalman {
        est: RelativeEstimate,
        inflate: bool,
    },
    Rls(RlsEstimator),
}

impl PairEstimator {
    pub fn new(kind: EstimatorKind, params: &RelativeParams) -> Result<Self> {
        Ok(match kind {
            EstimatorKind::Modified => PairEstimator::Kalman {
                est: params.initial_estimate(),
                inflate: true,
            },
            EstimatorKind::Classical => PairEstimator::Kalman {
                est: params.initial_estimate(),
                inflate: false,
            },
            EstimatorKind::Rls => PairEstimator::Rls(RlsEstimator::new(
                Vec2::zeros(),
                params.rls_initial_cov,
                params.rls_forgetting,
            )?),
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        match self {
            PairEstimator::Kalman { inflate: true, .. } => EstimatorKind::Modified,
            PairEstimator::Kalman { inflate: false, .. } => EstimatorKind::Classical,
            PairEstimator::Rls(_) => EstimatorKind::Rls,
        }
    }

    /// Full step. On a numerical failure the state is left at the prediction
    /// and the error is returned for logging.
    pub fn step(&mut self, inputs: &RelativeInputs, k: u64, cfg: &EstimatorConfig) -> Result<()> {
        match self {
            PairEstimator::Kalman { est, inflate } => {
                match step_kf(est, inputs, k, cfg, *inflate) {
                    Ok(next) => {
                        *est = next;
                        Ok(())
                    }
                    Err(e) => {
                        *est = predict(est, inputs.u_ij_km1, cfg);
                        Err(e)
                    }
                }
            }
            PairEstimator::Rls(r) => r.step(inputs, cfg).map(|_| ()),
        }
    }

    /// Time update only, used when a neighbour's inputs for this step are missing.
    pub fn predict_only(&mut self, u_ij_km1: Vec2, cfg: &EstimatorConfig) {
        match self {
            PairEstimator::Kalman { est, .. } => *est = predict(est, u_ij_km1, cfg),
            PairEstimator::Rls(_) => {}
        }
    }

    pub fn position(&self) -> Vec2 {
        match self {
            PairEstimator::Kalman { est, .. } => est.position(),
            PairEstimator::Rls(r) => r.p_hat,
        }
    }

    pub fn velocity(&self) -> Option<Vec2> {
        match self {
            PairEstimator::Kalman { est, .. } => Some(est.velocity()),
            PairEstimator::Rls(_) => None,
        }
    }

    pub fn estimate(&self) -> Option<&RelativeEstimate> {
        match self {
            PairEstimator::Kalman { est, .. } => Some(est),
            PairEstimator::Rls(_) => None,
        }
    }

    pub fn covariance_trace(&self) -> f64 {
        match self {
            PairEstimator::Kalman { est, .. } => est.p.trace(),
            PairEstimator::Rls(r) => r.cov.trace(),
        }
    }
}
