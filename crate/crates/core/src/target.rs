//! Event-triggered distributed Kalman filter for the agent-target relative state.
//!
//! Agent `i` tracks `x_i0 = [p_i − p_0; v_i − v_0]`. When it sees the target it
//! uses its own stereo measurement; otherwise it averages the indirect
//! measurements `q_j0 + p̂_ij` of neighbours that do. The update is in
//! information form and adds a consensus pull toward neighbour priors
//! `x̄_j0 + x̂_ij`.

use nalgebra::Matrix2x4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    diag2, diag4, input_matrix, position, spd_inverse, stack, symmetrize, transition, Mat2, Mat4,
    Vec2, Vec4,
};
use crate::relative::RelativeEstimate;
use crate::world::AgentId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEstimate {
    pub x_hat: Vec4,
    pub p: Mat4,
}

impl TargetEstimate {
    pub fn position(&self) -> Vec2 {
        position(&self.x_hat)
    }
}

/// A predicted estimate `x̄`, `P⁻` as shared with neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetPrior {
    pub x_bar: Vec4,
    pub p_minus: Mat4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborPacket {
    pub sender: AgentId,
    /// Present only when the sender sees the target this step.
    pub q_j0: Option<Vec2>,
    pub sigma_q: Mat2,
    /// Absent until the sender's filter has been initialised.
    pub prior: Option<TargetPrior>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    Direct,
    Indirect,
    None,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Direct => "direct",
            FusionMode::Indirect => "indirect",
            FusionMode::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedMeasurement {
    pub z: Vec2,
    pub sigma: Mat2,
    pub mode: FusionMode,
}

impl FusedMeasurement {
    pub const NONE: FusedMeasurement = FusedMeasurement {
        z: Vec2::new(0.0, 0.0),
        sigma: Mat2::new(0.0, 0.0, 0.0, 0.0),
        mode: FusionMode::None,
    };
}

/// `C = [I 0]`.
pub fn output_matrix() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

/// `z = q_j0 + p̂_ij`, `Σ = Σ_q + C P_ij Cᵀ`.
pub fn indirect_measurement(pkt: &NeighborPacket, rel: &RelativeEstimate) -> Result<(Vec2, Mat2)> {
    let q = pkt.q_j0.ok_or_else(|| {
        Error::Precondition(format!("agent {} has no target measurement", pkt.sender))
    })?;
    Ok((q + rel.position(), pkt.sigma_q + rel.position_cov()))
}

/// Own measurement if present, otherwise the mean of the indirect measurements
/// with covariance `(1/|O|²) Σ Σ_j`. Packets without a matching relative
/// estimate are skipped.
pub fn fuse_event_triggered<'a>(
    own: Option<(Vec2, Mat2)>,
    packets: impl IntoIterator<Item = (&'a NeighborPacket, &'a RelativeEstimate)>,
) -> FusedMeasurement {
    if let Some((z, sigma)) = own {
        return FusedMeasurement {
            z,
            sigma,
            mode: FusionMode::Direct,
        };
    }
    let mut n = 0usize;
    let mut z_sum = Vec2::zeros();
    let mut s_sum = Mat2::zeros();
    for (pkt, rel) in packets {
        if let Ok((z, s)) = indirect_measurement(pkt, rel) {
            n += 1;
            z_sum += z;
            s_sum += s;
        }
    }
    if n == 0 {
        return FusedMeasurement::NONE;
    }
    let nf = n as f64;
    FusedMeasurement {
        z: z_sum / nf,
        sigma: s_sum / (nf * nf),
        mode: FusionMode::Indirect,
    }
}

pub fn dkf_predict(est: &TargetEstimate, u_i_km1: Vec2, q_i0: &Mat4, dt: f64) -> TargetPrior {
    let a = transition(dt);
    TargetPrior {
        x_bar: a * est.x_hat + input_matrix(dt) * u_i_km1,
        p_minus: symmetrize(&(a * est.p * a.transpose() + q_i0)),
    }
}

/// `x̄ʲ_i0 = x̄_j0 + x̂_ij`, `Pʲ = P⁻_j0 + P⁺_ij`.
pub fn neighbor_prior(prior: &TargetPrior, rel: &RelativeEstimate) -> TargetPrior {
    TargetPrior {
        x_bar: prior.x_bar + rel.x,
        p_minus: symmetrize(&(prior.p_minus + rel.p)),
    }
}

/// Information-form update with consensus.
///
/// ```text
/// P⁺⁻¹ = P⁻⁻¹ + CᵀΣ⁻¹C + Σ_j Pʲ⁻¹
/// x̂    = x̄ + P⁺CᵀΣ⁻¹(z − Cx̄) + ε P⁺ Σ_j Pʲ⁻¹ (x̄ʲ − x̄)
/// ```
///
/// With `mode = none` the measurement terms are dropped.
pub fn dkf_update(
    prior: &TargetPrior,
    fused: &FusedMeasurement,
    neighbours: &[TargetPrior],
    epsilon: f64,
) -> Result<TargetEstimate> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!(
            "consensus gain must be in (0,1), got {epsilon}"
        )));
    }
    let c = output_matrix();
    let mut info = spd_inverse(&prior.p_minus)?;
    let mut meas_info: Option<Mat2> = None;
    if fused.mode != FusionMode::None {
        let s_inv = spd_inverse(&fused.sigma)?;
        info += c.transpose() * s_inv * c;
        meas_info = Some(s_inv);
    }
    let mut consensus = Vec4::zeros();
    for nb in neighbours {
        let pj_inv = spd_inverse(&nb.p_minus)?;
        info += pj_inv;
        consensus += pj_inv * (nb.x_bar - prior.x_bar);
    }
    let p_plus = symmetrize(&spd_inverse(&symmetrize(&info))?);
    let mut x = prior.x_bar + epsilon * p_plus * consensus;
    if let Some(s_inv) = meas_info {
        x += p_plus * c.transpose() * s_inv * (fused.z - c * prior.x_bar);
    }
    if !x.iter().all(|v| v.is_finite()) || !p_plus.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite target estimate".into()));
    }
    Ok(TargetEstimate {
        x_hat: x,
        p: p_plus,
    })
}

/// Serialisable tuning of the target filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetFilterParams {
    pub epsilon: f64,
    /// Process-noise diagonal per second; scaled by `dt`.
    pub q_rate_diag: [f64; 4],
    pub initial_cov_diag: [f64; 4],
    /// Covariance attached to an agent's own stereo measurement.
    pub measurement_cov_diag: [f64; 2],
}

impl Default for TargetFilterParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            q_rate_diag: [1e-4, 1e-4, 1e-2, 1e-2],
            initial_cov_diag: [1.0, 1.0, 4.0, 4.0],
            measurement_cov_diag: [4e-4, 4e-4],
        }
    }
}

impl TargetFilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!(
                "epsilon must be in (0,1), got {}",
                self.epsilon
            )));
        }
        let all = self
            .q_rate_diag
            .iter()
            .chain(&self.initial_cov_diag)
            .chain(&self.measurement_cov_diag);
        if all.clone().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(
                "target filter diagonals must be finite and >= 0".into(),
            ));
        }
        if self
            .initial_cov_diag
            .iter()
            .chain(&self.measurement_cov_diag)
            .any(|v| *v <= 0.0)
        {
            return Err(Error::Config(
                "initial and measurement covariances must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn process_noise(&self, dt: f64) -> Mat4 {
        diag4(self.q_rate_diag) * dt
    }

    pub fn measurement_cov(&self) -> Mat2 {
        diag2(self.measurement_cov_diag)
    }
}

/// Outcome of one filter step, kept for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetStepReport {
    pub mode: FusionMode,
    pub numerical_failure: bool,
}

/// One agent's target filter across steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetFilter {
    params: TargetFilterParams,
    q_i0: Mat4,
    dt: f64,
    estimate: Option<TargetEstimate>,
    prior: Option<TargetPrior>,
}

impl TargetFilter {
    pub fn new(params: TargetFilterParams, dt: f64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            q_i0: params.process_noise(dt),
            params,
            dt,
            estimate: None,
            prior: None,
        })
    }

    pub fn params(&self) -> &TargetFilterParams {
        &self.params
    }

    pub fn estimate(&self) -> Option<&TargetEstimate> {
        self.estimate.as_ref()
    }

    /// Prior from the most recent `predict`, for sharing with neighbours.
    pub fn prior(&self) -> Option<&TargetPrior> {
        self.prior.as_ref()
    }

    pub fn predict(&mut self, u_i_km1: Vec2) {
        self.prior = self
            .estimate
            .as_ref()
            .map(|est| dkf_predict(est, u_i_km1, &self.q_i0, self.dt));
    }

    /// Fuses and updates. An uninitialised filter waits for a direct
    /// measurement and starts from it with zero velocity. On numerical
    /// failure the estimate falls back to the prior.
    pub fn update(
        &mut self,
        fused: &FusedMeasurement,
        neighbours: &[TargetPrior],
    ) -> TargetStepReport {
        let mut report = TargetStepReport {
            mode: fused.mode,
            numerical_failure: false,
        };
        let Some(prior) = self.prior else {
            if fused.mode == FusionMode::Direct {
                self.estimate = Some(TargetEstimate {
                    x_hat: stack(fused.z, Vec2::zeros()),
                    p: diag4(self.params.initial_cov_diag),
                });
            }
            return report;
        };
        match dkf_update(&prior, fused, neighbours, self.params.epsilon) {
            Ok(est) => self.estimate = Some(est),
            Err(_) => {
                report.numerical_failure = true;
                self.estimate = Some(TargetEstimate {
                    x_hat: prior.x_bar,
                    p: prior.p_minus,
                });
            }
        }
        report
    }
}
