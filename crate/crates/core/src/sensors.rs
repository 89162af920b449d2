//! Simulated onboard sensing: VIO self-displacement, UWB ranging with outlier
//! gating and exponential smoothing, and stereo-camera target observations.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_pi, Vec2};
use crate::rng::{gaussian, gaussian2};
use crate::world::{line_of_sight, AgentState, ObstacleSegment, TargetState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VioMeasurement {
    /// Displacement over one step (m).
    pub delta: Vec2,
    pub psi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VioNoise {
    /// Per-axis displacement noise std (m per step).
    pub disp_std: f64,
    #[serde(default)]
    pub yaw_std: f64,
}

pub fn sense_vio<R: Rng + ?Sized>(
    p_k: Vec2,
    p_km1: Vec2,
    psi_true: f64,
    noise: &VioNoise,
    rng: &mut R,
) -> VioMeasurement {
    VioMeasurement {
        delta: p_k - p_km1 + gaussian2(rng, noise.disp_std),
        psi: wrap_pi(psi_true + gaussian(rng, noise.yaw_std)),
    }
}

/// `δ_ij = δ_i − δ_j`.
pub fn relative_displacement(delta_i: Vec2, delta_j: Vec2) -> Vec2 {
    delta_i - delta_j
}

/// Gaussian core contaminated by uniform outliers of random sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UwbNoise {
    pub sigma: f64,
    pub p_outlier: f64,
    pub offset_min: f64,
    pub offset_max: f64,
}

impl Default for UwbNoise {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            p_outlier: 0.02,
            offset_min: 0.5,
            offset_max: 3.0,
        }
    }
}

impl UwbNoise {
    pub const ZERO: UwbNoise = UwbNoise {
        sigma: 0.0,
        p_outlier: 0.0,
        offset_min: 0.0,
        offset_max: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !(0.0..=1.0).contains(&self.p_outlier) {
            return Err(Error::Config(
                "uwb noise: sigma >= 0 and p_outlier in [0,1]".into(),
            ));
        }
        if !(self.offset_min >= 0.0 && self.offset_max >= self.offset_min) {
            return Err(Error::Config(
                "uwb noise: 0 <= offset_min <= offset_max".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UwbDraw {
    pub range: f64,
    pub outlier: bool,
}

pub fn draw_uwb<R: Rng + ?Sized>(p_i: Vec2, p_j: Vec2, noise: &UwbNoise, rng: &mut R) -> UwbDraw {
    let truth = (p_i - p_j).norm();
    if noise.p_outlier > 0.0 && rng.random_bool(noise.p_outlier) {
        let mag = if noise.offset_max > noise.offset_min {
            rng.random_range(noise.offset_min..noise.offset_max)
        } else {
            noise.offset_min
        };
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        return UwbDraw {
            range: truth + sign * mag,
            outlier: true,
        };
    }
    UwbDraw {
        range: truth + gaussian(rng, noise.sigma),
        outlier: false,
    }
}

pub fn sense_uwb_raw<R: Rng + ?Sized>(p_i: Vec2, p_j: Vec2, noise: &UwbNoise, rng: &mut R) -> f64 {
    draw_uwb(p_i, p_j, noise, rng).range
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UwbPreprocessConfig {
    /// EWM weight on the previous accepted value.
    pub beta: f64,
    /// Range error std used by the three-sigma gate (m).
    pub sigma_star: f64,
    /// Raw sampling rate (Hz).
    pub rate_hz: f64,
}

impl Default for UwbPreprocessConfig {
    fn default() -> Self {
        Self {
            beta: 0.8,
            sigma_star: 0.1,
            rate_hz: 200.0,
        }
    }
}

/// Per-link outlier gate, smoother and downsampler for raw UWB ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct UwbStream {
    beta: f64,
    sigma_star: f64,
    substeps: u64,
    last_accepted: f64,
    initialized: bool,
    n: u64,
    held: u64,
}

impl UwbStream {
    pub fn new(cfg: &UwbPreprocessConfig, dt: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.beta) {
            return Err(Error::Config(format!(
                "beta must be in [0,1), got {}",
                cfg.beta
            )));
        }
        if !(cfg.sigma_star > 0.0) {
            return Err(Error::Config("sigma_star must be > 0".into()));
        }
        if !(cfg.rate_hz > 0.0) || !(dt > 0.0) {
            return Err(Error::Config("uwb rate and dt must be > 0".into()));
        }
        let ratio = dt * cfg.rate_hz;
        let substeps = ratio.round();
        if substeps < 1.0 || (ratio - substeps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "uwb period 1/{} Hz must divide dt={dt} exactly",
                cfg.rate_hz
            )));
        }
        Ok(Self {
            beta: cfg.beta,
            sigma_star: cfg.sigma_star,
            substeps: substeps as u64,
            last_accepted: 0.0,
            initialized: false,
            n: 0,
            held: 0,
        })
    }

    pub fn substeps_per_sample(&self) -> u64 {
        self.substeps
    }

    pub fn last_accepted(&self) -> Option<f64> {
        self.initialized.then_some(self.last_accepted)
    }

    /// Number of samples rejected by the gate so far.
    pub fn held_count(&self) -> u64 {
        self.held
    }

    /// Gate and smooth one raw sample; the first sample is taken verbatim.
    pub fn preprocess(&mut self, d_raw: f64) -> f64 {
        if !self.initialized {
            self.last_accepted = d_raw;
            self.initialized = true;
        } else if (d_raw - self.last_accepted).abs() <= 3.0 * self.sigma_star {
            self.last_accepted = self.beta * self.last_accepted + (1.0 - self.beta) * d_raw;
        } else {
            self.held += 1;
        }
        self.last_accepted
    }

    /// The smoothed value when sample `n` lands on a filter step boundary.
    pub fn downsample(&self, n: u64) -> Option<f64> {
        (self.initialized && n.is_multiple_of(self.substeps)).then_some(self.last_accepted)
    }

    /// Feeds the next raw sample (index 0 is the initialising sample at t=0)
    /// and returns the downsampled range if this sample closes a step.
    pub fn push(&mut self, d_raw: f64) -> Option<f64> {
        let n = if self.initialized { self.n + 1 } else { 0 };
        self.n = n;
        self.preprocess(d_raw);
        self.downsample(n)
    }

    pub fn sample_index(&self) -> u64 {
        self.n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    /// Row-major 3×3 intrinsic matrix.
    pub intrinsics: [[f64; 3]; 3],
    /// Row-major rotation from the optical frame into the body frame.
    pub mount_rotation: [[f64; 3]; 3],
    pub mount_translation: [f64; 3],
    pub fov_half_angle: f64,
    pub max_depth: f64,
    pub pixel_noise_std: f64,
    pub depth_noise_std: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            intrinsics: [[615.0, 0.0, 320.0], [0.0, 615.0, 240.0], [0.0, 0.0, 1.0]],
            // optical z forward, x right, y down → body x forward, y left, z up
            mount_rotation: [[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]],
            mount_translation: [0.0; 3],
            fov_half_angle: 45f64.to_radians(),
            max_depth: 10.0,
            pixel_noise_std: 1.0,
            depth_noise_std: 0.02,
        }
    }
}

fn mat3(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| rows[r][c])
}

impl CameraConfig {
    pub fn k(&self) -> Matrix3<f64> {
        mat3(&self.intrinsics)
    }

    pub fn r_c(&self) -> Matrix3<f64> {
        mat3(&self.mount_rotation)
    }

    pub fn t_c(&self) -> Vector3<f64> {
        Vector3::from(self.mount_translation)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k.try_inverse().is_none() || k.determinant().abs() < 1e-12 {
            return Err(Error::Config("camera intrinsics must be invertible".into()));
        }
        let r = self.r_c();
        if (r.transpose() * r - Matrix3::identity()).abs().max() > 1e-9
            || (r.determinant() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(
                "camera mount rotation must be a proper rotation".into(),
            ));
        }
        if !(self.fov_half_angle > 0.0) || !(self.max_depth > 0.0) {
            return Err(Error::Config("camera fov and max depth must be > 0".into()));
        }
        if !(self.pixel_noise_std >= 0.0) || !(self.depth_noise_std >= 0.0) {
            return Err(Error::Config("camera noise std must be >= 0".into()));
        }
        Ok(())
    }
}

/// Pixel coordinates plus stereo depth of a detected target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoDetection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetObservation {
    /// Agent position relative to the target, `p_i − p_0`, in the aligned local frame.
    pub q: Vec2,
}

fn yaw_rotation(psi: f64) -> Matrix3<f64> {
    let (s, c) = psi.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Projects the target into the agent's camera, returning nothing when the
/// line of sight is blocked or the target lies outside the view frustum.
pub fn sense_stereo<R: Rng + ?Sized>(
    agent: &AgentState,
    target: &TargetState,
    cfg: &CameraConfig,
    obstacles: &[ObstacleSegment],
    rng: &mut R,
) -> Option<StereoDetection> {
    if !agent.alive || !line_of_sight(agent.p, target.p, obstacles) {
        return None;
    }
    let d = target.p - agent.p;
    let local = Vector3::new(d.x, d.y, 0.0);
    let body = yaw_rotation(agent.psi).transpose() * local;
    let optical = cfg.r_c().transpose() * (body - cfg.t_c());
    let depth = optical.z;
    if depth <= 0.0 || depth > cfg.max_depth {
        return None;
    }
    let off_axis = (optical.x.hypot(optical.y)).atan2(depth);
    if off_axis > cfg.fov_half_angle {
        return None;
    }
    let pixel = cfg.k() * (optical / depth);
    Some(StereoDetection {
        u: pixel.x + gaussian(rng, cfg.pixel_noise_std),
        v: pixel.y + gaussian(rng, cfg.pixel_noise_std),
        depth: depth + gaussian(rng, cfg.depth_noise_std),
    })
}

/// Target position in the camera frame: `R_C K⁻¹ [U V 1]ᵀ D + T_C`.
pub fn camera_point(det: &StereoDetection, cfg: &CameraConfig) -> Result<Vector3<f64>> {
    if !(det.depth > 0.0) {
        return Err(Error::InvalidDepth(det.depth));
    }
    let k_inv = cfg
        .k()
        .try_inverse()
        .ok_or_else(|| Error::Config("camera intrinsics not invertible".into()))?;
    Ok(cfg.r_c() * k_inv * Vector3::new(det.u, det.v, 1.0) * det.depth + cfg.t_c())
}

/// Rotates the camera-frame point into the aligned local frame and returns
/// the planar agent-minus-target offset.
pub fn backproject(
    det: &StereoDetection,
    psi: f64,
    cfg: &CameraConfig,
) -> Result<TargetObservation> {
    let local = yaw_rotation(psi) * camera_point(det, cfg)?;
    Ok(TargetObservation {
        q: Vec2::new(-local.x, -local.y),
    })
}
