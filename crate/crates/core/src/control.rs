//! Circumnavigation control: coupled-oscillator phases, desired orbit states,
//! saturated formation control and yaw pointing.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation, vec2, wrap_pi, wrap_two_pi, Mat2, Vec2};

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    pub rho: f64,
    /// Orbit advance per step, rad.
    pub delta_theta: f64,
    /// Coupling gains `G_1..G_N`.
    pub coupling: Vec<f64>,
    pub k_p: f64,
    pub k_v: f64,
    pub k_rho: f64,
    pub u1: f64,
    pub u2: f64,
    pub k_psi: f64,
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("k_p", self.k_p),
            ("k_v", self.k_v),
            ("k_rho", self.k_rho),
            ("u1", self.u1),
            ("u2", self.u2),
            ("k_psi", self.k_psi),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !self.delta_theta.is_finite() || self.coupling.iter().any(|g| !g.is_finite()) {
            return Err(Error::Config("oscillator parameters must be finite".into()));
        }
        Ok(())
    }

    /// `(R_Δθ − I) / Δt`.
    pub fn feedforward_matrix(&self, dt: f64) -> Mat2 {
        (rotation(self.delta_theta) - Mat2::identity()) / dt
    }
}

/// Serialisable controller settings; the orbit rate is given as a period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerParams {
    pub rho: f64,
    /// Seconds per orbit; negative values orbit clockwise.
    pub orbit_period: f64,
    /// Coupling gains; when empty, `G_1 = 1` and `G_l = 0.2` for `l ≥ 2`.
    #[serde(default)]
    pub coupling: Vec<f64>,
    pub k_p: f64,
    pub k_v: f64,
    pub k_rho: f64,
    pub u1: f64,
    pub u2: f64,
    pub k_psi: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            rho: 2.0,
            orbit_period: 30.0,
            coupling: Vec::new(),
            k_p: 1.0,
            k_v: 1.5,
            k_rho: 0.5,
            u1: 3.0,
            u2: 3.0,
            k_psi: 0.5,
        }
    }
}

pub fn default_coupling(n: usize) -> Vec<f64> {
    (1..=n).map(|l| if l == 1 { 1.0 } else { 0.2 }).collect()
}

impl ControllerParams {
    pub fn gains(&self, dt: f64, n_agents: usize) -> Result<ControllerGains> {
        if !(self.orbit_period.is_finite() && self.orbit_period != 0.0) {
            return Err(Error::Config(
                "orbit_period must be finite and non-zero".into(),
            ));
        }
        let coupling = if self.coupling.is_empty() {
            default_coupling(n_agents)
        } else if self.coupling.len() != n_agents {
            return Err(Error::Config(format!(
                "expected {n_agents} coupling gains, got {}",
                self.coupling.len()
            )));
        } else {
            self.coupling.clone()
        };
        let g = ControllerGains {
            rho: self.rho,
            delta_theta: TAU * dt / self.orbit_period,
            coupling,
            k_p: self.k_p,
            k_v: self.k_v,
            k_rho: self.k_rho,
            u1: self.u1,
            u2: self.u2,
            k_psi: self.k_psi,
        };
        g.validate()?;
        Ok(g)
    }
}

/// Coupling sum `Σ_j Σ_l (G_l / (l N)) sin(l (θ_i − θ_j))` with `N = thetas.len()`.
pub fn oscillator_coupling(theta_i: f64, thetas: &[f64], coupling: &[f64]) -> f64 {
    let n = thetas.len();
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let mut sum = 0.0;
    for &theta_j in thetas {
        let d = theta_i - theta_j;
        for (idx, g) in coupling.iter().take(n).enumerate() {
            let l = (idx + 1) as f64;
            sum += g / (l * nf) * (l * d).sin();
        }
    }
    sum
}

/// `θ' = θ + Δθ + Δt · coupling`, wrapped to [0, 2π). `thetas` holds the
/// phases of all alive agents including `theta_i`.
pub fn oscillator_step(theta_i: f64, thetas: &[f64], gains: &ControllerGains, dt: f64) -> f64 {
    wrap_two_pi(
        theta_i + gains.delta_theta + dt * oscillator_coupling(theta_i, thetas, &gains.coupling),
    )
}

/// `p* = ρ (cos θ, sin θ)`, `v* = (R_Δθ − I) p* / Δt`.
pub fn desired_relative_state(theta_i: f64, gains: &ControllerGains, dt: f64) -> (Vec2, Vec2) {
    let p = gains.rho * vec2(theta_i.cos(), theta_i.sin());
    (p, gains.feedforward_matrix(dt) * p)
}

pub fn desired_inter_agent(p_i0: Vec2, v_i0: Vec2, p_j0: Vec2, v_j0: Vec2) -> (Vec2, Vec2) {
    (p_i0 - p_j0, v_i0 - v_j0)
}

/// `s(U, u) = min(U, ‖u‖)/‖u‖ · u`, with `s(U, 0) = 0`.
pub fn saturate(bound: f64, u: Vec2) -> Vec2 {
    let n = u.norm();
    if n == 0.0 || !n.is_finite() {
        return Vec2::zeros();
    }
    if n <= bound {
        u
    } else {
        u * (bound / n)
    }
}

/// Estimated and desired relative state toward one neighbour or the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingTerm {
    pub p_hat: Vec2,
    /// Absent for estimators without a velocity state; the damping term is then skipped.
    pub v_hat: Option<Vec2>,
    pub p_star: Vec2,
    pub v_star: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub u: Vec2,
    pub u1_raw: Vec2,
    pub u2_raw: Vec2,
    pub feedforward: Vec2,
}

/// `u = s(U1, u¹) + s(U2, u²) + (R_Δθ − I) v*_i0 / Δt` with
/// `u¹ = −K_p Σ (p̂ − p*) − K_v Σ (v̂ − v*)` over neighbours and the target and
/// `u² = −K_ρ (‖p̂_i0‖ − ρ) p̂_i0`.
pub fn formation_control(
    target: &TrackingTerm,
    neighbours: &[TrackingTerm],
    gains: &ControllerGains,
    dt: f64,
) -> Result<ControlOutput> {
    let mut u1 = Vec2::zeros();
    for term in std::iter::once(target).chain(neighbours) {
        if !(term.p_hat.iter().all(|v| v.is_finite())) {
            return Err(Error::MissingInput("non-finite relative estimate".into()));
        }
        u1 -= gains.k_p * (term.p_hat - term.p_star);
        if let Some(v) = term.v_hat {
            u1 -= gains.k_v * (v - term.v_star);
        }
    }
    let r = target.p_hat.norm();
    let u2 = -gains.k_rho * (r - gains.rho) * target.p_hat;
    let ff = gains.feedforward_matrix(dt) * target.v_star;
    Ok(ControlOutput {
        u: saturate(gains.u1, u1) + saturate(gains.u2, u2) + ff,
        u1_raw: u1,
        u2_raw: u2,
        feedforward: ff,
    })
}

/// Desired yaw `atan2(−p̂_y, −p̂_x)` facing the target.
pub fn desired_yaw(p_hat_i0: Vec2) -> Option<f64> {
    if p_hat_i0 == Vec2::zeros() || !p_hat_i0.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(wrap_pi((-p_hat_i0.y).atan2(-p_hat_i0.x)))
}

/// `u_ψ = −K_ψ wrap(ψ − ψ̂)`; `None` when `p̂_i0` is zero.
pub fn yaw_control(psi: f64, p_hat_i0: Vec2, k_psi: f64) -> Option<(f64, f64)> {
    let psi_hat = desired_yaw(p_hat_i0)?;
    Some((-k_psi * wrap_pi(psi - psi_hat), psi_hat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn gains() -> ControllerGains {
        ControllerParams::default().gains(0.1, 3).unwrap()
    }

    #[test]
    fn oscillator_examples() {
        let mut g = gains();
        g.coupling = vec![1.0, 0.2];
        let t = oscillator_step(0.0, &[0.0, PI], &g, 0.1);
        assert!((t - g.delta_theta).abs() < 1e-12);
        g.coupling = vec![1.0, 0.2, 0.2];
        let even = [0.0, TAU / 3.0, 2.0 * TAU / 3.0];
        for th in even {
            assert!(oscillator_coupling(th, &even, &g.coupling).abs() < 1e-12);
        }
        assert!((oscillator_step(1.0, &[1.0], &g, 0.1) - (1.0 + g.delta_theta)).abs() < 1e-15);
    }

    #[test]
    fn desired_state_examples() {
        let mut g = gains();
        g.rho = 2.0;
        g.delta_theta = 0.0;
        let (p, v) = desired_relative_state(0.0, &g, 0.1);
        assert_eq!(p, vec2(2.0, 0.0));
        assert_eq!(v, Vec2::zeros());
        g.delta_theta = 0.1;
        let (p, v) = desired_relative_state(FRAC_PI_2, &g, 0.1);
        assert!((p - vec2(0.0, 2.0)).norm() < 1e-15);
        let expect = vec2(-2.0 * 0.1f64.sin(), 2.0 * (0.1f64.cos() - 1.0)) * 10.0;
        assert!((v - expect).norm() < 1e-12);
        assert!((v - vec2(-1.9967, -0.09996)).norm() < 1e-4);

        let (pi, vi) = desired_relative_state(0.0, &g, 0.1);
        let (pj, vj) = desired_relative_state(PI, &g, 0.1);
        let (pij, vij) = desired_inter_agent(pi, vi, pj, vj);
        assert!((pij - vec2(4.0, 0.0)).norm() < 1e-12);
        let (pji, vji) = desired_inter_agent(pj, vj, pi, vi);
        assert_eq!(pij, -pji);
        assert_eq!(vij, -vji);
        assert_eq!(
            desired_inter_agent(pi, vi, pi, vi),
            (Vec2::zeros(), Vec2::zeros())
        );
    }

    #[test]
    fn saturate_examples() {
        assert_eq!(saturate(10.0, vec2(3.0, 4.0)), vec2(3.0, 4.0));
        assert!((saturate(1.0, vec2(3.0, 4.0)) - vec2(0.6, 0.8)).norm() < 1e-15);
        assert_eq!(saturate(1.0, Vec2::zeros()), Vec2::zeros());
    }

    #[test]
    fn formation_examples() {
        let mut g = gains();
        g.delta_theta = 0.0;
        let at_rest = TrackingTerm {
            p_hat: vec2(2.0, 0.0),
            v_hat: Some(Vec2::zeros()),
            p_star: vec2(2.0, 0.0),
            v_star: Vec2::zeros(),
        };
        let nb = TrackingTerm {
            p_hat: vec2(4.0, 0.0),
            v_hat: Some(Vec2::zeros()),
            p_star: vec2(4.0, 0.0),
            v_star: Vec2::zeros(),
        };
        assert_eq!(
            formation_control(&at_rest, &[nb], &g, 0.1).unwrap().u,
            Vec2::zeros()
        );

        let radial = TrackingTerm {
            p_hat: vec2(3.0, 0.0),
            p_star: vec2(3.0, 0.0),
            ..at_rest
        };
        let out = formation_control(&radial, &[], &g, 0.1).unwrap();
        assert!((out.u2_raw - vec2(-1.5, 0.0)).norm() < 1e-15);
        assert!((out.u - vec2(-1.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn yaw_examples() {
        assert!((desired_yaw(vec2(1.0, 0.0)).unwrap() - PI).abs() < 1e-15);
        assert!(yaw_control(0.0, Vec2::zeros(), 0.5).is_none());
        let (u, _) = yaw_control(1.0, vec2(-(1.0f64).cos(), -(1.0f64).sin()), 0.5).unwrap();
        assert!(u.abs() < 1e-12);
        let (u, _) = yaw_control(0.0, vec2(1.0, 0.0), 0.5).unwrap();
        assert!((u + 0.5 * PI).abs() < 1e-12);

        // scalar recursion oracle: the error halves each step
        let target = vec2(1.0, 0.0);
        let mut psi = 0.0;
        for _ in 0..50 {
            psi = wrap_pi(psi + yaw_control(psi, target, 0.5).unwrap().0);
        }
        assert!(wrap_pi(psi - PI).abs() < 0.01);
    }

    #[test]
    fn coupling_length_checked() {
        let p = ControllerParams {
            coupling: vec![1.0, 0.2],
            ..ControllerParams::default()
        };
        assert!(p.gains(0.1, 3).is_err());
        assert_eq!(
            ControllerParams::default().gains(0.1, 3).unwrap().coupling,
            vec![1.0, 0.2, 0.2]
        );
        let bad = ControllerParams {
            rho: -1.0,
            ..ControllerParams::default()
        };
        assert!(bad.gains(0.1, 3).is_err());
    }
}
