use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::comms::{CommsPolicy, Topology};
use crate::control::ControllerParams;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::relative::{EstimatorKind, RelativeParams};
use crate::sensors::{CameraConfig, UwbNoise, UwbPreprocessConfig, VioNoise};
use crate::target::TargetFilterParams;
use crate::world::{
    AgentId, AgentState, FailureEvent, MotionProfile, ObstacleSegment, ProcessNoise, TargetState,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub world: WorldConfig,
    #[serde(default)]
    pub sensors: SensorConfig,
    #[serde(default)]
    pub estimators: EstimatorSettings,
    #[serde(default)]
    pub controller: ControllerParams,
    #[serde(default)]
    pub comms: CommsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub dt: f64,
    pub duration: f64,
    pub target: TargetInit,
    pub agents: Vec<AgentInit>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSegment>,
    #[serde(default)]
    pub failures: Vec<FailureEvent>,
    #[serde(default)]
    pub target_noise: ProcessNoise,
    #[serde(default)]
    pub agent_noise: ProcessNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetInit {
    pub p: Vec2,
    #[serde(default = "Vec2::zeros")]
    pub v: Vec2,
    #[serde(default = "stationary")]
    pub profile: MotionProfile,
}

fn stationary() -> MotionProfile {
    MotionProfile::Stationary
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentInit {
    pub id: AgentId,
    pub p: Vec2,
    #[serde(default = "Vec2::zeros")]
    pub v: Vec2,
    #[serde(default)]
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    #[serde(default)]
    pub vio: VioNoise,
    #[serde(default)]
    pub uwb: UwbNoise,
    #[serde(default)]
    pub uwb_preprocess: UwbPreprocessConfig,
    #[serde(default)]
    pub camera: CameraConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    #[serde(default)]
    pub relative: RelativeParams,
    #[serde(default)]
    pub target: TargetFilterParams,
    /// Relative estimator whose output feeds the target filter and controller.
    #[serde(default)]
    pub feedback: EstimatorKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommsConfig {
    #[serde(default)]
    pub policy: CommsPolicy,
    /// Undirected edges; fully connected when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[AgentId; 2]>>,
    #[serde(default)]
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Samples before this time are excluded from RMSE and steady-state metrics (s).
    #[serde(default = "default_window")]
    pub window_start: f64,
}

fn default_window() -> f64 {
    20.0
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            window_start: default_window(),
        }
    }
}

fn field(path: &str, e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("{path}: {msg}")),
        other => Error::Config(format!("{path}: {other}")),
    }
}

fn check(ok: bool, path: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{path}: {msg}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn agent_ids(&self) -> Vec<AgentId> {
        self.world.agents.iter().map(|a| a.id).collect()
    }

    /// Number of simulation steps, `⌊duration / dt⌋`.
    pub fn steps(&self) -> u64 {
        (self.world.duration / self.world.dt + 1e-9).floor() as u64
    }

    pub fn target_state(&self) -> TargetState {
        TargetState {
            p: self.world.target.p,
            v: self.world.target.v,
        }
    }

    pub fn agent_states(&self) -> Vec<AgentState> {
        self.world
            .agents
            .iter()
            .map(|a| AgentState::new(a.id, a.p, a.v, a.psi))
            .collect()
    }

    pub fn topology(&self) -> Result<Topology> {
        let ids = self.agent_ids();
        match &self.comms.edges {
            None => Ok(Topology::full(&ids)),
            Some(edges) => {
                let pairs: Vec<_> = edges.iter().map(|[a, b]| (*a, *b)).collect();
                Topology::from_edges(&ids, &pairs).map_err(|e| field("comms.edges", e))
            }
        }
    }

    /// Checks every field and reports the first violation with its path.
    pub fn validate(&self) -> Result<()> {
        check(
            self.schema_version == SCHEMA_VERSION,
            "schema_version",
            &format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
        )?;
        let w = &self.world;
        check(w.dt > 0.0 && w.dt.is_finite(), "world.dt", "must be > 0")?;
        check(
            w.duration > 0.0 && w.duration.is_finite(),
            "world.duration",
            "must be > 0",
        )?;
        check(
            !w.agents.is_empty(),
            "world.agents",
            "at least one agent is required",
        )?;
        let mut ids = self.agent_ids();
        ids.sort();
        check(
            ids.windows(2).all(|p| p[0] != p[1]),
            "world.agents",
            "agent ids must be unique",
        )?;
        for (n, a) in w.agents.iter().enumerate() {
            let ok = a.p.iter().chain(a.v.iter()).all(|v| v.is_finite()) && a.psi.is_finite();
            check(ok, &format!("world.agents[{n}]"), "state must be finite")?;
        }
        let t = &w.target;
        check(
            t.p.iter().chain(t.v.iter()).all(|v| v.is_finite()),
            "world.target",
            "state must be finite",
        )?;
        t.profile
            .validate()
            .map_err(|e| field("world.target.profile", e))?;
        for (n, o) in w.obstacles.iter().enumerate() {
            o.validate()
                .map_err(|e| field(&format!("world.obstacles[{n}]"), e))?;
        }
        for (n, f) in w.failures.iter().enumerate() {
            let path = format!("world.failures[{n}]");
            check(
                ids.contains(&f.agent),
                &path,
                &format!("unknown agent {}", f.agent),
            )?;
            check(f.t >= 0.0 && f.t.is_finite(), &path, "time must be >= 0")?;
        }
        for (name, noise) in [
            ("world.target_noise", w.target_noise),
            ("world.agent_noise", w.agent_noise),
        ] {
            check(
                noise.pos_std >= 0.0 && noise.vel_std >= 0.0,
                name,
                "standard deviations must be >= 0",
            )?;
        }
        let s = &self.sensors;
        check(
            s.vio.disp_std >= 0.0 && s.vio.yaw_std >= 0.0,
            "sensors.vio",
            "standard deviations must be >= 0",
        )?;
        s.uwb.validate().map_err(|e| field("sensors.uwb", e))?;
        crate::sensors::UwbStream::new(&s.uwb_preprocess, w.dt)
            .map_err(|e| field("sensors.uwb_preprocess", e))?;
        s.camera
            .validate()
            .map_err(|e| field("sensors.camera", e))?;

        let r = &self.estimators.relative;
        r.estimator_config(w.dt)
            .validate()
            .map_err(|e| field("estimators.relative", e))?;
        check(
            r.q_diag
                .iter()
                .chain(&r.sigma_star_diag)
                .chain(&r.sigma_delta_diag)
                .all(|v| *v >= 0.0),
            "estimators.relative",
            "covariance diagonals must be >= 0",
        )?;
        check(
            r.sigma_star_diag
                .iter()
                .chain(&r.initial_cov_diag)
                .all(|v| *v > 0.0),
            "estimators.relative",
            "sigma_star and initial covariance must be > 0",
        )?;
        check(
            r.rls_forgetting > 0.0 && r.rls_forgetting <= 1.0,
            "estimators.relative.rls_forgetting",
            "must be in (0,1]",
        )?;
        check(
            r.rls_initial_cov > 0.0,
            "estimators.relative.rls_initial_cov",
            "must be > 0",
        )?;
        self.estimators
            .target
            .validate()
            .map_err(|e| field("estimators.target", e))?;
        self.controller
            .gains(w.dt, w.agents.len())
            .map_err(|e| field("controller", e))?;
        self.comms
            .policy
            .validate()
            .map_err(|e| field("comms.policy", e))?;
        self.topology()?;
        check(
            self.output.window_start >= 0.0,
            "output.window_start",
            "must be >= 0",
        )?;
        Ok(())
    }
}
