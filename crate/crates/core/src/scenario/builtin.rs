use std::f64::consts::PI;

use super::config::{
    AgentInit, CommsConfig, EstimatorSettings, OutputConfig, ScenarioConfig, SensorConfig,
    TargetInit, WorldConfig, SCHEMA_VERSION,
};
use crate::control::ControllerParams;
use crate::geometry::{vec2, wrap_pi, Vec2};
use crate::sensors::{UwbNoise, VioNoise};
use crate::world::{AgentId, FailureEvent, MotionProfile, ObstacleSegment, ProcessNoise};

pub const BUILTIN_NAMES: [&str; 3] = ["indoor-pair", "indoor-occlusion", "outdoor-three-failure"];

pub fn builtin_description(name: &str) -> Option<&'static str> {
    Some(match name {
        "indoor-pair" => "two agents orbiting a stationary target at 2 m, 30 s period",
        "indoor-occlusion" => "two agents, stationary target, a wall hides the target from agent 1 for 10 s from t = 20 s",
        "outdoor-three-failure" => "three agents around a slowly moving target; agent 2 fails at 70 s",
        _ => return None,
    })
}

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    match name {
        "indoor-pair" => Some(indoor_pair()),
        "indoor-occlusion" => Some(indoor_occlusion()),
        "outdoor-three-failure" => Some(outdoor_three_failure()),
        _ => None,
    }
}

/// Agent on a circle of radius `r` about `center`, facing the centre.
fn on_circle(id: usize, center: Vec2, r: f64, angle: f64) -> AgentInit {
    AgentInit {
        id: AgentId(id),
        p: center + r * vec2(angle.cos(), angle.sin()),
        v: Vec2::zeros(),
        psi: wrap_pi(angle + PI),
    }
}

fn base(name: &str, seed: u64, duration: f64) -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        seed,
        world: WorldConfig {
            dt: 0.1,
            duration,
            target: TargetInit {
                p: Vec2::zeros(),
                v: Vec2::zeros(),
                profile: MotionProfile::Stationary,
            },
            agents: Vec::new(),
            obstacles: Vec::new(),
            failures: Vec::new(),
            target_noise: ProcessNoise::ZERO,
            agent_noise: ProcessNoise::ZERO,
        },
        sensors: SensorConfig::default(),
        estimators: EstimatorSettings::default(),
        controller: ControllerParams::default(),
        comms: CommsConfig::default(),
        output: OutputConfig::default(),
    }
}

fn indoor_pair() -> ScenarioConfig {
    let mut cfg = base("indoor-pair", 1, 60.0);
    cfg.world.agents = vec![
        on_circle(1, Vec2::zeros(), 2.0, 0.0),
        on_circle(2, Vec2::zeros(), 2.0, PI),
    ];
    cfg.sensors.vio = VioNoise {
        disp_std: 0.02,
        yaw_std: 0.002,
    };
    cfg.sensors.uwb = UwbNoise::default();
    cfg
}

fn indoor_occlusion() -> ScenarioConfig {
    let mut cfg = base("indoor-occlusion", 2, 45.0);
    cfg.controller.orbit_period = 60.0;
    // the wall spans ±30° of bearing seen from the target, centred on +y,
    // so each pass behind it lasts 10 s
    let half = (PI / 6.0).tan();
    cfg.world.obstacles = vec![ObstacleSegment {
        a: vec2(-half, 1.0),
        b: vec2(half, 1.0),
    }];
    // agent 1 reaches the wall at 20 s; agent 2 cleared it before t = 0
    // and would only return at 50 s
    let start = PI / 2.0 - PI / 6.0 - 20.0 * 2.0 * PI / 60.0;
    cfg.world.agents = vec![
        on_circle(1, Vec2::zeros(), 1.0, start),
        on_circle(2, Vec2::zeros(), 1.0, start + PI),
    ];
    cfg.sensors.vio = VioNoise {
        disp_std: 0.002,
        yaw_std: 0.001,
    };
    cfg.sensors.uwb = UwbNoise {
        sigma: 0.02,
        ..UwbNoise::default()
    };
    cfg.sensors.camera.pixel_noise_std = 5.0;
    cfg.sensors.camera.depth_noise_std = 0.05;
    cfg.estimators.target.measurement_cov_diag = [0.05 * 0.05; 2];
    cfg.estimators.relative.q_diag = [2e-6; 4];
    cfg.output.window_start = 5.0;
    cfg
}

fn outdoor_three_failure() -> ScenarioConfig {
    let mut cfg = base("outdoor-three-failure", 3, 150.0);
    cfg.controller.orbit_period = 60.0;
    let start = vec2(-8.0, 0.0);
    cfg.world.target = TargetInit {
        p: start,
        v: Vec2::zeros(),
        profile: MotionProfile::WaypointPath {
            points: vec![start, vec2(16.0, 0.0)],
            speed: 0.15,
            looped: false,
        },
    };
    cfg.world.agents = vec![
        on_circle(1, start, 2.0, 0.0),
        on_circle(2, start, 2.0, 100f64.to_radians()),
        on_circle(3, start, 2.0, 200f64.to_radians()),
    ];
    cfg.world.failures = vec![FailureEvent {
        agent: AgentId(2),
        t: 70.0,
    }];
    cfg.world.target_noise = ProcessNoise {
        pos_std: 0.0,
        vel_std: 0.002,
    };
    cfg.sensors.vio = VioNoise {
        disp_std: 0.002,
        yaw_std: 0.001,
    };
    cfg.output.window_start = 30.0;
    cfg
}
