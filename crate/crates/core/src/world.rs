//! Ground-truth world: planar double-integrator target and agents, wall
//! segments, line-of-sight queries and scheduled agent failures.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{is_finite2, wrap_pi, Vec2};
use crate::rng::{gaussian2, stream_rng, SimRng, Stream};

/// One-based agent index. Index 0 is reserved for the target in logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub usize);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub p: Vec2,
    pub v: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub id: AgentId,
    pub p: Vec2,
    pub v: Vec2,
    /// Yaw in (−π, π].
    pub psi: f64,
    pub alive: bool,
}

impl AgentState {
    pub fn new(id: AgentId, p: Vec2, v: Vec2, psi: f64) -> Self {
        Self {
            id,
            p,
            v,
            psi: wrap_pi(psi),
            alive: true,
        }
    }

    fn is_finite(&self) -> bool {
        is_finite2(&self.p) && is_finite2(&self.v) && self.psi.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSegment {
    pub a: Vec2,
    pub b: Vec2,
}

impl ObstacleSegment {
    pub fn new(a: Vec2, b: Vec2) -> Result<Self> {
        let seg = Self { a, b };
        seg.validate()?;
        Ok(seg)
    }

    pub fn validate(&self) -> Result<()> {
        if !is_finite2(&self.a) || !is_finite2(&self.b) {
            return Err(Error::Config("obstacle endpoints must be finite".into()));
        }
        if self.a == self.b {
            return Err(Error::Config("obstacle endpoints coincide".into()));
        }
        Ok(())
    }

    /// The four edges of an axis-aligned box.
    pub fn axis_aligned_box(min: Vec2, max: Vec2) -> Vec<Self> {
        let c = [min, Vec2::new(max.x, min.y), max, Vec2::new(min.x, max.y)];
        (0..4)
            .map(|i| Self {
                a: c[i],
                b: c[(i + 1) % 4],
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityKey {
    /// Time from which this velocity applies (s).
    pub t: f64,
    pub v: Vec2,
}

/// How the target's velocity evolves. Arbitrary stand-in for a manually
/// driven ground target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MotionProfile {
    /// Velocity forced to zero.
    Stationary,
    /// Unforced double integrator: velocity is carried over.
    Free,
    /// Constant-speed traversal of a polyline, parameterised by time.
    WaypointPath {
        points: Vec<Vec2>,
        speed: f64,
        #[serde(default)]
        looped: bool,
    },
    /// Piecewise-constant velocity table sorted by time.
    ScriptedVelocity { table: Vec<VelocityKey> },
}

impl MotionProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            MotionProfile::Stationary | MotionProfile::Free => Ok(()),
            MotionProfile::WaypointPath { points, speed, .. } => {
                if points.len() < 2 {
                    return Err(Error::Config(
                        "waypoint path needs at least two points".into(),
                    ));
                }
                if !speed.is_finite() || *speed < 0.0 {
                    return Err(Error::Config(
                        "waypoint speed must be finite and >= 0".into(),
                    ));
                }
                if points.iter().any(|p| !is_finite2(p)) {
                    return Err(Error::Config("waypoints must be finite".into()));
                }
                Ok(())
            }
            MotionProfile::ScriptedVelocity { table } => {
                if table.iter().any(|k| !k.t.is_finite() || !is_finite2(&k.v)) {
                    return Err(Error::Config(
                        "velocity table entries must be finite".into(),
                    ));
                }
                if table.windows(2).any(|w| w[1].t < w[0].t) {
                    return Err(Error::Config(
                        "velocity table must be sorted by time".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Commanded velocity at time `t` given the current velocity.
    pub fn velocity_at(&self, t: f64, current: Vec2) -> Vec2 {
        match self {
            MotionProfile::Stationary => Vec2::zeros(),
            MotionProfile::Free => current,
            MotionProfile::WaypointPath {
                points,
                speed,
                looped,
            } => {
                let mut legs: Vec<(Vec2, Vec2)> = points.windows(2).map(|w| (w[0], w[1])).collect();
                if *looped {
                    legs.push((points[points.len() - 1], points[0]));
                }
                let total: f64 = legs.iter().map(|(a, b)| (b - a).norm()).sum();
                if total <= 0.0 || *speed == 0.0 {
                    return Vec2::zeros();
                }
                let mut s = speed * t.max(0.0);
                if *looped {
                    s %= total;
                } else if s >= total {
                    return Vec2::zeros();
                }
                for (a, b) in &legs {
                    let len = (b - a).norm();
                    if s < len {
                        return (b - a) / len * *speed;
                    }
                    s -= len;
                }
                Vec2::zeros()
            }
            MotionProfile::ScriptedVelocity { table } => table
                .iter()
                .rev()
                .find(|k| k.t <= t)
                .map(|k| k.v)
                .unwrap_or_else(Vec2::zeros),
        }
    }
}

/// Standard deviations of the additive Gaussian process noise, per axis and per step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessNoise {
    #[serde(default)]
    pub pos_std: f64,
    #[serde(default)]
    pub vel_std: f64,
}

impl ProcessNoise {
    pub const ZERO: ProcessNoise = ProcessNoise {
        pos_std: 0.0,
        vel_std: 0.0,
    };
}

pub fn step_target<R: rand::Rng + ?Sized>(
    s: &TargetState,
    profile: &MotionProfile,
    t_next: f64,
    dt: f64,
    noise: &ProcessNoise,
    rng: &mut R,
) -> Result<TargetState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidState(format!("dt must be > 0, got {dt}")));
    }
    if !is_finite2(&s.p) || !is_finite2(&s.v) {
        return Err(Error::InvalidState("non-finite target state".into()));
    }
    let p = s.p + s.v * dt + gaussian2(rng, noise.pos_std);
    let v = profile.velocity_at(t_next, s.v) + gaussian2(rng, noise.vel_std);
    Ok(TargetState { p, v })
}

pub fn step_agent<R: rand::Rng + ?Sized>(
    s: &AgentState,
    u: Vec2,
    dt: f64,
    noise: &ProcessNoise,
    rng: &mut R,
) -> Result<AgentState> {
    if !s.alive {
        return Ok(*s);
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidState(format!("dt must be > 0, got {dt}")));
    }
    if !is_finite2(&u) {
        return Err(Error::InvalidControl(format!("agent {}: {u:?}", s.id)));
    }
    if !s.is_finite() {
        return Err(Error::InvalidState(format!(
            "agent {} has non-finite state",
            s.id
        )));
    }
    Ok(AgentState {
        p: s.p + s.v * dt + gaussian2(rng, noise.pos_std),
        v: s.v + u * dt + gaussian2(rng, noise.vel_std),
        ..*s
    })
}

/// Discrete yaw dynamics `ψ' = ψ + u`.
pub fn step_yaw(s: &AgentState, u_psi: f64) -> AgentState {
    if !s.alive || !u_psi.is_finite() {
        return *s;
    }
    AgentState {
        psi: wrap_pi(s.psi + u_psi),
        ..*s
    }
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn within_box(a: Vec2, b: Vec2, c: Vec2) -> bool {
    c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
}

/// Closed-segment intersection; touching counts.
fn segments_touch(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && within_box(a, b, c))
        || (o2 == 0.0 && within_box(a, b, d))
        || (o3 == 0.0 && within_box(c, d, a))
        || (o4 == 0.0 && within_box(c, d, b))
}

/// True iff the segment between `a` and `b` crosses or touches no obstacle.
pub fn line_of_sight(a: Vec2, b: Vec2, obstacles: &[ObstacleSegment]) -> bool {
    // canonical endpoint order keeps the predicate exactly symmetric
    let (a, b) = if (a.x, a.y) <= (b.x, b.y) {
        (a, b)
    } else {
        (b, a)
    };
    !obstacles.iter().any(|o| segments_touch(a, b, o.a, o.b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub agent: AgentId,
    /// Failure time (s).
    pub t: f64,
}

/// Immutable copy of the world taken at a step boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSnapshot {
    pub k: u64,
    pub t: f64,
    pub target: TargetState,
    pub agents: Vec<AgentState>,
}

impl WorldSnapshot {
    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }
}

#[derive(Debug, Clone)]
pub struct WorldSetup {
    pub dt: f64,
    pub target: TargetState,
    pub profile: MotionProfile,
    pub agents: Vec<AgentState>,
    pub obstacles: Vec<ObstacleSegment>,
    pub target_noise: ProcessNoise,
    pub agent_noise: ProcessNoise,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct World {
    dt: f64,
    k: u64,
    target: TargetState,
    agents: Vec<AgentState>,
    obstacles: Vec<ObstacleSegment>,
    profile: MotionProfile,
    pending_failures: Vec<FailureEvent>,
    target_noise: ProcessNoise,
    agent_noise: ProcessNoise,
    target_rng: SimRng,
    agent_rngs: BTreeMap<AgentId, SimRng>,
}

impl World {
    pub fn new(setup: WorldSetup) -> Result<Self> {
        if !(setup.dt > 0.0) {
            return Err(Error::Config(format!("dt must be > 0, got {}", setup.dt)));
        }
        if setup.agents.is_empty() {
            return Err(Error::Config("at least one agent is required".into()));
        }
        setup.profile.validate()?;
        for o in &setup.obstacles {
            o.validate()?;
        }
        let mut agents = setup.agents;
        agents.sort_by_key(|a| a.id);
        if agents.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::Config("duplicate agent id".into()));
        }
        let agent_rngs = agents
            .iter()
            .map(|a| (a.id, stream_rng(setup.seed, Stream::AgentProcess(a.id))))
            .collect();
        Ok(Self {
            dt: setup.dt,
            k: 0,
            target: setup.target,
            agents,
            obstacles: setup.obstacles,
            profile: setup.profile,
            pending_failures: Vec::new(),
            target_noise: setup.target_noise,
            agent_noise: setup.agent_noise,
            target_rng: stream_rng(setup.seed, Stream::TargetProcess),
            agent_rngs,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step_index(&self) -> u64 {
        self.k
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.dt
    }

    pub fn target(&self) -> &TargetState {
        &self.target
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn obstacles(&self) -> &[ObstacleSegment] {
        &self.obstacles
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn alive_ids(&self) -> Vec<AgentId> {
        self.agents
            .iter()
            .filter(|a| a.alive)
            .map(|a| a.id)
            .collect()
    }

    /// Schedules `agent` to fail at the first step boundary with `t >= t_fail`.
    pub fn inject_failure(&mut self, agent: AgentId, t_fail: f64) -> Result<()> {
        match self.agent(agent) {
            None => return Err(Error::UnknownAgent(agent)),
            Some(a) if !a.alive => {
                return Err(Error::Config(format!("agent {agent} has already failed")))
            }
            Some(_) => {}
        }
        if !t_fail.is_finite() {
            return Err(Error::Config("failure time must be finite".into()));
        }
        let at = self.pending_failures.partition_point(|f| f.t <= t_fail);
        self.pending_failures
            .insert(at, FailureEvent { agent, t: t_fail });
        Ok(())
    }

    pub fn pending_failures(&self) -> &[FailureEvent] {
        &self.pending_failures
    }

    /// Kills every agent whose failure time has been reached, in time order.
    /// Returns the agents that died at this boundary.
    pub fn apply_due_failures(&mut self) -> Vec<AgentId> {
        let now = self.time() + 1e-9 * self.dt;
        let due = self.pending_failures.partition_point(|f| f.t <= now);
        let mut died = Vec::new();
        for f in self.pending_failures.drain(..due) {
            if let Some(a) = self.agents.iter_mut().find(|a| a.id == f.agent) {
                if a.alive {
                    a.alive = false;
                    died.push(f.agent);
                }
            }
        }
        died
    }

    /// Advances one step. `controls` maps agent ids to `(u, u_psi)`; alive
    /// agents without an entry receive zero input.
    pub fn advance(&mut self, controls: &BTreeMap<AgentId, (Vec2, f64)>) -> Result<()> {
        let t_next = (self.k + 1) as f64 * self.dt;
        let target = step_target(
            &self.target,
            &self.profile,
            t_next,
            self.dt,
            &self.target_noise,
            &mut self.target_rng,
        )?;
        let mut next = Vec::with_capacity(self.agents.len());
        for a in &self.agents {
            let (u, u_psi) = controls.get(&a.id).copied().unwrap_or((Vec2::zeros(), 0.0));
            let rng = self.agent_rngs.get_mut(&a.id).expect("rng per agent");
            let stepped = step_agent(a, u, self.dt, &self.agent_noise, rng)?;
            next.push(step_yaw(&stepped, u_psi));
        }
        self.target = target;
        self.agents = next;
        self.k += 1;
        Ok(())
    }

    pub fn snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            k: self.k,
            t: self.time(),
            target: self.target,
            agents: self.agents.clone(),
        }
    }
}
