use std::collections::{BTreeMap, BTreeSet};

use super::config::ScenarioConfig;
use super::logs::{ControlRow, LogSet, MessageRow, RelativeRow, TargetRow, TrajectoryRow, UwbRow};
use crate::comms::{update_topology, Message, MessageBus, Payload, Topology};
use crate::control::{
    desired_relative_state, formation_control, oscillator_step, yaw_control, ControllerGains,
    TrackingTerm,
};
use crate::error::{Error, Result};
use crate::geometry::{diag4, stack, wrap_pi, wrap_two_pi, Vec2};
use crate::relative::{
    EstimatorConfig, EstimatorKind, PairEstimator, RelativeEstimate, RelativeInputs,
};
use crate::rng::{stream_rng, SimRng, Stream};
use crate::sensors::{backproject, draw_uwb, sense_stereo, sense_vio, UwbStream, VioMeasurement};
use crate::target::{
    fuse_event_triggered, neighbor_prior, NeighborPacket, TargetFilter, TargetPrior,
};
use crate::world::{AgentId, World, WorldSetup};

/// Velocity variance attached to position-only estimates when they feed the
/// target filter.
const POSITION_ONLY_VEL_VAR: f64 = 1.0;

struct UwbLink {
    stream: UwbStream,
    rng: SimRng,
    d_prev: Option<f64>,
    d_curr: Option<f64>,
}

struct AgentRuntime {
    vio_rng: SimRng,
    cam_rng: SimRng,
    p_prev: Vec2,
    pairs: BTreeMap<AgentId, [PairEstimator; 3]>,
    target: TargetFilter,
    theta: Option<f64>,
    /// Last phase heard from each neighbour with the step it was sent at.
    heard_theta: BTreeMap<AgentId, (f64, u64)>,
    neighbour_u: BTreeMap<AgentId, Vec2>,
    u_prev: Vec2,
    u_psi_prev: f64,
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub logs: LogSet,
    /// Step at which every agent had failed, if that happened.
    pub ended_early_at: Option<u64>,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    world: World,
    est_cfg: EstimatorConfig,
    gains: ControllerGains,
    base_topology: Topology,
    topology: Topology,
    bus: MessageBus,
    agents: BTreeMap<AgentId, AgentRuntime>,
    links: BTreeMap<(AgentId, AgentId), UwbLink>,
    logs: LogSet,
}

fn kind_index(kind: EstimatorKind) -> usize {
    match kind {
        EstimatorKind::Modified => 0,
        EstimatorKind::Classical => 1,
        EstimatorKind::Rls => 2,
    }
}

fn link_key(a: AgentId, b: AgentId) -> (AgentId, AgentId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Relative estimate usable by the target filter; position-only estimators
/// get zero velocity with a broad variance.
fn as_relative_estimate(est: &PairEstimator) -> RelativeEstimate {
    match est.estimate() {
        Some(e) => *e,
        None => {
            let PairEstimator::Rls(r) = est else {
                unreachable!("kalman estimators carry an estimate")
            };
            let mut p = diag4([0.0, 0.0, POSITION_ONLY_VEL_VAR, POSITION_ONLY_VEL_VAR]);
            p.fixed_view_mut::<2, 2>(0, 0).copy_from(&r.cov);
            RelativeEstimate::new(stack(r.p_hat, Vec2::zeros()), p)
        }
    }
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let dt = cfg.world.dt;
        let mut world = World::new(WorldSetup {
            dt,
            target: cfg.target_state(),
            profile: cfg.world.target.profile.clone(),
            agents: cfg.agent_states(),
            obstacles: cfg.world.obstacles.clone(),
            target_noise: cfg.world.target_noise,
            agent_noise: cfg.world.agent_noise,
            seed: cfg.seed,
        })?;
        for f in &cfg.world.failures {
            world.inject_failure(f.agent, f.t)?;
        }
        let ids = cfg.agent_ids();
        let est_cfg = cfg.estimators.relative.estimator_config(dt);
        let gains = cfg.controller.gains(dt, ids.len())?;
        let base_topology = cfg.topology()?;
        let bus = MessageBus::new(
            cfg.comms.policy,
            stream_rng(cfg.seed, Stream::Comms),
            cfg.comms.trace,
        )?;

        let mut agents = BTreeMap::new();
        for a in world.agents() {
            let mut pairs = BTreeMap::new();
            for j in base_topology.neighbours(a.id) {
                let make = |k| PairEstimator::new(k, &cfg.estimators.relative);
                pairs.insert(
                    j,
                    [
                        make(EstimatorKind::Modified)?,
                        make(EstimatorKind::Classical)?,
                        make(EstimatorKind::Rls)?,
                    ],
                );
            }
            agents.insert(
                a.id,
                AgentRuntime {
                    vio_rng: stream_rng(cfg.seed, Stream::Vio(a.id)),
                    cam_rng: stream_rng(cfg.seed, Stream::Camera(a.id)),
                    p_prev: a.p,
                    pairs,
                    target: TargetFilter::new(cfg.estimators.target.clone(), dt)?,
                    theta: None,
                    heard_theta: BTreeMap::new(),
                    neighbour_u: BTreeMap::new(),
                    u_prev: Vec2::zeros(),
                    u_psi_prev: 0.0,
                },
            );
        }
        let mut links = BTreeMap::new();
        for &i in &ids {
            for j in base_topology.neighbours(i).filter(|j| i < *j) {
                links.insert(
                    (i, j),
                    UwbLink {
                        stream: UwbStream::new(&cfg.sensors.uwb_preprocess, dt)?,
                        rng: stream_rng(cfg.seed, Stream::Uwb(i, j)),
                        d_prev: None,
                        d_curr: None,
                    },
                );
            }
        }
        Ok(Self {
            topology: base_topology.clone(),
            base_topology,
            cfg,
            world,
            est_cfg,
            gains,
            bus,
            agents,
            links,
            logs: LogSet::default(),
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn run(mut self) -> Result<RunOutput> {
        let steps = self.cfg.steps();
        let mut ended_early_at = None;
        for _ in 0..steps {
            match self.step() {
                Ok(()) => {}
                Err(Error::NoAgentsAlive) => {
                    ended_early_at = Some(self.world.step_index());
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if self.cfg.comms.trace {
            self.logs.messages = Some(
                self.bus
                    .take_trace()
                    .into_iter()
                    .map(|r| MessageRow {
                        step: r.step,
                        sender: r.sender.0,
                        recipient: r.recipient.0,
                        kind: r.kind.to_string(),
                        delivered: r.delivered,
                    })
                    .collect(),
            );
        }
        Ok(RunOutput {
            logs: self.logs,
            ended_early_at,
        })
    }

    fn handle_failures(&mut self) -> Result<()> {
        let died = self.world.apply_due_failures();
        if died.is_empty() {
            return Ok(());
        }
        let alive: BTreeSet<AgentId> = self.world.alive_ids().into_iter().collect();
        self.topology = update_topology(&self.base_topology, &alive)?;
        for d in &died {
            self.agents.remove(d);
        }
        for rt in self.agents.values_mut() {
            rt.pairs.retain(|j, _| alive.contains(j));
            rt.heard_theta.retain(|j, _| alive.contains(j));
            rt.neighbour_u.retain(|j, _| alive.contains(j));
        }
        self.links
            .retain(|(a, b), _| alive.contains(a) && alive.contains(b));
        Ok(())
    }

    /// Feeds every link the raw samples taken since the previous step.
    fn sense_uwb(&mut self, prev: &BTreeMap<AgentId, Vec2>) {
        let k = self.world.step_index();
        let noise = self.cfg.sensors.uwb;
        for (&(i, j), link) in self.links.iter_mut() {
            let (Some(a), Some(b)) = (self.world.agent(i), self.world.agent(j)) else {
                continue;
            };
            if k == 0 {
                let d = draw_uwb(a.p, b.p, &noise, &mut link.rng).range;
                link.d_curr = link.stream.push(d);
                continue;
            }
            let (pa0, pb0) = (prev[&i], prev[&j]);
            let n = link.stream.substeps_per_sample();
            let mut emitted = None;
            for s in 1..=n {
                let f = s as f64 / n as f64;
                let pa = pa0 + (a.p - pa0) * f;
                let pb = pb0 + (b.p - pb0) * f;
                let d = draw_uwb(pa, pb, &noise, &mut link.rng).range;
                if let Some(out) = link.stream.push(d) {
                    emitted = Some(out);
                }
            }
            link.d_prev = link.d_curr;
            link.d_curr = emitted;
        }
    }

    fn step(&mut self) -> Result<()> {
        self.handle_failures()?;
        let k = self.world.step_index();
        let t = self.world.time();
        let dt = self.world.dt();
        let snapshot = self.world.snapshot();
        let target_true = snapshot.target;

        // sensing
        let prev: BTreeMap<AgentId, Vec2> = self
            .agents
            .iter()
            .map(|(id, rt)| (*id, rt.p_prev))
            .collect();
        self.sense_uwb(&prev);
        let mut vio: BTreeMap<AgentId, VioMeasurement> = BTreeMap::new();
        let mut own_q: BTreeMap<AgentId, Option<Vec2>> = BTreeMap::new();
        for (&id, rt) in self.agents.iter_mut() {
            let a = *self.world.agent(id).ok_or(Error::UnknownAgent(id))?;
            let m = sense_vio(
                a.p,
                rt.p_prev,
                a.psi,
                &self.cfg.sensors.vio,
                &mut rt.vio_rng,
            );
            let m = if k == 0 {
                VioMeasurement {
                    delta: Vec2::zeros(),
                    ..m
                }
            } else {
                m
            };
            rt.p_prev = a.p;
            let q = sense_stereo(
                &a,
                &target_true,
                &self.cfg.sensors.camera,
                self.world.obstacles(),
                &mut rt.cam_rng,
            )
            .and_then(|det| backproject(&det, m.psi, &self.cfg.sensors.camera).ok())
            .map(|o| o.q);
            vio.insert(id, m);
            own_q.insert(id, q);
        }

        // target prediction and outbox
        let sigma_q = self.cfg.estimators.target.measurement_cov();
        let mut outbox = Vec::new();
        for (&id, rt) in self.agents.iter_mut() {
            rt.target.predict(rt.u_prev);
            let m = vio[&id];
            let mut send = |payload| {
                outbox.push(Message {
                    sender: id,
                    recipient: None,
                    k,
                    payload,
                })
            };
            send(Payload::Displacement {
                delta: m.delta,
                psi: m.psi,
            });
            send(Payload::ControlInput { u_km1: rt.u_prev });
            send(Payload::Target(NeighborPacket {
                sender: id,
                q_j0: own_q[&id],
                sigma_q,
                prior: rt.target.prior().copied(),
            }));
            if let Some(theta) = rt.theta {
                send(Payload::Phase { theta });
            }
        }
        let inboxes = self.bus.exchange(outbox, &self.topology, k);

        // relative estimation
        let feedback = kind_index(self.cfg.estimators.feedback);
        let mut rel_rows = Vec::new();
        for (&i, rt) in self.agents.iter_mut() {
            let inbox = inboxes.get(&i).map(Vec::as_slice).unwrap_or(&[]);
            let mut delta_j: BTreeMap<AgentId, Vec2> = BTreeMap::new();
            for msg in inbox {
                match msg.payload {
                    Payload::Displacement { delta, .. } if msg.k == k => {
                        delta_j.insert(msg.sender, delta);
                    }
                    Payload::ControlInput { u_km1 } => {
                        rt.neighbour_u.insert(msg.sender, u_km1);
                    }
                    Payload::Phase { theta } => {
                        rt.heard_theta.insert(msg.sender, (theta, msg.k));
                    }
                    _ => {}
                }
            }
            let p_i = self.world.agent(i).ok_or(Error::UnknownAgent(i))?.p;
            for (&j, ests) in rt.pairs.iter_mut() {
                let u_ij = rt.u_prev - rt.neighbour_u.get(&j).copied().unwrap_or_else(Vec2::zeros);
                if k > 0 {
                    let link = &self.links[&link_key(i, j)];
                    let inputs = match (link.d_curr, link.d_prev, delta_j.get(&j)) {
                        (Some(d_k), Some(d_km1), Some(dj)) => Some(RelativeInputs {
                            d_k,
                            d_km1,
                            delta_ij: vio[&i].delta - dj,
                            u_ij_km1: u_ij,
                        }),
                        _ => None,
                    };
                    for est in ests.iter_mut() {
                        match &inputs {
                            // failures leave the filter at its prediction
                            Some(inp) => {
                                let _ = est.step(inp, k, &self.est_cfg);
                            }
                            None => est.predict_only(u_ij, &self.est_cfg),
                        }
                    }
                }
                let p_j = self.world.agent(j).ok_or(Error::UnknownAgent(j))?.p;
                let truth = p_i - p_j;
                for est in ests.iter() {
                    let p_hat = est.position();
                    rel_rows.push(RelativeRow {
                        k,
                        t,
                        agent: i.0,
                        neighbor: j.0,
                        estimator: est.kind().as_str().to_string(),
                        px_hat: p_hat.x,
                        py_hat: p_hat.y,
                        px_true: truth.x,
                        py_true: truth.y,
                        error: (p_hat - truth).norm(),
                        trace_p: est.covariance_trace(),
                    });
                }
            }
        }
        self.logs.relative.extend(rel_rows);

        // target estimation
        for (&i, rt) in self.agents.iter_mut() {
            let inbox = inboxes.get(&i).map(Vec::as_slice).unwrap_or(&[]);
            let mut packets: Vec<(NeighborPacket, RelativeEstimate)> = Vec::new();
            for msg in inbox {
                if let Payload::Target(pkt) = msg.payload {
                    if let Some(ests) = rt.pairs.get(&pkt.sender) {
                        packets.push((pkt, as_relative_estimate(&ests[feedback])));
                    }
                }
            }
            let own = own_q[&i].map(|q| (q, sigma_q));
            let fused = fuse_event_triggered(own, packets.iter().map(|(p, r)| (p, r)));
            let priors: Vec<TargetPrior> = packets
                .iter()
                .filter_map(|(p, r)| p.prior.map(|pr| neighbor_prior(&pr, r)))
                .collect();
            let report = rt.target.update(&fused, &priors);
            let a = self.world.agent(i).ok_or(Error::UnknownAgent(i))?;
            let truth = a.p - target_true.p;
            let est = rt.target.estimate();
            self.logs.target.push(TargetRow {
                k,
                t,
                agent: i.0,
                mode: report.mode,
                visible: own_q[&i].is_some(),
                meas_error: own_q[&i].map(|q| (q - truth).norm()),
                est_error: est.map(|e| (e.position() - truth).norm()),
                px_hat: est.map(|e| e.x_hat[0]),
                py_hat: est.map(|e| e.x_hat[1]),
                trace_p: est.map(|e| e.p.trace()),
                numerical_failure: report.numerical_failure,
            });
        }

        // phases and control
        let mut phases_now: BTreeMap<AgentId, Option<f64>> = BTreeMap::new();
        for (&i, rt) in self.agents.iter_mut() {
            if rt.theta.is_none() {
                if let Some(e) = rt.target.estimate() {
                    let p = e.position();
                    rt.theta = Some(wrap_two_pi(p.y.atan2(p.x)));
                }
            }
            phases_now.insert(i, rt.theta);
        }
        let mut controls = BTreeMap::new();
        for (&i, rt) in self.agents.iter_mut() {
            let a = *self.world.agent(i).ok_or(Error::UnknownAgent(i))?;
            let truth = a.p - target_true.p;
            let psi_meas = vio[&i].psi;
            let mut row = ControlRow {
                k,
                t,
                agent: i.0,
                theta: rt.theta,
                pstar_x: None,
                pstar_y: None,
                u1_raw_x: 0.0,
                u1_raw_y: 0.0,
                u2_raw_x: 0.0,
                u2_raw_y: 0.0,
                ux: 0.0,
                uy: 0.0,
                psi: a.psi,
                psi_hat: None,
                radius_error_est: None,
                radius_error: truth.norm() - self.gains.rho,
                yaw_error: wrap_pi(a.psi - (-truth.y).atan2(-truth.x)),
            };
            let (Some(theta), Some(est)) = (rt.theta, rt.target.estimate().copied()) else {
                rt.u_prev = Vec2::zeros();
                controls.insert(i, (Vec2::zeros(), 0.0));
                self.logs.control.push(row);
                continue;
            };
            let mut thetas = vec![theta];
            let mut neighbour_phase = BTreeMap::new();
            for j in self.topology.neighbours(i) {
                if let Some(&(th, sent)) = rt.heard_theta.get(&j) {
                    let th = wrap_two_pi(th + (k - sent) as f64 * self.gains.delta_theta);
                    thetas.push(th);
                    neighbour_phase.insert(j, th);
                }
            }
            let (p_star, v_star) = desired_relative_state(theta, &self.gains, dt);
            let p_hat_i0 = est.position();
            let target_term = TrackingTerm {
                p_hat: p_hat_i0,
                v_hat: Some(Vec2::new(est.x_hat[2], est.x_hat[3])),
                p_star,
                v_star,
            };
            let mut terms = Vec::new();
            for (j, th_j) in &neighbour_phase {
                let Some(ests) = rt.pairs.get(j) else {
                    continue;
                };
                let (p_star_j, v_star_j) = desired_relative_state(*th_j, &self.gains, dt);
                let e = &ests[feedback];
                terms.push(TrackingTerm {
                    p_hat: e.position(),
                    v_hat: e.velocity(),
                    p_star: p_star - p_star_j,
                    v_star: v_star - v_star_j,
                });
            }
            let u = match formation_control(&target_term, &terms, &self.gains, dt) {
                Ok(out) => {
                    row.u1_raw_x = out.u1_raw.x;
                    row.u1_raw_y = out.u1_raw.y;
                    row.u2_raw_x = out.u2_raw.x;
                    row.u2_raw_y = out.u2_raw.y;
                    out.u
                }
                Err(_) => rt.u_prev,
            };
            let u_psi = match yaw_control(psi_meas, p_hat_i0, self.gains.k_psi) {
                Some((u_psi, psi_hat)) => {
                    row.psi_hat = Some(psi_hat);
                    u_psi
                }
                None => rt.u_psi_prev,
            };
            row.ux = u.x;
            row.uy = u.y;
            row.pstar_x = Some(p_star.x);
            row.pstar_y = Some(p_star.y);
            row.radius_error_est = Some(p_hat_i0.norm() - self.gains.rho);
            self.logs.control.push(row);
            rt.theta = Some(oscillator_step(theta, &thetas, &self.gains, dt));
            rt.u_prev = u;
            rt.u_psi_prev = u_psi;
            controls.insert(i, (u, u_psi));
        }

        // logs of the true state and ranges at step k
        self.logs.trajectory.push(TrajectoryRow {
            k,
            t,
            body: 0,
            alive: true,
            x: target_true.p.x,
            y: target_true.p.y,
            vx: target_true.v.x,
            vy: target_true.v.y,
            psi: 0.0,
        });
        for a in &snapshot.agents {
            self.logs.trajectory.push(TrajectoryRow {
                k,
                t,
                body: a.id.0,
                alive: a.alive,
                x: a.p.x,
                y: a.p.y,
                vx: a.v.x,
                vy: a.v.y,
                psi: a.psi,
            });
        }
        for (&(i, j), link) in &self.links {
            let d_true = (self.world.agent(i).map(|a| a.p).unwrap_or_default()
                - self.world.agent(j).map(|a| a.p).unwrap_or_default())
            .norm();
            self.logs.uwb.push(UwbRow {
                k,
                t,
                i: i.0,
                j: j.0,
                d_true,
                d_filtered: link.d_curr,
                held: link.stream.held_count(),
            });
        }
        self.world.advance(&controls)
    }
}

/// Runs a scenario to completion in memory.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    Simulation::new(cfg.clone())?.run()
}
