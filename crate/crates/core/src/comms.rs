//! Step-synchronous message bus between agents with optional loss and delay.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::rng::SimRng;
use crate::target::NeighborPacket;
use crate::world::AgentId;

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payload {
    Displacement { delta: Vec2, psi: f64 },
    ControlInput { u_km1: Vec2 },
    Target(NeighborPacket),
    Phase { theta: f64 },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Displacement { .. } => "displacement",
            Payload::ControlInput { .. } => "control",
            Payload::Target(_) => "target",
            Payload::Phase { .. } => "phase",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Message {
    pub sender: AgentId,
    /// `None` broadcasts to every neighbour of the sender.
    pub recipient: Option<AgentId>,
    /// Step at which the payload was produced.
    pub k: u64,
    pub payload: Payload,
}

/// Undirected neighbour sets over the alive agents.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Topology {
    adjacency: BTreeMap<AgentId, BTreeSet<AgentId>>,
}

impl Topology {
    pub fn full(ids: &[AgentId]) -> Self {
        let adjacency = ids
            .iter()
            .map(|&i| (i, ids.iter().copied().filter(|&j| j != i).collect()))
            .collect();
        Self { adjacency }
    }

    /// Builds a topology from undirected edges; self-loops are rejected.
    pub fn from_edges(ids: &[AgentId], edges: &[(AgentId, AgentId)]) -> Result<Self> {
        let mut adjacency: BTreeMap<AgentId, BTreeSet<AgentId>> =
            ids.iter().map(|&i| (i, BTreeSet::new())).collect();
        for &(a, b) in edges {
            if a == b {
                return Err(Error::Config(format!("self-loop on agent {a}")));
            }
            for (x, y) in [(a, b), (b, a)] {
                adjacency
                    .get_mut(&x)
                    .ok_or(Error::UnknownAgent(x))?
                    .insert(y);
            }
        }
        Ok(Self { adjacency })
    }

    pub fn neighbours(&self, i: AgentId) -> impl Iterator<Item = AgentId> + '_ {
        self.adjacency.get(&i).into_iter().flatten().copied()
    }

    pub fn contains(&self, i: AgentId) -> bool {
        self.adjacency.contains_key(&i)
    }

    pub fn connected(&self, i: AgentId, j: AgentId) -> bool {
        self.adjacency.get(&i).is_some_and(|s| s.contains(&j))
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn is_symmetric(&self) -> bool {
        self.adjacency
            .iter()
            .all(|(i, ns)| !ns.contains(i) && ns.iter().all(|j| self.connected(*j, *i)))
    }
}

/// Drops dead agents and every edge touching them.
pub fn update_topology(topology: &Topology, alive: &BTreeSet<AgentId>) -> Result<Topology> {
    if alive.is_empty() {
        return Err(Error::NoAgentsAlive);
    }
    let adjacency = topology
        .adjacency
        .iter()
        .filter(|(i, _)| alive.contains(i))
        .map(|(i, ns)| (*i, ns.intersection(alive).copied().collect()))
        .collect();
    Ok(Topology { adjacency })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommsPolicy {
    pub loss_probability: f64,
    pub delay_steps: u64,
}

impl CommsPolicy {
    pub const IDEAL: CommsPolicy = CommsPolicy {
        loss_probability: 0.0,
        delay_steps: 0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(Error::Config(format!(
                "loss_probability must be in [0,1], got {}",
                self.loss_probability
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BusCounters {
    pub emitted: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: u64,
    pub sender: AgentId,
    pub recipient: AgentId,
    pub kind: &'static str,
    pub delivered: bool,
}

pub type Inboxes = BTreeMap<AgentId, Vec<Message>>;

#[derive(Debug, Clone)]
pub struct MessageBus {
    policy: CommsPolicy,
    rng: SimRng,
    /// Messages keyed by delivery step, each with its recipient.
    pending: BTreeMap<u64, Vec<(AgentId, Message)>>,
    counters: BusCounters,
    trace: Option<Vec<TraceRecord>>,
}

impl MessageBus {
    pub fn new(policy: CommsPolicy, rng: SimRng, record_trace: bool) -> Result<Self> {
        policy.validate()?;
        Ok(Self {
            policy,
            rng,
            pending: BTreeMap::new(),
            counters: BusCounters::default(),
            trace: record_trace.then(Vec::new),
        })
    }

    pub fn counters(&self) -> BusCounters {
        self.counters
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn record(&mut self, step: u64, recipient: AgentId, msg: &Message, delivered: bool) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceRecord {
                step,
                sender: msg.sender,
                recipient,
                kind: msg.payload.kind(),
                delivered,
            });
        }
    }

    /// Routes the step-`k` outbox along `topology` and returns what arrives at
    /// step `k`. Copies addressed to agents no longer in the topology at
    /// delivery time are dropped.
    pub fn exchange(&mut self, outbox: Vec<Message>, topology: &Topology, k: u64) -> Inboxes {
        for msg in outbox {
            let recipients: Vec<AgentId> = match msg.recipient {
                Some(r) if topology.connected(msg.sender, r) => vec![r],
                Some(r) => {
                    self.counters.emitted += 1;
                    self.counters.dropped += 1;
                    self.record(k, r, &msg, false);
                    continue;
                }
                None => topology.neighbours(msg.sender).collect(),
            };
            for r in recipients {
                self.counters.emitted += 1;
                let lost = self.policy.loss_probability > 0.0
                    && self.rng.random::<f64>() < self.policy.loss_probability;
                if lost {
                    self.counters.dropped += 1;
                    self.record(k, r, &msg, false);
                } else {
                    self.counters.in_flight += 1;
                    self.pending
                        .entry(k + self.policy.delay_steps)
                        .or_default()
                        .push((r, msg));
                }
            }
        }
        let mut inboxes: Inboxes = topology.agents().map(|i| (i, Vec::new())).collect();
        let due: Vec<u64> = self.pending.range(..=k).map(|(s, _)| *s).collect();
        for s in due {
            for (r, msg) in self.pending.remove(&s).unwrap_or_default() {
                self.counters.in_flight -= 1;
                match inboxes.get_mut(&r) {
                    Some(inbox) => {
                        inbox.push(msg);
                        self.counters.delivered += 1;
                        self.record(k, r, &msg, true);
                    }
                    None => {
                        self.counters.dropped += 1;
                        self.record(k, r, &msg, false);
                    }
                }
            }
        }
        inboxes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn ids(n: usize) -> Vec<AgentId> {
        (1..=n).map(AgentId).collect()
    }

    fn broadcast_all(n: usize, k: u64) -> Vec<Message> {
        let mut out = Vec::new();
        for i in ids(n) {
            out.push(Message {
                sender: i,
                recipient: None,
                k,
                payload: Payload::Phase { theta: i.0 as f64 },
            });
            out.push(Message {
                sender: i,
                recipient: None,
                k,
                payload: Payload::ControlInput {
                    u_km1: Vec2::zeros(),
                },
            });
        }
        out
    }

    fn bus(policy: CommsPolicy) -> MessageBus {
        MessageBus::new(policy, stream_rng(1, Stream::Comms), true).unwrap()
    }

    #[test]
    fn full_topology_counts() {
        let topo = Topology::full(&ids(3));
        let mut b = bus(CommsPolicy::IDEAL);
        let inbox = b.exchange(broadcast_all(3, 0), &topo, 0);
        for i in ids(3) {
            let msgs = &inbox[&i];
            assert_eq!(
                msgs.iter().filter(|m| m.payload.kind() == "phase").count(),
                2
            );
            assert_eq!(
                msgs.iter()
                    .filter(|m| m.payload.kind() == "control")
                    .count(),
                2
            );
            assert!(msgs.iter().all(|m| m.sender != i));
        }
        let c = b.counters();
        assert_eq!(c.emitted, 12);
        assert_eq!(c.delivered, 12);
    }

    #[test]
    fn total_loss_empties_inboxes() {
        let topo = Topology::full(&ids(3));
        let mut b = bus(CommsPolicy {
            loss_probability: 1.0,
            delay_steps: 0,
        });
        let inbox = b.exchange(broadcast_all(3, 0), &topo, 0);
        assert!(inbox.values().all(|v| v.is_empty()));
        assert_eq!(b.counters().dropped, 12);
    }

    #[test]
    fn delay_shifts_delivery() {
        let topo = Topology::full(&ids(2));
        let mut b = bus(CommsPolicy {
            loss_probability: 0.0,
            delay_steps: 1,
        });
        let first = b.exchange(broadcast_all(2, 0), &topo, 0);
        assert!(first.values().all(|v| v.is_empty()));
        assert_eq!(b.counters().in_flight, 4);
        let second = b.exchange(broadcast_all(2, 1), &topo, 1);
        for msgs in second.values() {
            assert_eq!(msgs.len(), 2);
            assert!(msgs.iter().all(|m| m.k == 0));
        }
        let c = b.counters();
        assert_eq!(c.delivered + c.dropped + c.in_flight, c.emitted);
    }

    #[test]
    fn topology_updates() {
        let topo = Topology::full(&ids(3));
        let alive: BTreeSet<_> = [AgentId(1), AgentId(3)].into();
        let t = update_topology(&topo, &alive).unwrap();
        assert!(t.connected(AgentId(1), AgentId(3)));
        assert!(!t.contains(AgentId(2)));
        assert!(t.is_symmetric());

        let one = update_topology(&topo, &[AgentId(2)].into()).unwrap();
        assert_eq!(one.neighbours(AgentId(2)).count(), 0);
        assert!(matches!(
            update_topology(&topo, &BTreeSet::new()),
            Err(Error::NoAgentsAlive)
        ));

        let ring = Topology::from_edges(
            &ids(4),
            &[
                (AgentId(1), AgentId(2)),
                (AgentId(2), AgentId(3)),
                (AgentId(3), AgentId(4)),
                (AgentId(4), AgentId(1)),
            ],
        )
        .unwrap();
        let alive: BTreeSet<_> = [AgentId(1), AgentId(2), AgentId(4)].into();
        let r = update_topology(&ring, &alive).unwrap();
        assert_eq!(
            r.neighbours(AgentId(1)).collect::<Vec<_>>(),
            vec![AgentId(2), AgentId(4)]
        );
        assert_eq!(
            r.neighbours(AgentId(2)).collect::<Vec<_>>(),
            vec![AgentId(1)]
        );
        assert!(!r.connected(AgentId(2), AgentId(4)));
        assert!(Topology::from_edges(&ids(2), &[(AgentId(1), AgentId(1))]).is_err());
    }
}
