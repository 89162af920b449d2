//! Seeded random substreams. Every noise source owns its own ChaCha stream so
//! the order in which agents are evaluated never changes a draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geometry::Vec2;
use crate::world::AgentId;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    TargetProcess,
    Comms,
    AgentProcess(AgentId),
    Vio(AgentId),
    Camera(AgentId),
    /// Ranging stream held by the first agent towards the second.
    Uwb(AgentId, AgentId),
}

impl Stream {
    fn index(self) -> u64 {
        const SHIFT: u64 = 40;
        match self {
            Stream::TargetProcess => 1,
            Stream::Comms => 2,
            Stream::AgentProcess(i) => (3 << SHIFT) | i.0 as u64,
            Stream::Vio(i) => (4 << SHIFT) | i.0 as u64,
            Stream::Camera(i) => (5 << SHIFT) | i.0 as u64,
            Stream::Uwb(i, j) => (6 << SHIFT) | ((i.0 as u64) << 20) | j.0 as u64,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.index());
    rng
}

/// Zero-mean Gaussian draw; a zero standard deviation returns exactly zero
/// without touching the generator.
pub fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    std * z
}

pub fn gaussian2<R: rand::Rng + ?Sized>(rng: &mut R, std: f64) -> Vec2 {
    Vec2::new(gaussian(rng, std), gaussian(rng, std))
}
