//! Simulation and estimation stack for cooperative target circumnavigation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comms;
pub mod control;
pub mod error;
pub mod geometry;
pub mod relative;
pub mod rng;
pub mod scenario;
pub mod sensors;
pub mod target;
pub mod world;

pub use error::{Error, Result};
pub use geometry::{Mat2, Mat4, Vec2, Vec4};
pub use world::{AgentId, AgentState, TargetState};
