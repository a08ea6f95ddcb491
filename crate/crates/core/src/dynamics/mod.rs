//! The per-node state machine and the event-driven simulation loop.

pub mod drift;
pub mod params;
pub mod state;

mod sim;

pub use drift::{drift_matrix, DriftMatrix};
pub use params::{params_from, DadaoParams};
pub use sim::{run, Probes, RunMode, RunOptions, Trajectory};
pub use state::{gossip_jump, gossip_jump_in_place, gradient_jump, propagate, NodeState};
