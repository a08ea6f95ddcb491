//! Decoupled, accelerated, decentralized, asynchronous optimization over
//! time-varying graphs.
//!
//! The crate simulates a network of `n` workers minimizing `Σ_i f_i(x)` where
//! every `f_i` is `μ`-strongly convex and `L`-smooth. Gradient steps and
//! pairwise gossip exchanges are driven by two independent Poisson point
//! processes; between events every worker follows a linear ODE which is
//! integrated exactly with a matrix exponential.
//!
//! Module map:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`graph`] | graphs, Laplacians, `χ₁`, `χ₂`, `λ*`, generators, edge-list IO |
//! | [`events`] | Poisson streams and the merged event schedule |
//! | [`dynamics`] | parameters, drift matrix, jumps and the simulation loop |
//! | [`objectives`] | linear / logistic regression problems with certified minimizers |
//! | [`metrics`] | distance to optimum, consensus error, Lyapunov potential |
//! | [`experiment`] | config-driven multi-seed runs and scaling sweeps |

pub mod config;
pub mod dynamics;
pub mod events;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod objectives;
pub mod rng;

mod error;

pub use config::{ExperimentConfig, GraphSpec, Mode, Task};
pub use dynamics::{
    params_from, run, DadaoParams, DriftMatrix, NodeState, RunMode, RunOptions, Trajectory,
};
pub use error::{Error, Result};
pub use events::{build_schedule, Event, EventKind, EventSchedule, EventStream};
pub use experiment::{run_experiment, save_sweep, scaling_sweep, ExperimentSummary, SweepRow, SweepTable};
pub use graph::{Graph, GraphKind, LaplacianMatrix, SpectralReport, TimeVaryingTopology};
pub use metrics::{LyapunovCoefficients, ProbeRecord};
pub use objectives::{Objective, ObjectiveKind, SaddleCertificate};
