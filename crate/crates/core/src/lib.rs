//! Queue-aware top-K token routing for distributed mixture-of-experts
//! training on heterogeneous, energy-constrained edge servers.
//!
//! Each slot a Poisson batch of tokens arrives with gating scores. The
//! router picks K servers per token and a CPU frequency per server so as to
//! maximize a drift-plus-penalty objective over the servers' token queues
//! and virtual energy queues. [`solver::solve_per_slot`] solves that slot
//! problem exactly; [`sim::run`] drives it (or one of four baseline
//! routings) through a horizon of slots.

pub mod dynamics;
pub mod error;
pub mod gating;
pub mod lyapunov;
pub mod model;
pub mod report;
pub mod rng;
pub mod sim;
pub mod solver;

pub use error::{DynamicsError, Infeasible, ParamError, ReplayError, SimError, SolverError};
pub use model::{
    heterogeneous_energy_profile, validate_params, ParamSpec, Routing, ServerState, SlotDecision,
    SlotOutcome, SlotRecord, SystemParams, Token, TokenBatch, Trace,
};
pub use sim::{compare, run, run_with, sweep_v, RunOptions, RunResult, Strategy, Summary};
pub use solver::{solve_per_slot, AssignmentResult, SolveOptions};
