use thiserror::Error;

/// Parameter validation failure. `field` names the offending `SystemParams` field.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid parameter `{field}`: {reason}")]
pub struct ParamError {
    pub field: &'static str,
    pub reason: String,
}

impl ParamError {
    pub(crate) fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self {
            field,
            reason: reason.into(),
        }
    }
}

/// A slot decision that breaks one of the hard per-slot constraints.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Infeasible {
    #[error("C1: token {token} routed to {count} servers, expected {k}")]
    TopK { token: usize, count: usize, k: usize },
    #[error("routing matrix has {rows} rows but the batch has {tokens} tokens")]
    RoutingShape { rows: usize, tokens: usize },
    #[error("token {token} has {cols} routing entries, expected {servers}")]
    RoutingWidth {
        token: usize,
        cols: usize,
        servers: usize,
    },
    #[error("expected {expected} frequencies, got {got}")]
    FrequencyCount { expected: usize, got: usize },
    #[error("C2: server {server} frequency {f} outside [0, {f_max}]")]
    Frequency { server: usize, f: f64, f_max: f64 },
    #[error("C4: server {server} energy {energy} J exceeds cap {cap} J")]
    EnergyCap { server: usize, energy: f64, cap: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("frequency {f} outside [0, {f_max}]")]
    FrequencyOutOfRange { f: f64, f_max: f64 },
    #[error("completed {d_com} exceeds available {available} tokens")]
    OverCompletion { d_com: u64, available: u64 },
    #[error("{d_com} tokens cannot be processed at zero frequency")]
    ZeroFrequencyWork { d_com: u64 },
    #[error("target {d} exceeds per-slot capacity {capacity}")]
    OverCapacity { d: u64, capacity: u64 },
    #[error("energy quantity `{name}` = {value} is invalid")]
    BadEnergy { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Infeasible(#[from] Infeasible),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("top-K {k} exceeds server count {servers}")]
    KExceedsJ { k: usize, servers: usize },
    #[error("server {server} profile is not concave at n={n}: increment {next} > {prev}")]
    NonConcaveProfile {
        server: usize,
        n: usize,
        prev: f64,
        next: f64,
    },
    #[error("instance too large for exhaustive search: {routings} routings")]
    TooLarge { routings: f64 },
    #[error("branch-and-bound exceeded its node budget of {budget}")]
    NodeBudget { budget: u64 },
    #[error("no augmenting path for token {token}")]
    NoPath { token: usize },
}

/// Run-level failure, tagged with the slot where it happened.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("slot {slot}: {source}")]
pub struct SimError {
    pub slot: u64,
    #[source]
    pub source: SolverError,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}
