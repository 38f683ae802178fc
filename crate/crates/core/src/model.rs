//! Domain types shared by every other module.
//!
//! Types that carry invariants ([`SystemParams`], [`ServerState`],
//! [`TokenBatch`]) can only be obtained through checked constructors.

use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ParamError;
use crate::rng::{stream_rng, Stream};

/// Lower/upper bounds of the per-slot energy cap, joules.
pub const ENERGY_CAP_RANGE: (f64, f64) = (3.0, 15.0);
/// Lower/upper bounds of the long-term average energy budget, joules per slot.
pub const ENERGY_BUDGET_RANGE: (f64, f64) = (1.5, 9.5);

pub const DEFAULT_TRADEOFF_V: f64 = 50.0;
pub const DEFAULT_CONSISTENCY_WEIGHT: f64 = 1.0;
pub const DEFAULT_HORIZON: u64 = 500;

/// Unchecked parameter set. Turn it into [`SystemParams`] with
/// [`validate_params`] (or `TryFrom`).
///
/// Field names double as the JSON keys of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    /// Number of edge servers, one expert each.
    pub num_servers: usize,
    /// Experts activated per token.
    pub top_k: usize,
    /// Slot length, seconds.
    pub slot_duration: f64,
    /// Mean Poisson arrivals per slot.
    pub arrival_rate: f64,
    /// CPU cycles needed to process one token.
    pub cycles_per_token: f64,
    /// Frequency ceiling shared by all servers, cycles/second.
    pub max_frequency: f64,
    /// Effective switched capacitance per server.
    pub switched_capacitance: Vec<f64>,
    /// Hard per-slot energy cap per server, joules.
    pub energy_cap: Vec<f64>,
    /// Long-term average energy budget per server, joules/slot.
    pub energy_budget: Vec<f64>,
    pub tradeoff_v: f64,
    pub consistency_weight: f64,
    /// Number of slots simulated.
    pub horizon: u64,
    pub rng_seed: u64,
}

impl ParamSpec {
    /// The published experimental setup: 10 servers, top-3, 390 tokens/slot,
    /// 3 GHz, 10^7 cycles/token, heterogeneous energy drawn from `seed`.
    pub fn reference_setup(seed: u64) -> Self {
        let num_servers = 10;
        let (energy_cap, energy_budget) = heterogeneous_energy_profile(seed, num_servers);
        Self {
            num_servers,
            top_k: 3,
            slot_duration: 1.0,
            arrival_rate: 390.0,
            cycles_per_token: 1e7,
            max_frequency: 3e9,
            switched_capacitance: vec![2e-27; num_servers],
            energy_cap,
            energy_budget,
            tradeoff_v: DEFAULT_TRADEOFF_V,
            consistency_weight: DEFAULT_CONSISTENCY_WEIGHT,
            horizon: DEFAULT_HORIZON,
            rng_seed: seed,
        }
    }
}

/// Validated system parameters. Dereferences to the underlying [`ParamSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamSpec", into = "ParamSpec")]
pub struct SystemParams(ParamSpec);

impl SystemParams {
    pub fn reference_setup(seed: u64) -> Self {
        Self(ParamSpec::reference_setup(seed))
    }

    pub fn spec(&self) -> &ParamSpec {
        &self.0
    }

    pub fn into_spec(self) -> ParamSpec {
        self.0
    }

    /// Copy with a modified spec, re-validated.
    pub fn modified(&self, f: impl FnOnce(&mut ParamSpec)) -> Result<Self, ParamError> {
        let mut spec = self.0.clone();
        f(&mut spec);
        validate_params(spec)
    }

    /// D^max: tokens a server can process in one slot at full frequency.
    pub fn max_capacity(&self) -> u64 {
        crate::dynamics::floor_ratio(self.slot_duration * self.max_frequency, self.cycles_per_token)
    }
}

impl Deref for SystemParams {
    type Target = ParamSpec;
    fn deref(&self) -> &ParamSpec {
        &self.0
    }
}

impl TryFrom<ParamSpec> for SystemParams {
    type Error = ParamError;
    fn try_from(spec: ParamSpec) -> Result<Self, ParamError> {
        validate_params(spec)
    }
}

impl From<SystemParams> for ParamSpec {
    fn from(p: SystemParams) -> ParamSpec {
        p.0
    }
}

fn finite_positive(field: &'static str, v: f64) -> Result<(), ParamError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ParamError::new(field, format!("must be a finite value > 0, got {v}")))
    }
}

fn finite_non_negative(field: &'static str, v: f64) -> Result<(), ParamError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ParamError::new(field, format!("must be a finite value >= 0, got {v}")))
    }
}

/// Checks every parameter invariant and wraps the spec on success.
pub fn validate_params(p: ParamSpec) -> Result<SystemParams, ParamError> {
    if p.num_servers == 0 {
        return Err(ParamError::new("num_servers", "J must be at least 1"));
    }
    if p.top_k == 0 {
        return Err(ParamError::new("top_k", "K must be at least 1"));
    }
    if p.top_k > p.num_servers {
        return Err(ParamError::new(
            "top_k",
            format!("K exceeds J ({} > {})", p.top_k, p.num_servers),
        ));
    }
    finite_positive("slot_duration", p.slot_duration)?;
    finite_positive("cycles_per_token", p.cycles_per_token)?;
    finite_positive("max_frequency", p.max_frequency)?;
    finite_non_negative("arrival_rate", p.arrival_rate)?;
    finite_positive("tradeoff_v", p.tradeoff_v)?;
    finite_non_negative("consistency_weight", p.consistency_weight)?;
    let per_server = [
        ("switched_capacitance", p.switched_capacitance.len()),
        ("energy_cap", p.energy_cap.len()),
        ("energy_budget", p.energy_budget.len()),
    ];
    for (field, len) in per_server {
        if len != p.num_servers {
            return Err(ParamError::new(
                field,
                format!("expected {} values (one per server), got {len}", p.num_servers),
            ));
        }
    }
    for &xi in &p.switched_capacitance {
        finite_positive("switched_capacitance", xi)?;
    }
    for (j, (&cap, &budget)) in p.energy_cap.iter().zip(&p.energy_budget).enumerate() {
        finite_positive("energy_budget", budget)?;
        finite_positive("energy_cap", cap)?;
        if budget > cap {
            return Err(ParamError::new(
                "energy_budget",
                format!("server {j}: budget exceeds cap ({budget} > {cap})"),
            ));
        }
    }
    Ok(SystemParams(p))
}

/// Draws per-server (energy cap, energy budget) pairs uniformly from
/// [`ENERGY_CAP_RANGE`] and [`ENERGY_BUDGET_RANGE`], rejecting pairs whose
/// budget exceeds the cap.
pub fn heterogeneous_energy_profile(seed: u64, num_servers: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = stream_rng(seed, Stream::EnergyProfile, 0);
    let mut caps = Vec::with_capacity(num_servers);
    let mut budgets = Vec::with_capacity(num_servers);
    while caps.len() < num_servers {
        let cap = rng.random_range(ENERGY_CAP_RANGE.0..=ENERGY_CAP_RANGE.1);
        let budget = rng.random_range(ENERGY_BUDGET_RANGE.0..=ENERGY_BUDGET_RANGE.1);
        if budget <= cap {
            caps.push(cap);
            budgets.push(budget);
        }
    }
    (caps, budgets)
}

/// Backlogs of one server at a slot boundary.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ServerState {
    token_backlog: u64,
    energy_backlog: f64,
}

impl ServerState {
    pub fn new(token_backlog: u64, energy_backlog: f64) -> Result<Self, ParamError> {
        finite_non_negative("energy_backlog", energy_backlog)?;
        Ok(Self {
            token_backlog,
            energy_backlog,
        })
    }

    /// Q_j: routed but not yet processed tokens.
    pub fn token_backlog(&self) -> u64 {
        self.token_backlog
    }

    /// Z_j: accumulated energy use beyond the average budget, joules.
    pub fn energy_backlog(&self) -> f64 {
        self.energy_backlog
    }
}

/// One arriving token and its gating scores over all servers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub id: u64,
    pub scores: Vec<f64>,
}

/// The tokens arriving in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    slot: u64,
    num_servers: usize,
    tokens: Vec<Token>,
}

impl TokenBatch {
    /// Rejects rows of the wrong width and scores outside [0, 1].
    pub fn new(slot: u64, num_servers: usize, tokens: Vec<Token>) -> Result<Self, ParamError> {
        for t in &tokens {
            if t.scores.len() != num_servers {
                return Err(ParamError::new(
                    "gating_scores",
                    format!(
                        "token {} has {} scores, expected {num_servers}",
                        t.id,
                        t.scores.len()
                    ),
                ));
            }
            if let Some(bad) = t.scores.iter().find(|g| !(0.0..=1.0).contains(*g)) {
                return Err(ParamError::new(
                    "gating_scores",
                    format!("token {} has score {bad} outside [0, 1]", t.id),
                ));
            }
        }
        Ok(Self {
            slot,
            num_servers,
            tokens,
        })
    }

    pub fn empty(slot: u64, num_servers: usize) -> Self {
        Self {
            slot,
            num_servers,
            tokens: Vec::new(),
        }
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn num_servers(&self) -> usize {
        self.num_servers
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn score(&self, token: usize, server: usize) -> f64 {
        self.tokens[token].scores[server]
    }
}

/// Dense binary routing matrix, tokens × servers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Routing {
    servers: usize,
    cells: Vec<bool>,
}

impl Routing {
    pub fn zeros(tokens: usize, servers: usize) -> Self {
        Self {
            servers,
            cells: vec![false; tokens * servers],
        }
    }

    /// Builds a matrix from each token's list of chosen servers.
    pub fn from_choices<'a, I>(servers: usize, choices: I) -> Self
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let mut cells = Vec::new();
        for row in choices {
            let start = cells.len();
            cells.resize(start + servers, false);
            for &j in row {
                cells[start + j] = true;
            }
        }
        Self { servers, cells }
    }

    pub fn num_tokens(&self) -> usize {
        self.cells.len().checked_div(self.servers).unwrap_or(0)
    }

    pub fn num_servers(&self) -> usize {
        self.servers
    }

    pub fn get(&self, token: usize, server: usize) -> bool {
        self.cells[token * self.servers + server]
    }

    pub fn set(&mut self, token: usize, server: usize, value: bool) {
        self.cells[token * self.servers + server] = value;
    }

    pub fn row(&self, token: usize) -> &[bool] {
        &self.cells[token * self.servers..(token + 1) * self.servers]
    }

    /// Servers chosen for `token`, ascending.
    pub fn chosen(&self, token: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(token)
            .iter()
            .enumerate()
            .filter_map(|(j, &x)| x.then_some(j))
    }

    /// d_j^rou for every server.
    pub fn routed_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.servers];
        for row in self.cells.chunks_exact(self.servers.max(1)) {
            for (c, &x) in counts.iter_mut().zip(row) {
                *c += u64::from(x);
            }
        }
        counts
    }
}

/// Routing plus per-server CPU frequencies for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    pub routing: Routing,
    pub frequencies: Vec<f64>,
}

/// Everything realized in one slot once a decision is applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotOutcome {
    pub routed: Vec<u64>,
    pub completed: Vec<u64>,
    pub energy: Vec<f64>,
    pub objective_value: f64,
    pub gating_consistency: f64,
    pub post_state: Vec<ServerState>,
}

/// One row of a [`Trace`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub batch_size: usize,
    pub frequencies: Vec<f64>,
    pub outcome: SlotOutcome,
}

/// Per-slot history of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Trace {
    pub records: Vec<SlotRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Σ_t Σ_j d_j^com(t) after each slot.
    pub fn cumulative_throughput(&self) -> Vec<u64> {
        self.records
            .iter()
            .scan(0u64, |acc, r| {
                *acc += r.outcome.completed.iter().sum::<u64>();
                Some(*acc)
            })
            .collect()
    }

    /// Time average of completed tokens per server.
    pub fn mean_completed(&self) -> Vec<f64> {
        let Some(first) = self.records.first() else {
            return Vec::new();
        };
        let mut sums = vec![0.0; first.outcome.completed.len()];
        for r in &self.records {
            for (s, &d) in sums.iter_mut().zip(&r.outcome.completed) {
                *s += d as f64;
            }
        }
        let n = self.records.len() as f64;
        sums.into_iter().map(|s| s / n).collect()
    }

    /// γ(d̄) = Σ_j ln(1 + d̄_j).
    pub fn utility(&self) -> f64 {
        self.mean_completed().iter().map(|d| d.ln_1p()).sum()
    }

    /// Time average of G(t).
    pub fn mean_consistency(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records
            .iter()
            .map(|r| r.outcome.gating_consistency)
            .sum::<f64>()
            / self.records.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_setup_validates() {
        let p = SystemParams::reference_setup(0);
        let spec = p.clone().into_spec();
        assert_eq!(validate_params(spec).unwrap(), p);
        assert_eq!(p.num_servers, 10);
        assert_eq!(p.top_k, 3);
        assert_eq!(p.max_capacity(), 300);
    }

    #[test]
    fn k_exceeding_j_is_rejected() {
        let mut spec = ParamSpec::reference_setup(0);
        spec.top_k = 11;
        let err = validate_params(spec).unwrap_err();
        assert_eq!(err.field, "top_k");
        assert!(err.to_string().contains("K exceeds J"));
    }

    #[test]
    fn budget_above_cap_is_rejected() {
        let mut spec = ParamSpec::reference_setup(0);
        spec.energy_budget[0] = 2.0;
        spec.energy_cap[0] = 1.0;
        let err = validate_params(spec).unwrap_err();
        assert!(err.to_string().contains("budget exceeds cap"));
    }

    #[test]
    fn scalar_bounds_are_enforced() {
        let cases: [(&str, fn(&mut ParamSpec)); 7] = [
            ("slot_duration", |s| s.slot_duration = 0.0),
            ("cycles_per_token", |s| s.cycles_per_token = -1.0),
            ("max_frequency", |s| s.max_frequency = f64::NAN),
            ("arrival_rate", |s| s.arrival_rate = -0.5),
            ("tradeoff_v", |s| s.tradeoff_v = 0.0),
            ("consistency_weight", |s| s.consistency_weight = -1.0),
            ("switched_capacitance", |s| s.switched_capacitance[3] = 0.0),
        ];
        for (field, mutate) in cases {
            let mut spec = ParamSpec::reference_setup(1);
            mutate(&mut spec);
            assert_eq!(validate_params(spec).unwrap_err().field, field);
        }
        let mut spec = ParamSpec::reference_setup(1);
        spec.energy_cap.pop();
        assert_eq!(validate_params(spec).unwrap_err().field, "energy_cap");
        let mut spec = ParamSpec::reference_setup(1);
        spec.top_k = 0;
        assert_eq!(validate_params(spec).unwrap_err().field, "top_k");
    }

    #[test]
    fn energy_profile_ranges_and_determinism() {
        for seed in 0..50 {
            let (caps, budgets) = heterogeneous_energy_profile(seed, 10);
            assert_eq!(caps.len(), 10);
            for (c, b) in caps.iter().zip(&budgets) {
                assert!((3.0..=15.0).contains(c));
                assert!((1.5..=9.5).contains(b));
                assert!(b <= c);
            }
            assert_eq!((caps, budgets), heterogeneous_energy_profile(seed, 10));
        }
    }

    #[test]
    fn energy_profile_golden_seed0() {
        let (caps, budgets) = heterogeneous_energy_profile(0, 1);
        assert_eq!(caps, vec![GOLDEN_CAP]);
        assert_eq!(budgets, vec![GOLDEN_BUDGET]);
    }

    const GOLDEN_CAP: f64 = 13.790263910165228;
    const GOLDEN_BUDGET: f64 = 1.8613952205479887;

    #[test]
    fn params_round_trip_through_json() {
        let p = SystemParams::reference_setup(42);
        let text = serde_json::to_string_pretty(&p).unwrap();
        let back: SystemParams = serde_json::from_str(&text).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn invalid_json_params_are_rejected() {
        let mut spec = ParamSpec::reference_setup(0);
        spec.top_k = 11;
        let text = serde_json::to_string(&spec).unwrap();
        assert!(serde_json::from_str::<SystemParams>(&text).is_err());
        let typo = text.replacen("\"horizon\"", "\"horizn\"", 1);
        assert!(serde_json::from_str::<ParamSpec>(&typo).is_err());
    }

    #[test]
    fn server_state_rejects_negative_energy() {
        assert!(ServerState::new(0, -1e-3).is_err());
        assert!(ServerState::new(0, f64::INFINITY).is_err());
        let s = ServerState::new(4, 2.5).unwrap();
        assert_eq!((s.token_backlog(), s.energy_backlog()), (4, 2.5));
    }

    #[test]
    fn batch_rejects_out_of_range_scores() {
        let bad = vec![Token {
            id: 0,
            scores: vec![0.5, 1.2],
        }];
        assert!(TokenBatch::new(0, 2, bad).is_err());
        let short = vec![Token {
            id: 0,
            scores: vec![0.5],
        }];
        assert!(TokenBatch::new(0, 2, short).is_err());
    }

    #[test]
    fn routing_counts() {
        let r = Routing::from_choices(3, [&[0usize, 2][..], &[2][..]]);
        assert_eq!(r.num_tokens(), 2);
        assert_eq!(r.routed_counts(), vec![1, 0, 2]);
        assert_eq!(r.chosen(0).collect::<Vec<_>>(), vec![0, 2]);
    }
}
