//! Random small instances for checking the exact solver against the oracle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ParamError, SolverError};
use crate::model::{ParamSpec, ServerState, SystemParams, Token, TokenBatch};
use crate::rng::{stream_rng, Stream};

use super::{brute_force_oracle, solve_per_slot_with, SolveOptions};

pub const ORACLE_TOLERANCE: f64 = 1e-9;

/// A self-contained per-slot problem, serializable for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInstance {
    pub params: SystemParams,
    pub states: Vec<ServerState>,
    pub tokens: Vec<Token>,
}

impl OracleInstance {
    pub fn batch(&self) -> Result<TokenBatch, ParamError> {
        TokenBatch::new(0, self.params.num_servers, self.tokens.clone())
    }
}

/// Instance `index` of the stream keyed by `seed`.
///
/// |S| ≤ 5, J ≤ 4, K ≤ 2, integer Q ∈ [0, 20], Z ∈ [0, 10],
/// V ∈ {0.1, 1, 10}, μ ∈ {0, 1, 5}. Capacitances are log-uniform over
/// four decades so that energy terms bind at single-digit token counts.
pub fn random_instance(seed: u64, index: u64) -> OracleInstance {
    let mut rng = stream_rng(seed, Stream::OracleInstances, index);
    let servers = rng.random_range(1..=4usize);
    let top_k = rng.random_range(1..=servers.min(2));
    let tokens = rng.random_range(0..=5usize);
    let mut spec = ParamSpec::reference_setup(seed);
    spec.num_servers = servers;
    spec.top_k = top_k;
    spec.tradeoff_v = [0.1, 1.0, 10.0][rng.random_range(0..3)];
    spec.consistency_weight = [0.0, 1.0, 5.0][rng.random_range(0..3)];
    spec.switched_capacitance = (0..servers)
        .map(|_| 10f64.powf(rng.random_range(-25.0..-21.0)))
        .collect();
    spec.energy_cap = (0..servers).map(|_| rng.random_range(0.5..20.0)).collect();
    spec.energy_budget = spec
        .energy_cap
        .iter()
        .map(|cap| cap * rng.random_range(0.1..1.0))
        .collect();
    let params = SystemParams::try_from(spec).expect("generated parameters are valid");
    let states = (0..servers)
        .map(|_| ServerState::new(rng.random_range(0..=20), rng.random_range(0.0..=10.0)).expect("valid state"))
        .collect();
    let tokens = (0..tokens)
        .map(|i| {
            let raw: Vec<f64> = (0..servers).map(|_| rng.random_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum::<f64>().max(f64::MIN_POSITIVE);
            Token {
                id: i as u64,
                scores: raw.iter().map(|g| g / total).collect(),
            }
        })
        .collect();
    OracleInstance { params, states, tokens }
}

/// Objectives of the exact solver and the oracle on one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleComparison {
    pub solver_objective: f64,
    pub oracle_objective: f64,
}

impl OracleComparison {
    pub fn gap(&self) -> f64 {
        (self.solver_objective - self.oracle_objective).abs()
    }

    pub fn matches(&self) -> bool {
        self.gap() <= ORACLE_TOLERANCE
    }
}

pub fn compare_with_oracle(inst: &OracleInstance, opts: &SolveOptions) -> Result<OracleComparison, SolverError> {
    let batch = inst.batch()?;
    let solver = solve_per_slot_with(&batch, &inst.states, &inst.params, opts)?;
    let oracle = brute_force_oracle(&batch, &inst.states, &inst.params)?;
    Ok(OracleComparison {
        solver_objective: solver.objective_value,
        oracle_objective: oracle.objective_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_respect_bounds_and_repeat() {
        for idx in 0..300 {
            let inst = random_instance(7, idx);
            assert_eq!(inst, random_instance(7, idx));
            let p = &inst.params;
            assert!((1..=4).contains(&p.num_servers));
            assert!(p.top_k <= 2 && p.top_k <= p.num_servers);
            assert!(inst.tokens.len() <= 5);
            assert!([0.1, 1.0, 10.0].contains(&p.tradeoff_v));
            assert!([0.0, 1.0, 5.0].contains(&p.consistency_weight));
            for s in &inst.states {
                assert!(s.token_backlog() <= 20);
                assert!((0.0..=10.0).contains(&s.energy_backlog()));
            }
        }
    }

    #[test]
    fn instances_round_trip_through_json() {
        let inst = random_instance(3, 11);
        let text = serde_json::to_string(&inst).unwrap();
        assert_eq!(serde_json::from_str::<OracleInstance>(&text).unwrap(), inst);
    }
}
