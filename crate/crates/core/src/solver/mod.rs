//! Per-slot decisions.
//!
//! For a fixed completed count `d`, energy is smallest at the minimum
//! sufficient frequency `c·d/τ`, so frequencies are eliminated and each
//! server only chooses `d`. The remaining problem is
//!
//! ```text
//! max  Σ_j h_j(n_j) + Σ_i Σ_j (V·μ·g_ij − Q_j)·x_ij + Σ_j Z_j·E_j^avg
//! s.t. Σ_j x_ij = K for every token,  n_j = Σ_i x_ij
//! ```
//!
//! with concave `h_j` (see [`profile`]), solved exactly as a min-cost flow.

mod baseline;
mod bnb;
mod flow;
pub mod instances;
mod oracle;
pub mod profile;

use serde::{Deserialize, Serialize};

pub use baseline::{baseline_frequency, baseline_route, BaselineKind};
pub use bnb::DEFAULT_NODE_BUDGET;
pub use instances::{compare_with_oracle, random_instance, OracleComparison, OracleInstance, ORACLE_TOLERANCE};
pub use oracle::{brute_force_oracle, MAX_ROUTINGS};
pub use profile::{build_profile, energy_cap_tokens, ServerProfile};

use crate::error::SolverError;
use crate::lyapunov::apply_decision;
use crate::model::{ServerState, SlotDecision, SystemParams, TokenBatch};

/// Which algorithm produced an [`AssignmentResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    ExactFlow,
    BranchAndBound,
    BruteForce,
    Greedy,
}

/// Exact method used by [`solve_per_slot_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExactMethod {
    #[default]
    Flow,
    BranchAndBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub method: ExactMethod,
    pub node_budget: u64,
    /// Test hook: discard the profiles' maximizers so every server idles.
    #[doc(hidden)]
    pub corrupt_profiles: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            method: ExactMethod::Flow,
            node_budget: DEFAULT_NODE_BUDGET,
            corrupt_profiles: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    pub decision: SlotDecision,
    /// Per-slot objective of `decision`, constant terms included.
    pub objective_value: f64,
    pub solver_kind: SolverKind,
    /// True when the method guarantees optimality for this instance.
    pub certified_optimal: bool,
}

/// Exact per-slot optimum via min-cost flow.
pub fn solve_per_slot(
    batch: &TokenBatch,
    states: &[ServerState],
    p: &SystemParams,
) -> Result<AssignmentResult, SolverError> {
    solve_per_slot_with(batch, states, p, &SolveOptions::default())
}

pub fn solve_per_slot_with(
    batch: &TokenBatch,
    states: &[ServerState],
    p: &SystemParams,
    opts: &SolveOptions,
) -> Result<AssignmentResult, SolverError> {
    let (j_count, k) = (p.num_servers, p.top_k);
    if k > j_count {
        return Err(SolverError::KExceedsJ { k, servers: j_count });
    }
    let tokens = batch.len();
    let mut profiles = Vec::with_capacity(j_count);
    for (j, state) in states.iter().enumerate() {
        let prof = build_profile(j, state, tokens, p);
        prof.check_concave()?;
        profiles.push(prof);
    }
    if opts.corrupt_profiles {
        for prof in &mut profiles {
            prof.best_completed.iter_mut().for_each(|d| *d = 0);
            prof.best_frequency.iter_mut().for_each(|f| *f = 0.0);
        }
    }
    let vmu = p.tradeoff_v * p.consistency_weight;
    let mut rewards = Vec::with_capacity(tokens * j_count);
    for i in 0..tokens {
        for (j, s) in states.iter().enumerate() {
            rewards.push(vmu * batch.score(i, j) - s.token_backlog() as f64);
        }
    }
    let (routing, kind) = match opts.method {
        ExactMethod::Flow => {
            let marginals: Vec<Vec<f64>> = profiles.iter().map(ServerProfile::increments).collect();
            let (routing, _) = flow::TokenFlow::new(tokens, j_count, k, &rewards, &marginals).solve()?;
            (routing, SolverKind::ExactFlow)
        }
        ExactMethod::BranchAndBound => (
            bnb::branch_and_bound(&rewards, tokens, k, &profiles, opts.node_budget)?,
            SolverKind::BranchAndBound,
        ),
    };
    let loads = routing.routed_counts();
    let frequencies = profiles
        .iter()
        .zip(&loads)
        .map(|(prof, &n)| prof.best_frequency[n as usize])
        .collect();
    let decision = SlotDecision {
        routing,
        frequencies,
    };
    let outcome = apply_decision(batch, states, &decision, p)?;
    if !opts.corrupt_profiles && cfg!(debug_assertions) {
        let mut internal: f64 = profiles
            .iter()
            .zip(&loads)
            .map(|(prof, &n)| prof.values[n as usize])
            .sum();
        for i in 0..tokens {
            internal += decision.routing.chosen(i).map(|j| rewards[i * j_count + j]).sum::<f64>();
        }
        internal += states
            .iter()
            .zip(&p.energy_budget)
            .map(|(s, e)| s.energy_backlog() * e)
            .sum::<f64>();
        let scale = 1.0 + internal.abs();
        debug_assert!(
            (internal - outcome.objective_value).abs() <= 1e-9 * scale,
            "flow value {internal} disagrees with evaluated objective {}",
            outcome.objective_value
        );
    }
    Ok(AssignmentResult {
        decision,
        objective_value: outcome.objective_value,
        solver_kind: kind,
        certified_optimal: !opts.corrupt_profiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ParamSpec, Token};

    fn params(j: usize, k: usize, v: f64, mu: f64) -> SystemParams {
        let mut s = ParamSpec::reference_setup(0);
        s.num_servers = j;
        s.top_k = k;
        s.switched_capacitance = vec![2e-27; j];
        s.energy_cap = vec![15.0; j];
        s.energy_budget = vec![9.5; j];
        s.tradeoff_v = v;
        s.consistency_weight = mu;
        crate::model::validate_params(s).unwrap()
    }

    fn batch(rows: &[&[f64]]) -> TokenBatch {
        let j = rows.first().map_or(0, |r| r.len());
        let tokens = rows
            .iter()
            .enumerate()
            .map(|(i, r)| Token { id: i as u64, scores: r.to_vec() })
            .collect();
        TokenBatch::new(0, j, tokens).unwrap()
    }

    fn zero_states(j: usize) -> Vec<ServerState> {
        vec![ServerState::default(); j]
    }

    #[test]
    fn gating_weight_concentrates_tokens() {
        let p = params(2, 1, 1.0, 10.0);
        let b = batch(&[&[0.9, 0.1], &[0.9, 0.1]]);
        let res = solve_per_slot(&b, &zero_states(2), &p).unwrap();
        assert_eq!(res.decision.routing.routed_counts(), vec![2, 0]);
        // ln 3 + 10·(0.9 + 0.9) plus Σ Z·E_avg = 0.
        assert!((res.objective_value - (3f64.ln() + 18.0)).abs() < 1e-9);
        assert!((res.objective_value - 19.0986).abs() < 1e-4);
    }

    #[test]
    fn utility_alone_splits_with_tie_break() {
        let p = params(2, 1, 1.0, 0.0);
        let b = batch(&[&[0.9, 0.1], &[0.9, 0.1]]);
        let res = solve_per_slot(&b, &zero_states(2), &p).unwrap();
        assert_eq!(res.decision.routing.chosen(0).collect::<Vec<_>>(), vec![0]);
        assert_eq!(res.decision.routing.chosen(1).collect::<Vec<_>>(), vec![1]);
        assert!((res.objective_value - 2.0 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn k_equal_j_routes_everywhere() {
        let p = params(3, 3, 5.0, 1.0);
        let b = batch(&[&[0.2, 0.3, 0.5], &[0.6, 0.2, 0.2], &[0.1, 0.1, 0.8]]);
        let states = vec![
            ServerState::new(4, 0.0).unwrap(),
            ServerState::new(0, 3.0).unwrap(),
            ServerState::new(9, 1.0).unwrap(),
        ];
        let res = solve_per_slot(&b, &states, &p).unwrap();
        for i in 0..3 {
            assert_eq!(res.decision.routing.chosen(i).count(), 3);
        }
        for j in 0..3 {
            let prof = build_profile(j, &states[j], 3, &p);
            assert_eq!(res.decision.frequencies[j], prof.best_frequency[3]);
        }
    }

    #[test]
    fn empty_batch_drains_queues() {
        let p = params(2, 1, 1.0, 1.0);
        let states = vec![ServerState::new(12, 0.0).unwrap(), ServerState::new(0, 0.0).unwrap()];
        let b = TokenBatch::empty(0, 2);
        let res = solve_per_slot(&b, &states, &p).unwrap();
        let oracle = brute_force_oracle(&b, &states, &p).unwrap();
        assert!((res.objective_value - oracle.objective_value).abs() < 1e-9);
        assert_eq!(res.decision.frequencies[0], 12.0 * p.cycles_per_token);
        assert_eq!(res.decision.frequencies[1], 0.0);
    }

    #[test]
    fn branch_and_bound_agrees_with_flow() {
        let p = params(4, 2, 3.0, 2.0);
        let b = batch(&[
            &[0.1, 0.2, 0.3, 0.4],
            &[0.7, 0.1, 0.1, 0.1],
            &[0.25, 0.25, 0.25, 0.25],
            &[0.0, 0.5, 0.5, 0.0],
        ]);
        let states = vec![
            ServerState::new(3, 0.5).unwrap(),
            ServerState::new(0, 9.0).unwrap(),
            ServerState::new(14, 0.0).unwrap(),
            ServerState::new(1, 2.0).unwrap(),
        ];
        let flow = solve_per_slot(&b, &states, &p).unwrap();
        let opts = SolveOptions {
            method: ExactMethod::BranchAndBound,
            ..SolveOptions::default()
        };
        let bb = solve_per_slot_with(&b, &states, &p, &opts).unwrap();
        assert_eq!(bb.solver_kind, SolverKind::BranchAndBound);
        assert!((flow.objective_value - bb.objective_value).abs() < 1e-9);
    }

    #[test]
    fn node_budget_is_enforced() {
        let p = params(4, 2, 1.0, 1.0);
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![0.1 * (i % 3) as f64, 0.2, 0.3, 0.1]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let opts = SolveOptions {
            method: ExactMethod::BranchAndBound,
            node_budget: 3,
            ..SolveOptions::default()
        };
        let err = solve_per_slot_with(&batch(&refs), &zero_states(4), &p, &opts).unwrap_err();
        assert!(matches!(err, SolverError::NodeBudget { budget: 3 }));
    }

    #[test]
    fn oracle_rejects_huge_instances() {
        let p = params(10, 3, 1.0, 1.0);
        let rows = vec![vec![0.1; 10]; 4];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        assert!(matches!(
            brute_force_oracle(&batch(&refs), &zero_states(10), &p),
            Err(SolverError::TooLarge { .. })
        ));
    }

    #[test]
    fn single_server_oracle_is_one_dimensional() {
        let p = params(1, 1, 2.0, 1.0);
        let state = ServerState::new(7, 4.0).unwrap();
        let b = batch(&[&[1.0], &[1.0]]);
        let oracle = brute_force_oracle(&b, &[state], &p).unwrap();
        let prof = build_profile(0, &state, 2, &p);
        let expected = prof.values[2] + 2.0 * (2.0 - 7.0) + 4.0 * 9.5;
        assert!((oracle.objective_value - expected).abs() < 1e-9);
    }

    #[test]
    fn corrupted_profiles_idle_servers() {
        let p = params(2, 1, 1.0, 1.0);
        let b = batch(&[&[0.5, 0.5]]);
        let opts = SolveOptions {
            corrupt_profiles: true,
            ..SolveOptions::default()
        };
        let res = solve_per_slot_with(&b, &zero_states(2), &p, &opts).unwrap();
        assert!(res.decision.frequencies.iter().all(|&f| f == 0.0));
        assert!(!res.certified_optimal);
    }
}
