//! Exhaustive reference solver for small instances.
//!
//! Enumerates every top-K routing and, per server, every completed count
//! `d` run at its minimum frequency. Given the routing the objective is
//! separable across servers, so scanning `d` per server is exhaustive.
//! Shares no code with the profile or flow machinery.

use std::collections::HashMap;

use crate::dynamics::{energy_at_min_frequency, min_frequency_for};
use crate::error::SolverError;
use crate::lyapunov::{apply_decision, ENERGY_TOLERANCE};
use crate::model::{Routing, ServerState, SlotDecision, SystemParams, TokenBatch};

use super::{AssignmentResult, SolverKind};

/// Largest enumeration the oracle accepts.
pub const MAX_ROUTINGS: f64 = 1e6;

/// All K-subsets of 0..n in lexicographic order.
pub(crate) fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for x in start..n {
            if n - x < k - cur.len() {
                break;
            }
            cur.push(x);
            rec(x + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Best (value, d) for server `j` with `routed` new tokens, by linear scan.
fn best_server_choice(j: usize, routed: u64, state: &ServerState, p: &SystemParams) -> (f64, u64) {
    let q = state.token_backlog();
    let mut best = (f64::NEG_INFINITY, 0);
    for d in 0..=(q + routed).min(p.max_capacity()) {
        let energy = energy_at_min_frequency(d, j, p).expect("d within D^max");
        if energy > p.energy_cap[j] + ENERGY_TOLERANCE {
            break;
        }
        let value = p.tradeoff_v * (1.0 + d as f64).ln() + q as f64 * d as f64
            - state.energy_backlog() * energy;
        if value > best.0 {
            best = (value, d);
        }
    }
    best
}

pub fn brute_force_oracle(
    batch: &TokenBatch,
    states: &[ServerState],
    p: &SystemParams,
) -> Result<AssignmentResult, SolverError> {
    let (j_count, k) = (p.num_servers, p.top_k);
    if k > j_count {
        return Err(SolverError::KExceedsJ { k, servers: j_count });
    }
    let subsets = combinations(j_count, k);
    let routings = (subsets.len() as f64).powi(batch.len() as i32);
    if routings > MAX_ROUTINGS {
        return Err(SolverError::TooLarge { routings });
    }
    let vmu = p.tradeoff_v * p.consistency_weight;
    // Routing part of each (token, subset): Σ_j∈subset V·μ·g_ij − Q_j.
    let subset_reward: Vec<Vec<f64>> = (0..batch.len())
        .map(|i| {
            subsets
                .iter()
                .map(|s| {
                    s.iter()
                        .map(|&j| vmu * batch.score(i, j) - states[j].token_backlog() as f64)
                        .sum()
                })
                .collect()
        })
        .collect();
    let mut cache: HashMap<(usize, u64), (f64, u64)> = HashMap::new();
    let mut choice = vec![0usize; batch.len()];
    let mut best_value = f64::NEG_INFINITY;
    let mut best_choice = choice.clone();
    let mut best_d = vec![0u64; j_count];
    loop {
        let mut counts = vec![0u64; j_count];
        let mut value = 0.0;
        for (i, &c) in choice.iter().enumerate() {
            value += subset_reward[i][c];
            for &j in &subsets[c] {
                counts[j] += 1;
            }
        }
        let mut ds = vec![0u64; j_count];
        for j in 0..j_count {
            let (v, d) = *cache
                .entry((j, counts[j]))
                .or_insert_with(|| best_server_choice(j, counts[j], &states[j], p));
            value += v;
            ds[j] = d;
        }
        if value > best_value {
            best_value = value;
            best_choice.clone_from(&choice);
            best_d = ds;
        }
        // Mixed-radix increment, last token fastest.
        let mut pos = choice.len();
        loop {
            if pos == 0 {
                let routing = Routing::from_choices(
                    j_count,
                    best_choice.iter().map(|&c| subsets[c].as_slice()),
                );
                let frequencies = best_d
                    .iter()
                    .map(|&d| min_frequency_for(d, p))
                    .collect::<Result<Vec<_>, _>>()?;
                let decision = SlotDecision {
                    routing,
                    frequencies,
                };
                let outcome = apply_decision(batch, states, &decision, p)?;
                return Ok(AssignmentResult {
                    decision,
                    objective_value: outcome.objective_value,
                    solver_kind: SolverKind::BruteForce,
                    certified_optimal: true,
                });
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < subsets.len() {
                break;
            }
            choice[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_order() {
        assert_eq!(
            combinations(4, 2),
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(3, 1).len(), 3);
    }
}
