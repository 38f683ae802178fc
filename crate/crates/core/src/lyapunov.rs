//! Lyapunov bookkeeping over the token and energy queues.
//!
//! With L(t) = ½ Σ_j (Q_j² + Z_j²), a slot decision is scored by
//!
//! ```text
//! V·[Σ_j ln(1 + d_j^com) + μ·G(t)] − Σ_j Q_j·(d_j^rou − d_j^com) − Σ_j Z_j·(E_j^com − E_j^avg)
//! ```
//!
//! which is the negated per-slot drift-plus-penalty bound with the
//! decision-independent constant B removed.

use serde::Serialize;

use crate::dynamics;
use crate::error::{Infeasible, SolverError};
use crate::model::{ServerState, SlotDecision, SlotOutcome, SystemParams, TokenBatch};

/// Absolute slack, joules, when checking the per-slot energy cap.
pub const ENERGY_TOLERANCE: f64 = 1e-9;

/// L = ½ Σ_j (Q_j² + Z_j²).
pub fn lyapunov_value(states: &[ServerState]) -> f64 {
    0.5 * states
        .iter()
        .map(|s| {
            let q = s.token_backlog() as f64;
            let z = s.energy_backlog();
            q * q + z * z
        })
        .sum::<f64>()
}

/// B = ½ Σ_j [(λ + λ²) + (D^max)² + (E_j^max)² + (E_j^avg)²].
pub fn bound_b(p: &SystemParams) -> f64 {
    let lambda = p.arrival_rate;
    let d_max = p.max_capacity() as f64;
    0.5 * p
        .energy_cap
        .iter()
        .zip(&p.energy_budget)
        .map(|(cap, avg)| lambda + lambda * lambda + d_max * d_max + cap * cap + avg * avg)
        .sum::<f64>()
}

/// Checks C1, C2 and C4 for `decision`, then applies the slot dynamics.
pub fn apply_decision(
    batch: &TokenBatch,
    states: &[ServerState],
    decision: &SlotDecision,
    p: &SystemParams,
) -> Result<SlotOutcome, SolverError> {
    let j_count = p.num_servers;
    let routing = &decision.routing;
    if routing.num_tokens() != batch.len() {
        return Err(Infeasible::RoutingShape {
            rows: routing.num_tokens(),
            tokens: batch.len(),
        }
        .into());
    }
    if routing.num_servers() != j_count || batch.num_servers() != j_count || states.len() != j_count {
        return Err(Infeasible::RoutingWidth {
            token: 0,
            cols: routing.num_servers(),
            servers: j_count,
        }
        .into());
    }
    if decision.frequencies.len() != j_count {
        return Err(Infeasible::FrequencyCount {
            expected: j_count,
            got: decision.frequencies.len(),
        }
        .into());
    }
    for i in 0..batch.len() {
        let count = routing.row(i).iter().filter(|&&x| x).count();
        if count != p.top_k {
            return Err(Infeasible::TopK {
                token: i,
                count,
                k: p.top_k,
            }
            .into());
        }
    }
    let routed = routing.routed_counts();
    let mut completed = Vec::with_capacity(j_count);
    let mut energy = Vec::with_capacity(j_count);
    let mut post_state = Vec::with_capacity(j_count);
    for j in 0..j_count {
        let f = decision.frequencies[j];
        if !(f.is_finite() && f >= 0.0 && f <= p.max_frequency * (1.0 + 1e-12)) {
            return Err(Infeasible::Frequency {
                server: j,
                f,
                f_max: p.max_frequency,
            }
            .into());
        }
        let q = states[j].token_backlog();
        let d = dynamics::completed_tokens(q, routed[j], f, p)?;
        let e = dynamics::compute_energy(d, f, j, p)?;
        if e > p.energy_cap[j] + ENERGY_TOLERANCE {
            return Err(Infeasible::EnergyCap {
                server: j,
                energy: e,
                cap: p.energy_cap[j],
            }
            .into());
        }
        let q_next = dynamics::update_token_queue(q, routed[j], d)?;
        let z_next = dynamics::update_energy_queue(states[j].energy_backlog(), e, p.energy_budget[j])?;
        completed.push(d);
        energy.push(e);
        post_state.push(ServerState::new(q_next, z_next)?);
    }
    let gating_consistency = gating_consistency(batch, decision);
    let objective_value = objective_from_parts(states, &routed, &completed, &energy, gating_consistency, p);
    Ok(SlotOutcome {
        routed,
        completed,
        energy,
        objective_value,
        gating_consistency,
        post_state,
    })
}

/// G(t) = Σ_i Σ_j g_ij · x_ij.
pub fn gating_consistency(batch: &TokenBatch, decision: &SlotDecision) -> f64 {
    (0..batch.len())
        .map(|i| {
            decision
                .routing
                .chosen(i)
                .map(|j| batch.score(i, j))
                .sum::<f64>()
        })
        .sum()
}

fn objective_from_parts(
    states: &[ServerState],
    routed: &[u64],
    completed: &[u64],
    energy: &[f64],
    consistency: f64,
    p: &SystemParams,
) -> f64 {
    let utility: f64 = completed.iter().map(|&d| (d as f64).ln_1p()).sum();
    let mut value = p.tradeoff_v * (utility + p.consistency_weight * consistency);
    for j in 0..states.len() {
        let q = states[j].token_backlog() as f64;
        let z = states[j].energy_backlog();
        value -= q * (routed[j] as f64 - completed[j] as f64);
        value -= z * (energy[j] - p.energy_budget[j]);
    }
    value
}

/// Per-slot objective of a feasible decision (larger is better).
pub fn per_slot_objective(
    batch: &TokenBatch,
    states: &[ServerState],
    decision: &SlotDecision,
    p: &SystemParams,
) -> Result<f64, SolverError> {
    Ok(apply_decision(batch, states, decision, p)?.objective_value)
}

/// Realized drift-plus-penalty of one slot next to its pathwise upper bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub l_t: f64,
    pub l_next: f64,
    pub realized_drift: f64,
    /// −V·[Σ_j ln(1 + d_j^com) + μ·G(t)].
    pub penalty: f64,
    pub drift_plus_penalty: f64,
    /// ½Σ_j[(d^rou − d^com)² + (E^com − E^avg)²] + Σ_j Q_j(d^rou − d^com)
    /// + Σ_j Z_j(E^com − E^avg) + penalty.
    pub bound_rhs: f64,
}

impl LyapunovReport {
    /// Slack of the bound; never negative for a correct model.
    pub fn gap(&self) -> f64 {
        self.bound_rhs - self.drift_plus_penalty
    }
}

pub fn drift_plus_penalty_report(
    batch: &TokenBatch,
    states: &[ServerState],
    decision: &SlotDecision,
    p: &SystemParams,
) -> Result<LyapunovReport, SolverError> {
    let outcome = apply_decision(batch, states, decision, p)?;
    let l_t = lyapunov_value(states);
    let l_next = lyapunov_value(&outcome.post_state);
    let utility: f64 = outcome.completed.iter().map(|&d| (d as f64).ln_1p()).sum();
    let penalty = -p.tradeoff_v * (utility + p.consistency_weight * outcome.gating_consistency);
    let mut rhs = penalty;
    for (j, s) in states.iter().enumerate() {
        let dq = outcome.routed[j] as f64 - outcome.completed[j] as f64;
        let de = outcome.energy[j] - p.energy_budget[j];
        rhs += 0.5 * (dq * dq + de * de);
        rhs += s.token_backlog() as f64 * dq + s.energy_backlog() * de;
    }
    let realized_drift = l_next - l_t;
    Ok(LyapunovReport {
        l_t,
        l_next,
        realized_drift,
        penalty,
        drift_plus_penalty: realized_drift + penalty,
        bound_rhs: rhs,
    })
}
