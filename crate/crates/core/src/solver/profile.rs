//! Server-local part of the per-slot problem.
//!
//! For a fixed number `n` of tokens routed to server j, the best the server
//! can do is
//!
//! ```text
//! h_j(n) = max_{0 <= d <= min(Q_j + n, D^max, d_E)} V·ln(1 + d) + Q_j·d − Z_j·ξ_j·c³·d³/τ²
//! ```
//!
//! where `d` is run at the minimum sufficient frequency `c·d/τ`. The
//! increments of the inner function are strictly decreasing in `d`, so the
//! unconstrained maximizer is found by binary search and `h_j` is concave
//! in `n`.

use crate::dynamics::{self, min_frequency_for};
use crate::error::SolverError;
use crate::lyapunov::ENERGY_TOLERANCE;
use crate::model::{ServerState, SystemParams};

/// Largest token count a server can finish within `cap` joules when running
/// at the minimum sufficient frequency. Not limited by D^max.
pub fn tokens_within_energy(cap: f64, switched_capacitance: f64, p: &SystemParams) -> u64 {
    if cap <= 0.0 {
        return 0;
    }
    let energy = |d: u64| {
        let f = p.cycles_per_token * d as f64 / p.slot_duration;
        switched_capacitance * d as f64 * p.cycles_per_token * f * f
    };
    let scale = cap * p.slot_duration * p.slot_duration
        / (switched_capacitance * p.cycles_per_token.powi(3));
    let mut d = scale.cbrt().floor() as u64;
    while d > 0 && energy(d) > cap + ENERGY_TOLERANCE {
        d -= 1;
    }
    while energy(d + 1) <= cap + ENERGY_TOLERANCE {
        d += 1;
    }
    d
}

/// d_E: tokens server `j` can finish without exceeding its per-slot energy cap.
pub fn energy_cap_tokens(j: usize, p: &SystemParams) -> u64 {
    tokens_within_energy(p.energy_cap[j], p.switched_capacitance[j], p)
}

/// Tabulated h_j(n) for n = 0..=n_max with its maximizers.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerProfile {
    pub server: usize,
    /// h_j(n).
    pub values: Vec<f64>,
    /// Completed tokens achieving h_j(n).
    pub best_completed: Vec<u64>,
    /// Frequency running `best_completed[n]`.
    pub best_frequency: Vec<f64>,
    pub queue_backlog: u64,
    pub capacity_bound: u64,
    pub energy_bound: u64,
    /// Maximizer of the inner function when only D^max and d_E bind.
    pub unconstrained_best: u64,
}

impl ServerProfile {
    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    /// h_j(n+1) − h_j(n) for n = 0..n_max.
    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Fails if the increments ever grow (beyond rounding).
    pub fn check_concave(&self) -> Result<(), SolverError> {
        let inc = self.increments();
        for (n, w) in inc.windows(2).enumerate() {
            let tol = 1e-9 * (1.0 + w[0].abs().max(w[1].abs()));
            if w[1] > w[0] + tol || w[0] < -tol {
                return Err(SolverError::NonConcaveProfile {
                    server: self.server,
                    n: n + 1,
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        Ok(())
    }
}

/// V·ln(1 + d) + Q·d − Z·E(d), the server's share of the per-slot objective
/// (without the constant Z·E^avg).
pub(crate) fn server_value(d: u64, j: usize, state: &ServerState, p: &SystemParams) -> f64 {
    let energy = dynamics::energy_at_min_frequency(d, j, p).expect("d within D^max");
    p.tradeoff_v * (d as f64).ln_1p() + state.token_backlog() as f64 * d as f64
        - state.energy_backlog() * energy
}

/// δ_d = value(d + 1) − value(d) in closed form.
fn increment(d: u64, j: usize, state: &ServerState, p: &SystemParams) -> f64 {
    let df = d as f64;
    let cubic = p.switched_capacitance[j] * p.cycles_per_token.powi(3)
        / (p.slot_duration * p.slot_duration)
        * (3.0 * df * df + 3.0 * df + 1.0);
    p.tradeoff_v * (1.0 / (df + 1.0)).ln_1p() + state.token_backlog() as f64
        - state.energy_backlog() * cubic
}

pub fn build_profile(j: usize, state: &ServerState, n_max: usize, p: &SystemParams) -> ServerProfile {
    let capacity_bound = p.max_capacity();
    let energy_bound = energy_cap_tokens(j, p);
    let upper = capacity_bound.min(energy_bound);
    // First d in [0, upper) whose increment is non-positive; `upper` if none.
    let (mut lo, mut hi) = (0u64, upper);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if increment(mid, j, state, p) > 0.0 {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let unconstrained_best = lo;
    let q = state.token_backlog();
    let mut values = Vec::with_capacity(n_max + 1);
    let mut best_completed = Vec::with_capacity(n_max + 1);
    let mut best_frequency = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max as u64 {
        let d = (q + n).min(unconstrained_best);
        values.push(server_value(d, j, state, p));
        best_completed.push(d);
        best_frequency.push(min_frequency_for(d, p).expect("d within D^max"));
    }
    ServerProfile {
        server: j,
        values,
        best_completed,
        best_frequency,
        queue_backlog: q,
        capacity_bound,
        energy_bound,
        unconstrained_best,
    }
}
