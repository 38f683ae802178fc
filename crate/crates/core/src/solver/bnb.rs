//! Depth-first branch-and-bound over per-token top-K subsets.
//!
//! Used to cross-check the flow solver. The bound adds, for every token not
//! yet placed, its best possible subset reward, and lets each server's
//! profile value grow as if all remaining tokens went there (profiles are
//! non-decreasing, so this never underestimates).

use crate::error::SolverError;
use crate::model::Routing;

use super::oracle::combinations;
use super::profile::ServerProfile;

pub const DEFAULT_NODE_BUDGET: u64 = 5_000_000;

struct Search<'a> {
    subsets: Vec<Vec<usize>>,
    /// Per token, subset indices sorted by descending reward.
    order: Vec<Vec<usize>>,
    subset_reward: Vec<Vec<f64>>,
    best_remaining: Vec<f64>,
    profiles: &'a [ServerProfile],
    counts: Vec<usize>,
    choice: Vec<usize>,
    best_value: f64,
    best_choice: Option<Vec<usize>>,
    nodes: u64,
    budget: u64,
}

impl Search<'_> {
    fn profile_value(&self, slack: usize) -> f64 {
        self.profiles
            .iter()
            .zip(&self.counts)
            .map(|(prof, &n)| prof.values[(n + slack).min(prof.n_max())])
            .sum()
    }

    fn descend(&mut self, token: usize, partial: f64) -> Result<(), SolverError> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(SolverError::NodeBudget { budget: self.budget });
        }
        let tokens = self.subset_reward.len();
        if token == tokens {
            let value = partial + self.profile_value(0);
            if value > self.best_value {
                self.best_value = value;
                self.best_choice = Some(self.choice.clone());
            }
            return Ok(());
        }
        let bound = partial + self.best_remaining[token] + self.profile_value(tokens - token);
        if bound <= self.best_value + 1e-12 {
            return Ok(());
        }
        for idx in 0..self.order[token].len() {
            let c = self.order[token][idx];
            for &j in &self.subsets[c] {
                self.counts[j] += 1;
            }
            self.choice[token] = c;
            let r = self.subset_reward[token][c];
            let res = self.descend(token + 1, partial + r);
            for &j in &self.subsets[c] {
                self.counts[j] -= 1;
            }
            res?;
        }
        Ok(())
    }
}

/// Returns the routing maximizing Σ r_ij·x_ij + Σ_j h_j(n_j).
pub(crate) fn branch_and_bound(
    rewards: &[f64],
    tokens: usize,
    top_k: usize,
    profiles: &[ServerProfile],
    budget: u64,
) -> Result<Routing, SolverError> {
    let servers = profiles.len();
    let subsets = combinations(servers, top_k);
    let subset_reward: Vec<Vec<f64>> = (0..tokens)
        .map(|i| {
            subsets
                .iter()
                .map(|s| s.iter().map(|&j| rewards[i * servers + j]).sum())
                .collect()
        })
        .collect();
    let order = subset_reward
        .iter()
        .map(|r| {
            let mut idx: Vec<usize> = (0..subsets.len()).collect();
            idx.sort_by(|&a, &b| r[b].total_cmp(&r[a]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let mut best_remaining = vec![0.0; tokens + 1];
    for i in (0..tokens).rev() {
        let top = subset_reward[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        best_remaining[i] = best_remaining[i + 1] + top;
    }
    let mut search = Search {
        subsets,
        order,
        subset_reward,
        best_remaining,
        profiles,
        counts: vec![0; servers],
        choice: vec![0; tokens],
        best_value: f64::NEG_INFINITY,
        best_choice: None,
        nodes: 0,
        budget,
    };
    search.descend(0, 0.0)?;
    let choice = search.best_choice.expect("at least one leaf is visited");
    Ok(Routing::from_choices(
        servers,
        choice.iter().map(|&c| search.subsets[c].as_slice()),
    ))
}
