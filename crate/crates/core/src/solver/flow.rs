//! Exact routing by successive shortest paths.
//!
//! The network is source → token (capacity K) → server (capacity 1, cost
//! −r_ij) → sink, where the n-th unit into the sink from server j costs
//! −(h_j(n) − h_j(n−1)). Concave profiles make those unit costs
//! non-decreasing, so the unit-arc expansion of the convex server cost is
//! exact.
//!
//! Tokens are added one at a time and each pushes K units along shortest
//! residual paths. The residual graph is never materialized: a path leaves
//! the new token for some server and may then hop between servers by
//! moving an already-routed token from server a to server b, at cost
//! r_ka − r_kb. Keeping, for every ordered server pair, the tokens that
//! could make that hop sorted by cost reduces each shortest-path search to
//! Bellman–Ford on J + 1 nodes.

use std::collections::BTreeSet;

use ordered_float::OrderedFloat;

use crate::error::SolverError;
use crate::model::Routing;

/// Improvements smaller than this are treated as ties.
const EPS: f64 = 1e-12;

type HopSet = BTreeSet<(OrderedFloat<f64>, usize)>;

#[derive(Clone, Copy)]
enum Pred {
    Start,
    Hop { from: usize, token: usize },
}

pub(crate) struct TokenFlow<'a> {
    servers: usize,
    top_k: usize,
    /// r_ij = V·μ·g_ij − Q_j, row-major.
    rewards: &'a [f64],
    /// marginals[j][n] = h_j(n + 1) − h_j(n).
    marginals: &'a [Vec<f64>],
    routing: Routing,
    load: Vec<usize>,
    hops: Vec<HopSet>,
}

impl<'a> TokenFlow<'a> {
    pub(crate) fn new(
        tokens: usize,
        servers: usize,
        top_k: usize,
        rewards: &'a [f64],
        marginals: &'a [Vec<f64>],
    ) -> Self {
        debug_assert_eq!(rewards.len(), tokens * servers);
        Self {
            servers,
            top_k,
            rewards,
            marginals,
            routing: Routing::zeros(tokens, servers),
            load: vec![0; servers],
            hops: vec![BTreeSet::new(); servers * servers],
        }
    }

    fn reward(&self, token: usize, server: usize) -> f64 {
        self.rewards[token * self.servers + server]
    }

    fn hop_entries(&self, token: usize) -> Vec<(usize, (OrderedFloat<f64>, usize))> {
        let mut out = Vec::new();
        for a in self.routing.chosen(token) {
            for b in 0..self.servers {
                if !self.routing.get(token, b) {
                    let cost = self.reward(token, a) - self.reward(token, b);
                    out.push((a * self.servers + b, (OrderedFloat(cost), token)));
                }
            }
        }
        out
    }

    fn unregister(&mut self, token: usize) {
        for (slot, key) in self.hop_entries(token) {
            self.hops[slot].remove(&key);
        }
    }

    fn register(&mut self, token: usize) {
        for (slot, key) in self.hop_entries(token) {
            self.hops[slot].insert(key);
        }
    }

    /// Routes every token, in index order.
    pub(crate) fn solve(mut self) -> Result<(Routing, Vec<usize>), SolverError> {
        for i in 0..self.routing.num_tokens() {
            for _ in 0..self.top_k {
                self.augment(i)?;
            }
            self.register(i);
        }
        Ok((self.routing, self.load))
    }

    fn augment(&mut self, token: usize) -> Result<(), SolverError> {
        let j_count = self.servers;
        let mut hop_cost = vec![f64::INFINITY; j_count * j_count];
        let mut hop_token = vec![usize::MAX; j_count * j_count];
        for (slot, set) in self.hops.iter().enumerate() {
            if let Some(&(cost, k)) = set.first() {
                hop_cost[slot] = cost.0;
                hop_token[slot] = k;
            }
        }

        let mut dist = vec![f64::INFINITY; j_count];
        let mut pred = vec![Pred::Start; j_count];
        for (j, d) in dist.iter_mut().enumerate() {
            if !self.routing.get(token, j) {
                *d = -self.reward(token, j);
            }
        }
        for _ in 0..j_count {
            let mut changed = false;
            for a in 0..j_count {
                if !dist[a].is_finite() {
                    continue;
                }
                for b in 0..j_count {
                    let slot = a * j_count + b;
                    if a == b || !hop_cost[slot].is_finite() {
                        continue;
                    }
                    let cand = dist[a] + hop_cost[slot];
                    if cand < dist[b] - EPS {
                        dist[b] = cand;
                        pred[b] = Pred::Hop {
                            from: a,
                            token: hop_token[slot],
                        };
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let mut end = None;
        let mut best = f64::INFINITY;
        for j in 0..j_count {
            if !dist[j].is_finite() || self.load[j] >= self.marginals[j].len() {
                continue;
            }
            let total = dist[j] - self.marginals[j][self.load[j]];
            if total < best - EPS {
                best = total;
                end = Some(j);
            }
        }
        let Some(end) = end else {
            return Err(SolverError::NoPath { token });
        };

        // Walk predecessors back to the new token's first server.
        let mut moves = Vec::new();
        let mut at = end;
        let mut steps = 0;
        let first = loop {
            match pred[at] {
                Pred::Start => break at,
                Pred::Hop { from, token: k } => {
                    moves.push((k, from, at));
                    at = from;
                }
            }
            steps += 1;
            if steps > j_count {
                return Err(SolverError::NoPath { token });
            }
        };
        let mut touched: Vec<usize> = moves.iter().map(|m| m.0).collect();
        touched.sort_unstable();
        touched.dedup();
        for &k in &touched {
            self.unregister(k);
        }
        self.routing.set(token, first, true);
        for &(k, from, to) in &moves {
            debug_assert!(self.routing.get(k, from) && !self.routing.get(k, to));
            self.routing.set(k, from, false);
            self.routing.set(k, to, true);
        }
        for &k in &touched {
            self.register(k);
        }
        self.load[end] += 1;
        Ok(())
    }
}
