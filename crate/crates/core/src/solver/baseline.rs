//! Comparison routings and their frequency rule.

use rand::Rng;

use crate::dynamics::min_frequency_for;
use crate::model::{Routing, ServerState, SystemParams, TokenBatch};

use super::profile::energy_cap_tokens;

/// Routing rule of a comparison strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    /// A: K distinct servers uniformly at random.
    Random,
    /// B: the K highest gating scores.
    TopK,
    /// C: the K smallest token backlogs at slot start.
    QueueAware,
    /// D: the K smallest energy backlogs at slot start.
    EnergyAware,
}

/// Indices of the `k` smallest keys; ties go to the lower index.
fn k_smallest(keys: impl Iterator<Item = f64>, k: usize) -> Vec<usize> {
    let mut idx: Vec<(f64, usize)> = keys.enumerate().map(|(j, v)| (v, j)).collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = idx.into_iter().take(k).map(|(_, j)| j).collect();
    chosen.sort_unstable();
    chosen
}

pub fn baseline_route<R: Rng + ?Sized>(
    kind: BaselineKind,
    batch: &TokenBatch,
    states: &[ServerState],
    p: &SystemParams,
    rng: &mut R,
) -> Routing {
    let (j_count, k) = (p.num_servers, p.top_k);
    let rows: Vec<Vec<usize>> = match kind {
        BaselineKind::Random => (0..batch.len())
            .map(|_| {
                let mut s = rand::seq::index::sample(rng, j_count, k).into_vec();
                s.sort_unstable();
                s
            })
            .collect(),
        BaselineKind::TopK => batch
            .tokens()
            .iter()
            .map(|t| k_smallest(t.scores.iter().map(|g| -g), k))
            .collect(),
        BaselineKind::QueueAware => {
            let row = k_smallest(states.iter().map(|s| s.token_backlog() as f64), k);
            vec![row; batch.len()]
        }
        BaselineKind::EnergyAware => {
            let row = k_smallest(states.iter().map(|s| s.energy_backlog()), k);
            vec![row; batch.len()]
        }
    };
    Routing::from_choices(j_count, rows.iter().map(Vec::as_slice))
}

/// Throughput-greedy frequency: finish as many queued tokens as D^max and the
/// per-slot energy cap allow, at the minimum frequency that does so. Ignores
/// the energy backlog.
pub fn baseline_frequency(routed: u64, state: &ServerState, j: usize, p: &SystemParams) -> f64 {
    let target = (state.token_backlog() + routed)
        .min(p.max_capacity())
        .min(energy_cap_tokens(j, p));
    min_frequency_for(target, p).expect("target within D^max")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ParamSpec, Token};
    use crate::rng::{stream_rng, Stream};

    fn params(j: usize, k: usize) -> SystemParams {
        let mut s = ParamSpec::reference_setup(0);
        s.num_servers = j;
        s.top_k = k;
        s.switched_capacitance = vec![2e-27; j];
        s.energy_cap = vec![15.0; j];
        s.energy_budget = vec![9.5; j];
        crate::model::validate_params(s).unwrap()
    }

    fn batch(rows: Vec<Vec<f64>>) -> TokenBatch {
        let j = rows[0].len();
        let tokens = rows
            .into_iter()
            .enumerate()
            .map(|(i, scores)| Token { id: i as u64, scores })
            .collect();
        TokenBatch::new(0, j, tokens).unwrap()
    }

    fn states(qz: &[(u64, f64)]) -> Vec<ServerState> {
        qz.iter().map(|&(q, z)| ServerState::new(q, z).unwrap()).collect()
    }

    #[test]
    fn queue_aware_picks_smallest_backlogs() {
        let p = params(3, 2);
        let b = batch(vec![vec![0.3, 0.3, 0.4]; 4]);
        let s = states(&[(5, 0.0), (1, 0.0), (3, 0.0)]);
        let r = baseline_route(BaselineKind::QueueAware, &b, &s, &p, &mut stream_rng(0, Stream::RandomRouting, 0));
        for i in 0..4 {
            assert_eq!(r.chosen(i).collect::<Vec<_>>(), vec![1, 2]);
        }
    }

    #[test]
    fn energy_aware_picks_smallest_energy_backlogs() {
        let p = params(3, 1);
        let b = batch(vec![vec![0.3, 0.3, 0.4]]);
        let s = states(&[(0, 2.0), (0, 2.0), (0, 7.0)]);
        let r = baseline_route(BaselineKind::EnergyAware, &b, &s, &p, &mut stream_rng(0, Stream::RandomRouting, 0));
        assert_eq!(r.chosen(0).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn top_k_is_argmax() {
        let p = params(3, 1);
        let b = batch(vec![vec![0.1, 0.7, 0.2]]);
        let s = states(&[(0, 0.0); 3]);
        let r = baseline_route(BaselineKind::TopK, &b, &s, &p, &mut stream_rng(0, Stream::RandomRouting, 0));
        assert_eq!(r.chosen(0).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn random_routing_is_balanced_and_repeatable() {
        let p = params(10, 3);
        let b = batch(vec![vec![0.1; 10]; 10_000]);
        let s = states(&[(0, 0.0); 10]);
        let r = baseline_route(BaselineKind::Random, &b, &s, &p, &mut stream_rng(3, Stream::RandomRouting, 8));
        let again = baseline_route(BaselineKind::Random, &b, &s, &p, &mut stream_rng(3, Stream::RandomRouting, 8));
        assert_eq!(r, again);
        let counts = r.routed_counts();
        // Each server is picked by a token with probability 3/10.
        let sigma = (10_000.0f64 * 0.3 * 0.7).sqrt();
        for c in counts {
            assert!((c as f64 - 3000.0).abs() <= 3.0 * sigma, "count {c}");
        }
        for i in 0..10_000 {
            assert_eq!(r.chosen(i).count(), 3);
        }
    }

    #[test]
    fn frequency_rule_examples() {
        let p = params(1, 1);
        let f = baseline_frequency(390, &ServerState::default(), 0, &p);
        assert!((f - 1.95e9).abs() < 1.0);
        assert_eq!(baseline_frequency(0, &ServerState::default(), 0, &p), 0.0);
        let f = baseline_frequency(30, &ServerState::new(50, 0.0).unwrap(), 0, &p);
        assert!((f - 8e8).abs() < 1.0);
    }
}
