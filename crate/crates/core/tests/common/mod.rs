use edgemoe::dynamics::{completed_tokens, compute_energy};
use edgemoe::solver::OracleInstance;
use edgemoe::{Routing, SlotDecision, TokenBatch};
use rand::Rng;

/// A random decision satisfying C1, C2 and C4: K random servers per token,
/// and a random frequency halved until the energy cap holds.
pub fn random_feasible_decision<R: Rng>(inst: &OracleInstance, batch: &TokenBatch, rng: &mut R) -> SlotDecision {
    let p = &inst.params;
    let rows: Vec<Vec<usize>> = (0..batch.len())
        .map(|_| rand::seq::index::sample(rng, p.num_servers, p.top_k).into_vec())
        .collect();
    let routing = Routing::from_choices(p.num_servers, rows.iter().map(Vec::as_slice));
    let routed = routing.routed_counts();
    let frequencies = (0..p.num_servers)
        .map(|j| {
            let mut f = rng.random_range(0.0..=p.max_frequency);
            loop {
                let d = completed_tokens(inst.states[j].token_backlog(), routed[j], f, p).unwrap();
                if compute_energy(d, f, j, p).unwrap() <= p.energy_cap[j] {
                    return f;
                }
                f *= 0.5;
            }
        })
        .collect();
    SlotDecision { routing, frequencies }
}
