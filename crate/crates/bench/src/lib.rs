//! Fixtures shared by the benchmarks.

use edgemoe::gating::Workload;
use edgemoe::{run, ServerState, Strategy, SystemParams, TokenBatch};

/// Slot `slot` of a stable-moe run on the published setup, with the queue
/// state at the start of that slot.
pub fn warm_slot(seed: u64, slot: u64) -> (SystemParams, TokenBatch, Vec<ServerState>) {
    let p = SystemParams::reference_setup(seed)
        .modified(|s| s.horizon = slot)
        .expect("valid params");
    let states = run(Strategy::StableMoe, &p)
        .expect("run succeeds")
        .trace
        .records
        .last()
        .map_or_else(|| vec![ServerState::default(); p.num_servers], |r| r.outcome.post_state.clone());
    let batch = Workload::synthetic(&p).batch(slot);
    (p, batch, states)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_deterministic() {
        let a = warm_slot(0, 12);
        let b = warm_slot(0, 12);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
        assert_eq!(a.1.slot(), 12);
    }
}
