//! Per-slot server dynamics: processing capacity, completions, token queue,
//! computation energy and the virtual energy queue.

use crate::error::DynamicsError;
use crate::model::SystemParams;

/// Relative slack applied before flooring so that `c·d/τ` maps back to `d`.
const FLOOR_NUDGE: f64 = 1e-12;

/// ⌊num / den⌋ for non-negative operands, robust to the ratio landing a few
/// ulps below an integer.
pub(crate) fn floor_ratio(num: f64, den: f64) -> u64 {
    let x = num / den;
    if x <= 0.0 {
        return 0;
    }
    (x * (1.0 + FLOOR_NUDGE)).floor() as u64
}

fn check_frequency(f: f64, p: &SystemParams) -> Result<(), DynamicsError> {
    if f.is_finite() && f >= 0.0 && f <= p.max_frequency * (1.0 + FLOOR_NUDGE) {
        Ok(())
    } else {
        Err(DynamicsError::FrequencyOutOfRange {
            f,
            f_max: p.max_frequency,
        })
    }
}

/// Tokens a server running at `f` can finish in one slot: ⌊τ·f/c⌋, zero at f = 0.
pub fn capacity(f: f64, p: &SystemParams) -> Result<u64, DynamicsError> {
    check_frequency(f, p)?;
    if f == 0.0 {
        return Ok(0);
    }
    Ok(floor_ratio(p.slot_duration * f, p.cycles_per_token))
}

/// d^com = min{Q + d^rou, capacity(f)}.
pub fn completed_tokens(
    backlog: u64,
    routed: u64,
    f: f64,
    p: &SystemParams,
) -> Result<u64, DynamicsError> {
    Ok((backlog + routed).min(capacity(f, p)?))
}

/// Q(t+1) = max{Q + d^rou − d^com, 0}.
pub fn update_token_queue(backlog: u64, routed: u64, completed: u64) -> Result<u64, DynamicsError> {
    let available = backlog + routed;
    if completed > available {
        return Err(DynamicsError::OverCompletion {
            d_com: completed,
            available,
        });
    }
    Ok(available - completed)
}

/// E^com = ξ_j · d^com · (c/f) · f³ = ξ_j · d^com · c · f².
pub fn compute_energy(
    completed: u64,
    f: f64,
    server: usize,
    p: &SystemParams,
) -> Result<f64, DynamicsError> {
    if completed == 0 {
        return Ok(0.0);
    }
    if f == 0.0 {
        return Err(DynamicsError::ZeroFrequencyWork { d_com: completed });
    }
    check_frequency(f, p)?;
    Ok(p.switched_capacitance[server] * completed as f64 * p.cycles_per_token * f * f)
}

/// Z(t+1) = max{Z + E^com − E^avg, 0}.
pub fn update_energy_queue(backlog: f64, energy: f64, budget: f64) -> Result<f64, DynamicsError> {
    for (name, value) in [("Z", backlog), ("E_com", energy)] {
        if !(value.is_finite() && value >= 0.0) {
            return Err(DynamicsError::BadEnergy { name, value });
        }
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Err(DynamicsError::BadEnergy {
            name: "E_avg",
            value: budget,
        });
    }
    Ok((backlog + energy - budget).max(0.0))
}

/// Smallest frequency whose capacity reaches `d`: c·d/τ (never above f_max).
pub fn min_frequency_for(d: u64, p: &SystemParams) -> Result<f64, DynamicsError> {
    let max = p.max_capacity();
    if d > max {
        return Err(DynamicsError::OverCapacity { d, capacity: max });
    }
    if d == 0 {
        return Ok(0.0);
    }
    Ok((p.cycles_per_token * d as f64 / p.slot_duration).min(p.max_frequency))
}

/// Energy of finishing exactly `d` tokens at the minimum sufficient frequency.
pub fn energy_at_min_frequency(d: u64, server: usize, p: &SystemParams) -> Result<f64, DynamicsError> {
    compute_energy(d, min_frequency_for(d, p)?, server, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> SystemParams {
        SystemParams::reference_setup(0)
    }

    #[test]
    fn capacity_examples() {
        let p = params();
        assert_eq!(capacity(1e9, &p).unwrap(), 100);
        assert_eq!(capacity(0.0, &p).unwrap(), 0);
        assert_eq!(capacity(3e9, &p).unwrap(), 300);
        assert!(capacity(3.1e9, &p).is_err());
        assert!(capacity(-1.0, &p).is_err());
    }

    #[test]
    fn completion_examples() {
        let p = params();
        assert_eq!(completed_tokens(100, 50, 1e9, &p).unwrap(), 100);
        assert_eq!(completed_tokens(0, 0, 2e9, &p).unwrap(), 0);
        assert_eq!(completed_tokens(0, 390, 3e9, &p).unwrap(), 300);
    }

    #[test]
    fn token_queue_examples() {
        assert_eq!(update_token_queue(100, 50, 100).unwrap(), 50);
        assert_eq!(update_token_queue(0, 0, 0).unwrap(), 0);
        assert_eq!(update_token_queue(10, 0, 10).unwrap(), 0);
        assert!(update_token_queue(1, 1, 3).is_err());
    }

    #[test]
    fn energy_examples() {
        let p = params();
        assert_relative_eq!(compute_energy(100, 1e9, 0, &p).unwrap(), 2.0, epsilon = 1e-9);
        assert_eq!(compute_energy(0, 0.0, 0, &p).unwrap(), 0.0);
        assert_relative_eq!(compute_energy(300, 3e9, 0, &p).unwrap(), 54.0, epsilon = 1e-9);
        assert!(compute_energy(5, 0.0, 0, &p).is_err());
    }

    #[test]
    fn energy_queue_examples() {
        assert_relative_eq!(update_energy_queue(5.0, 2.0, 3.0).unwrap(), 4.0, epsilon = 1e-12);
        assert_eq!(update_energy_queue(0.0, 0.0, 9.5).unwrap(), 0.0);
        assert_eq!(update_energy_queue(1.0, 0.5, 9.5).unwrap(), 0.0);
        assert!(update_energy_queue(-1.0, 0.5, 9.5).is_err());
        assert!(update_energy_queue(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn min_frequency_examples() {
        let p = params();
        assert_eq!(min_frequency_for(100, &p).unwrap(), 1e9);
        assert_eq!(min_frequency_for(0, &p).unwrap(), 0.0);
        assert_eq!(min_frequency_for(300, &p).unwrap(), 3e9);
        assert!(min_frequency_for(301, &p).is_err());
    }

    #[test]
    fn min_frequency_is_tight_for_every_count() {
        for seed in [0u64, 3] {
            let p = params()
                .modified(|s| {
                    s.cycles_per_token = 1.3e7 + seed as f64 * 7.1e5;
                    s.slot_duration = 0.7;
                })
                .unwrap();
            for d in 0..=p.max_capacity() {
                let f = min_frequency_for(d, &p).unwrap();
                assert!(capacity(f, &p).unwrap() >= d, "d={d}");
                if d > 0 {
                    assert!(capacity(f * (1.0 - 1e-9), &p).unwrap() < d, "d={d}");
                }
            }
        }
    }

    #[test]
    fn energy_strictly_increasing_in_frequency() {
        let p = params();
        for d in [1u64, 17, 150, 300] {
            let mut prev = 0.0;
            for step in 1..=300 {
                let f = p.max_frequency * step as f64 / 300.0;
                let e = compute_energy(d, f, 0, &p).unwrap();
                assert!(e > prev);
                prev = e;
            }
        }
    }

    proptest! {
        #[test]
        fn queues_never_negative(q in 0u64..10_000, r in 0u64..1_000, frac in 0.0f64..=1.0,
                                 z in 0.0f64..100.0, e in 0.0f64..60.0, avg in 0.01f64..10.0) {
            let d = ((q + r) as f64 * frac).floor() as u64;
            let next = update_token_queue(q, r, d).unwrap();
            prop_assert_eq!(next, q + r - d);
            prop_assert!(update_energy_queue(z, e, avg).unwrap() >= 0.0);
        }

        #[test]
        fn squared_queue_step_bound(q in 0u64..10_000, r in 0u64..1_000, frac in 0.0f64..=1.0) {
            let d = ((q + r) as f64 * frac).floor() as u64;
            let next = update_token_queue(q, r, d).unwrap() as f64;
            let (qf, diff) = (q as f64, r as f64 - d as f64);
            prop_assert!(next * next <= qf * qf + 2.0 * qf * diff + diff * diff + 1e-6);
        }
    }
}
