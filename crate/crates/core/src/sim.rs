//! The slot loop: arrivals, routing, dynamics, bookkeeping.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::error::{SimError, SolverError};
use crate::gating::Workload;
use crate::lyapunov::apply_decision;
use crate::model::{ServerState, SlotDecision, SlotRecord, SystemParams, Trace};
use crate::rng::{stream_rng, Stream};
use crate::solver::{
    baseline_frequency, baseline_route, solve_per_slot_with, BaselineKind, SolveOptions,
};

/// A routing policy under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Exact per-slot drift-plus-penalty optimization.
    StableMoe,
    Baseline(BaselineKind),
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::StableMoe,
        Strategy::Baseline(BaselineKind::Random),
        Strategy::Baseline(BaselineKind::TopK),
        Strategy::Baseline(BaselineKind::QueueAware),
        Strategy::Baseline(BaselineKind::EnergyAware),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::StableMoe => "stable-moe",
            Strategy::Baseline(BaselineKind::Random) => "A",
            Strategy::Baseline(BaselineKind::TopK) => "B",
            Strategy::Baseline(BaselineKind::QueueAware) => "C",
            Strategy::Baseline(BaselineKind::EnergyAware) => "D",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "stable-moe" | "stablemoe" => Strategy::StableMoe,
            "a" | "random" => Strategy::Baseline(BaselineKind::Random),
            "b" | "top-k" | "topk" => Strategy::Baseline(BaselineKind::TopK),
            "c" | "queue-aware" => Strategy::Baseline(BaselineKind::QueueAware),
            "d" | "energy-aware" => Strategy::Baseline(BaselineKind::EnergyAware),
            other => return Err(format!("unknown strategy `{other}` (expected stable-moe, A, B, C or D)")),
        })
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// Aggregates of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub strategy: Strategy,
    pub slots: u64,
    pub total_arrivals: u64,
    pub cumulative_throughput: u64,
    /// Time-averaged end-of-slot token backlog per server.
    pub mean_token_backlog: Vec<f64>,
    /// Time-averaged end-of-slot energy backlog per server.
    pub mean_energy_backlog: Vec<f64>,
    pub final_token_backlog: Vec<u64>,
    pub final_energy_backlog: Vec<f64>,
    /// γ(d̄) = Σ_j ln(1 + d̄_j^com).
    pub utility: f64,
    /// Ḡ, the time-averaged gating consistency.
    pub mean_consistency: f64,
    pub mean_slot_wall_ms: f64,
}

impl Summary {
    /// Recomputes every trace-derived field; wall time is passed through.
    pub fn from_trace(strategy: Strategy, trace: &Trace, mean_slot_wall_ms: f64) -> Self {
        let servers = trace.records.first().map_or(0, |r| r.outcome.post_state.len());
        let slots = trace.len() as u64;
        let mut mean_q = vec![0.0; servers];
        let mut mean_z = vec![0.0; servers];
        for r in &trace.records {
            for (j, s) in r.outcome.post_state.iter().enumerate() {
                mean_q[j] += s.token_backlog() as f64;
                mean_z[j] += s.energy_backlog();
            }
        }
        if slots > 0 {
            mean_q.iter_mut().chain(mean_z.iter_mut()).for_each(|x| *x /= slots as f64);
        }
        let last = trace.records.last();
        Self {
            strategy,
            slots,
            total_arrivals: trace.records.iter().map(|r| r.batch_size as u64).sum(),
            cumulative_throughput: trace.cumulative_throughput().last().copied().unwrap_or(0),
            mean_token_backlog: mean_q,
            mean_energy_backlog: mean_z,
            final_token_backlog: last.map_or_else(Vec::new, |r| {
                r.outcome.post_state.iter().map(ServerState::token_backlog).collect()
            }),
            final_energy_backlog: last.map_or_else(Vec::new, |r| {
                r.outcome.post_state.iter().map(ServerState::energy_backlog).collect()
            }),
            utility: trace.utility(),
            mean_consistency: trace.mean_consistency(),
            mean_slot_wall_ms,
        }
    }

    /// Σ_j Q_j averaged over slots.
    pub fn mean_total_token_backlog(&self) -> f64 {
        self.mean_token_backlog.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub strategy: Strategy,
    pub params: SystemParams,
    pub trace: Trace,
    pub summary: Summary,
}

impl RunResult {
    /// Σ_j Q_j(t) at the end of every slot.
    pub fn total_token_backlog(&self) -> Vec<u64> {
        self.trace
            .records
            .iter()
            .map(|r| r.outcome.post_state.iter().map(ServerState::token_backlog).sum())
            .collect()
    }
}

/// Extra knobs for [`run_with`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub solve: SolveOptions,
    /// Batches to use instead of the synthetic Poisson/gating workload.
    pub workload: Option<Workload>,
}

/// Runs `strategy` for `p.horizon` slots on the synthetic workload.
pub fn run(strategy: Strategy, p: &SystemParams) -> Result<RunResult, SimError> {
    run_with(strategy, p, &RunOptions::default())
}

pub fn run_with(strategy: Strategy, p: &SystemParams, opts: &RunOptions) -> Result<RunResult, SimError> {
    let workload = opts.workload.clone().unwrap_or_else(|| Workload::synthetic(p));
    let mut states = vec![ServerState::default(); p.num_servers];
    let mut trace = Trace {
        records: Vec::with_capacity(p.horizon as usize),
    };
    let started = Instant::now();
    for slot in 0..p.horizon {
        let at = |source: SolverError| SimError { slot, source };
        let batch = workload.batch(slot);
        let decision = match strategy {
            Strategy::StableMoe => solve_per_slot_with(&batch, &states, p, &opts.solve).map_err(at)?.decision,
            Strategy::Baseline(kind) => {
                let mut rng = stream_rng(p.rng_seed, Stream::RandomRouting, slot);
                let routing = baseline_route(kind, &batch, &states, p, &mut rng);
                let routed = routing.routed_counts();
                let frequencies = (0..p.num_servers)
                    .map(|j| baseline_frequency(routed[j], &states[j], j, p))
                    .collect();
                SlotDecision { routing, frequencies }
            }
        };
        let outcome = apply_decision(&batch, &states, &decision, p).map_err(at)?;
        states.clone_from(&outcome.post_state);
        trace.records.push(SlotRecord {
            slot,
            batch_size: batch.len(),
            frequencies: decision.frequencies,
            outcome,
        });
    }
    let wall_ms = if p.horizon == 0 {
        0.0
    } else {
        started.elapsed().as_secs_f64() * 1e3 / p.horizon as f64
    };
    let summary = Summary::from_trace(strategy, &trace, wall_ms);
    Ok(RunResult {
        strategy,
        params: p.clone(),
        trace,
        summary,
    })
}

fn run_all<T, F>(items: &[T], f: F) -> Vec<Result<RunResult, SimError>>
where
    T: Sync,
    F: Fn(&T) -> Result<RunResult, SimError> + Sync,
{
    std::thread::scope(|scope| {
        let handles: Vec<_> = items.iter().map(|it| scope.spawn(|| f(it))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

/// Runs every strategy on the same arrival and score streams.
pub fn compare(strategies: &[Strategy], p: &SystemParams, opts: &RunOptions) -> Result<Vec<RunResult>, SimError> {
    run_all(strategies, |&s| run_with(s, p, opts)).into_iter().collect()
}

/// Stable-moe throughput over each baseline's; 0/0 counts as 1.
pub fn throughput_ratios(results: &[RunResult]) -> Vec<(Strategy, f64)> {
    let Some(reference) = results.iter().find(|r| r.strategy == Strategy::StableMoe) else {
        return Vec::new();
    };
    let ours = reference.summary.cumulative_throughput as f64;
    results
        .iter()
        .filter(|r| r.strategy != Strategy::StableMoe)
        .map(|r| {
            let theirs = r.summary.cumulative_throughput as f64;
            let ratio = match (ours == 0.0, theirs == 0.0) {
                (true, true) => 1.0,
                (false, true) => f64::INFINITY,
                _ => ours / theirs,
            };
            (r.strategy, ratio)
        })
        .collect()
}

/// One stable-moe run per V, all on identical streams.
pub fn sweep_v(values: &[f64], p: &SystemParams, opts: &RunOptions) -> Result<Vec<RunResult>, SolverError> {
    let params = values
        .iter()
        .map(|&v| p.modified(|s| s.tradeoff_v = v))
        .collect::<Result<Vec<_>, _>>()?;
    run_all(&params, |q| run_with(Strategy::StableMoe, q, opts))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.source)
}
