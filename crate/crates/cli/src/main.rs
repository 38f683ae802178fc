//! `edgemoe`: run, compare and sweep token-routing simulations, and check
//! the exact per-slot solver against brute force.
//!
//! Exit codes: 0 success, 1 invalid config, 2 I/O failure, 3 solver or
//! simulation failure, 4 solver/oracle mismatch. Diagnostics go to stderr
//! (verbosity via `EDGEMOE_LOG`); stdout carries one JSON object per line.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edgemoe::sim::throughput_ratios;
use edgemoe::solver::{compare_with_oracle, random_instance, OracleInstance, ORACLE_TOLERANCE};
use edgemoe::{compare, sweep_v, RunOptions, RunResult, Strategy};
use serde::Serialize;
use serde_json::json;

use config::{Overrides, Resolved};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("oracle mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Mismatch(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(name = "edgemoe", version, about = "Queue-aware token routing simulator for MoE on edge servers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config (or a manifest from a previous run); defaults to the published setup.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `rng_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `horizon` from the config.
    #[arg(long)]
    t_max: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one strategy.
    Run {
        #[command(flatten)]
        common: Common,
        /// stable-moe, A, B, C or D.
        #[arg(long, default_value = "stable-moe")]
        strategy: Strategy,
    },
    /// Simulate stable-moe and baselines on paired streams.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Baselines to include (stable-moe always runs).
        #[arg(long, value_delimiter = ',', default_values = ["A", "B", "C", "D"])]
        strategy: Vec<Strategy>,
    },
    /// Simulate stable-moe for several values of V.
    SweepV {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values = ["1", "10", "100", "1000"])]
        v_list: Vec<f64>,
    },
    /// Compare the exact solver with brute force on random small instances.
    OracleCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write a mismatching instance.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Instance stream seed; defaults to the config's `rng_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 200)]
        instances: u64,
        /// Check a single serialized instance instead.
        #[arg(long, conflicts_with = "instances")]
        replay: Option<PathBuf>,
        #[arg(long, hide = true)]
        corrupt_profile: bool,
    },
}

fn emit(value: serde_json::Value) {
    println!("{value}");
}

fn resolve(common: &Common) -> Result<Resolved, CliError> {
    let cfg = config::load(common.config.as_deref())?;
    config::resolve(
        cfg,
        Overrides {
            seed: common.seed,
            horizon: common.t_max,
        },
    )
}

fn run_options(resolved: &Resolved) -> RunOptions {
    RunOptions {
        solve: resolved.solve.clone(),
        workload: None,
    }
}

fn write_outputs(command: &str, out: &Path, resolved: &Resolved, runs: &[RunResult]) -> Result<(), CliError> {
    output::prepare_dir(out)?;
    output::write_trace(&out.join("trace.csv"), runs)?;
    let summaries: Vec<_> = runs.iter().map(|r| &r.summary).collect();
    if let [single] = summaries.as_slice() {
        output::write_json(&out.join("summary.json"), single)?;
    } else {
        output::write_json(&out.join("summary.json"), &summaries)?;
    }
    let strategies = runs.iter().map(|r| r.strategy).collect();
    output::write_json(&out.join("manifest.json"), &output::Manifest::new(command, strategies, out, resolved))
}

fn emit_summary(r: &RunResult) {
    let s = &r.summary;
    emit(json!({
        "strategy": s.strategy,
        "v": r.params.tradeoff_v,
        "slots": s.slots,
        "cumulative_throughput": s.cumulative_throughput,
        "utility": s.utility,
        "mean_total_token_backlog": s.mean_total_token_backlog(),
    }));
}

fn cmd_run(common: Common, strategy: Strategy) -> Result<(), CliError> {
    let resolved = resolve(&common)?;
    log::info!("running {strategy} for {} slots", resolved.params.horizon);
    let runs = compare(&[strategy], &resolved.params, &run_options(&resolved))
        .map_err(|e| CliError::Solver(e.to_string()))?;
    write_outputs("run", &common.out, &resolved, &runs)?;
    emit_summary(&runs[0]);
    Ok(())
}

#[derive(Serialize)]
struct RatioEntry {
    baseline: Strategy,
    stable_moe_throughput: u64,
    baseline_throughput: u64,
    /// `null` when the baseline completed nothing but stable-moe did.
    ratio: Option<f64>,
}

fn cmd_compare(common: Common, baselines: Vec<Strategy>) -> Result<(), CliError> {
    let resolved = resolve(&common)?;
    let mut strategies = vec![Strategy::StableMoe];
    for s in baselines {
        if !strategies.contains(&s) {
            strategies.push(s);
        }
    }
    log::info!("comparing {} strategies for {} slots", strategies.len(), resolved.params.horizon);
    let runs = compare(&strategies, &resolved.params, &run_options(&resolved))
        .map_err(|e| CliError::Solver(e.to_string()))?;
    write_outputs("compare", &common.out, &resolved, &runs)?;
    let degenerate = runs.iter().all(|r| r.summary.total_arrivals == 0);
    if degenerate {
        log::warn!("degenerate workload: no tokens arrived, every ratio is 1 by the 0/0 convention");
    }
    let ours = runs[0].summary.cumulative_throughput;
    let entries: Vec<RatioEntry> = throughput_ratios(&runs)
        .into_iter()
        .map(|(s, ratio)| RatioEntry {
            baseline: s,
            stable_moe_throughput: ours,
            baseline_throughput: runs.iter().find(|r| r.strategy == s).expect("ran").summary.cumulative_throughput,
            ratio: ratio.is_finite().then_some(ratio),
        })
        .collect();
    output::write_json(
        &common.out.join("ratios.json"),
        &json!({ "degenerate_workload": degenerate, "ratios": entries }),
    )?;
    for r in &runs {
        emit_summary(r);
    }
    Ok(())
}

fn cmd_sweep_v(common: Common, values: Vec<f64>) -> Result<(), CliError> {
    let resolved = resolve(&common)?;
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(CliError::Config(format!("--v-list: every V must be > 0, got {bad}")));
    }
    let runs = sweep_v(&values, &resolved.params, &run_options(&resolved))
        .map_err(|e| CliError::Solver(e.to_string()))?;
    output::prepare_dir(&common.out)?;
    output::write_atomic(&common.out.join("sweep.csv"), |w| {
        writeln!(w, "v,utility,mean_total_token_backlog,cumulative_throughput,mean_consistency")?;
        for r in &runs {
            let s = &r.summary;
            writeln!(
                w,
                "{},{},{},{},{}",
                edgemoe::report::format_real(r.params.tradeoff_v),
                edgemoe::report::format_real(s.utility),
                edgemoe::report::format_real(s.mean_total_token_backlog()),
                s.cumulative_throughput,
                edgemoe::report::format_real(s.mean_consistency),
            )?;
        }
        Ok(())
    })?;
    let rows: Vec<_> = runs
        .iter()
        .map(|r| json!({ "v": r.params.tradeoff_v, "summary": r.summary }))
        .collect();
    output::write_json(&common.out.join("summary.json"), &rows)?;
    output::write_json(
        &common.out.join("manifest.json"),
        &output::Manifest::new("sweep-v", vec![Strategy::StableMoe], &common.out, &resolved),
    )?;
    for r in &runs {
        emit_summary(r);
    }
    Ok(())
}


fn cmd_oracle_check(
    config_path: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    instances: u64,
    replay: Option<PathBuf>,
    corrupt: bool,
) -> Result<(), CliError> {
    let resolved = config::resolve(config::load(config_path.as_deref())?, Overrides { seed, horizon: None })?;
    let mut opts = resolved.solve.clone();
    opts.corrupt_profiles = corrupt;
    let cases: Vec<OracleInstance> = match &replay {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            vec![serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?]
        }
        None => (0..instances).map(|i| random_instance(resolved.params.rng_seed, i)).collect(),
    };
    if cases.is_empty() {
        log::warn!("no instances requested; the check is vacuous");
    }
    let mut max_gap = 0.0f64;
    for (idx, inst) in cases.iter().enumerate() {
        let cmp = compare_with_oracle(inst, &opts).map_err(|e| CliError::Solver(format!("instance {idx}: {e}")))?;
        max_gap = max_gap.max(cmp.gap());
        if !cmp.matches() {
            let serialized = serde_json::to_string(inst).expect("instance serializes");
            eprintln!("{serialized}");
            if let Some(dir) = &out {
                output::prepare_dir(dir)?;
                output::write_json(&dir.join("oracle_mismatch.json"), inst)?;
            }
            emit(json!({ "instances": idx + 1, "mismatch": idx, "gap": cmp.gap() }));
            return Err(CliError::Mismatch(format!(
                "instance {idx}: solver {} vs oracle {} (tolerance {ORACLE_TOLERANCE:e})",
                cmp.solver_objective, cmp.oracle_objective
            )));
        }
    }
    emit(json!({ "instances": cases.len(), "mismatches": 0, "max_gap": max_gap }));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EDGEMOE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { common, strategy } => cmd_run(common, strategy),
        Command::Compare { common, strategy } => cmd_compare(common, strategy),
        Command::SweepV { common, v_list } => cmd_sweep_v(common, v_list),
        Command::OracleCheck {
            config,
            out,
            seed,
            instances,
            replay,
            corrupt_profile,
        } => cmd_oracle_check(config, out, seed, instances, replay, corrupt_profile),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("edgemoe: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
