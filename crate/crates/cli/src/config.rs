//! Experiment config files.
//!
//! Keys mirror the `ParamSpec` field names; every key is optional and falls
//! back to the published setup. Per-server energy vectors omitted from the
//! file are drawn from the seed. A manifest written by a previous run is
//! accepted too: its embedded `config` object is used.

use std::fs;
use std::path::Path;

use edgemoe::solver::{ExactMethod, SolveOptions, DEFAULT_NODE_BUDGET};
use edgemoe::{heterogeneous_energy_profile, validate_params, ParamSpec, SystemParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<ExactMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_budget: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub num_servers: Option<usize>,
    pub top_k: Option<usize>,
    pub slot_duration: Option<f64>,
    pub arrival_rate: Option<f64>,
    pub cycles_per_token: Option<f64>,
    pub max_frequency: Option<f64>,
    pub switched_capacitance: Option<Vec<f64>>,
    pub energy_cap: Option<Vec<f64>>,
    pub energy_budget: Option<Vec<f64>>,
    pub tradeoff_v: Option<f64>,
    pub consistency_weight: Option<f64>,
    pub horizon: Option<u64>,
    pub rng_seed: Option<u64>,
    pub solver: Option<SolverConfig>,
}

/// A config with every default filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub params: SystemParams,
    pub solve: SolveOptions,
}

impl Resolved {
    /// The fully explicit config; loading it again yields the same run.
    pub fn to_config(&self) -> Config {
        let s = self.params.spec();
        Config {
            num_servers: Some(s.num_servers),
            top_k: Some(s.top_k),
            slot_duration: Some(s.slot_duration),
            arrival_rate: Some(s.arrival_rate),
            cycles_per_token: Some(s.cycles_per_token),
            max_frequency: Some(s.max_frequency),
            switched_capacitance: Some(s.switched_capacitance.clone()),
            energy_cap: Some(s.energy_cap.clone()),
            energy_budget: Some(s.energy_budget.clone()),
            tradeoff_v: Some(s.tradeoff_v),
            consistency_weight: Some(s.consistency_weight),
            horizon: Some(s.horizon),
            rng_seed: Some(s.rng_seed),
            solver: Some(SolverConfig {
                method: Some(self.solve.method),
                node_budget: Some(self.solve.node_budget),
            }),
        }
    }

    /// SHA-256 of the explicit config's JSON, lowercase hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_config()).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub horizon: Option<u64>,
}

pub fn parse(text: &str) -> Result<Config, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
    let value = match value {
        serde_json::Value::Object(mut m) if m.contains_key("tool") && m.contains_key("config") => {
            m.remove("config").expect("checked above")
        }
        other => other,
    };
    serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
    match path {
        None => Ok(Config::default()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
            parse(&text)
        }
    }
}

pub fn resolve(cfg: Config, over: Overrides) -> Result<Resolved, CliError> {
    let seed = over.seed.or(cfg.rng_seed).unwrap_or(0);
    let mut spec = ParamSpec::reference_setup(seed);
    let servers = cfg.num_servers.unwrap_or(spec.num_servers);
    if servers != spec.num_servers {
        let (cap, budget) = heterogeneous_energy_profile(seed, servers);
        spec.num_servers = servers;
        spec.energy_cap = cap;
        spec.energy_budget = budget;
        spec.switched_capacitance = vec![spec.switched_capacitance[0]; servers];
    }
    macro_rules! take {
        ($($field:ident),*) => { $( if let Some(v) = cfg.$field { spec.$field = v; } )* };
    }
    take!(
        top_k,
        slot_duration,
        arrival_rate,
        cycles_per_token,
        max_frequency,
        switched_capacitance,
        energy_cap,
        energy_budget,
        tradeoff_v,
        consistency_weight,
        horizon
    );
    if let Some(h) = over.horizon {
        spec.horizon = h;
    }
    let params = validate_params(spec).map_err(|e| CliError::Config(e.to_string()))?;
    let solver = cfg.solver.unwrap_or_default();
    let solve = SolveOptions {
        method: solver.method.unwrap_or_default(),
        node_budget: solver.node_budget.unwrap_or(DEFAULT_NODE_BUDGET),
        ..SolveOptions::default()
    };
    Ok(Resolved { params, solve })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_published_setup() {
        let r = resolve(parse("{}").unwrap(), Overrides::default()).unwrap();
        assert_eq!(r.params, SystemParams::reference_setup(0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse(r#"{"top_K": 2}"#).unwrap_err();
        assert!(err.to_string().contains("top_K"), "{err}");
    }

    #[test]
    fn seed_flag_wins_and_reshapes_energy() {
        let cfg = parse(r#"{"rng_seed": 1}"#).unwrap();
        let r = resolve(cfg, Overrides { seed: Some(5), horizon: Some(9) }).unwrap();
        assert_eq!(r.params.rng_seed, 5);
        assert_eq!(r.params.horizon, 9);
        assert_eq!(r.params.energy_cap, SystemParams::reference_setup(5).energy_cap);
    }

    #[test]
    fn server_count_change_resamples_vectors() {
        let r = resolve(parse(r#"{"num_servers": 4, "top_k": 2}"#).unwrap(), Overrides::default()).unwrap();
        assert_eq!(r.params.energy_cap.len(), 4);
        assert_eq!(r.params.switched_capacitance.len(), 4);
    }

    #[test]
    fn explicit_config_round_trips() {
        let r = resolve(parse(r#"{"tradeoff_v": 3.5, "solver": {"method": "branch-and-bound"}}"#).unwrap(), Overrides::default()).unwrap();
        let text = serde_json::to_string(&r.to_config()).unwrap();
        let again = resolve(parse(&text).unwrap(), Overrides::default()).unwrap();
        assert_eq!(again.params, r.params);
        assert_eq!(again.solve, r.solve);
        assert_eq!(again.hash(), r.hash());
    }

    #[test]
    fn validation_names_the_field() {
        let err = resolve(parse(r#"{"top_k": 11}"#).unwrap(), Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("K"), "{err}");
    }
}
