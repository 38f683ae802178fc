//! Token arrivals and gating scores.
//!
//! Scores come from a fixed synthetic gating model rather than a trained
//! network: every token is drawn near one of a few cluster centers in
//! feature space, and its score row is the softmax of its similarity to a
//! per-server prototype. Cluster structure gives the servers persistent,
//! uneven popularity, which is what makes plain top-K routing pile tokens
//! onto a few servers.

use std::collections::BTreeMap;
use std::io::Read;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::Deserialize;

use crate::error::ReplayError;
use crate::model::{SystemParams, Token, TokenBatch};
use crate::rng::{stream_rng, Stream};

pub const DEFAULT_CLUSTERS: usize = 8;
pub const DEFAULT_FEATURE_DIM: usize = 16;
pub const DEFAULT_TEMPERATURE: f64 = 0.5;
/// Norm of every cluster center.
pub const DEFAULT_CENTER_NORM: f64 = 2.0;
/// Per-component standard deviation of token features around their center.
pub const DEFAULT_NOISE: f64 = 0.25;

/// Draws |S(t)| ~ Poisson(λ).
pub fn sample_batch_size<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    // Poisson::new only fails for non-positive or non-finite rates.
    let dist = Poisson::new(rate).expect("finite positive rate");
    dist.sample(rng) as u64
}

/// Fixed feature-space gating model.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingModel {
    prototypes: Vec<Vec<f64>>,
    centers: Vec<Vec<f64>>,
    noise: f64,
    temperature: f64,
    seed: u64,
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize, norm: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-9 {
            return v.into_iter().map(|x| x * norm / len).collect();
        }
    }
}

impl GatingModel {
    /// Default model for `num_servers` experts, derived from `seed`.
    pub fn new(seed: u64, num_servers: usize) -> Self {
        Self::with_shape(
            seed,
            num_servers,
            DEFAULT_CLUSTERS,
            DEFAULT_FEATURE_DIM,
            DEFAULT_TEMPERATURE,
        )
    }

    pub fn with_shape(
        seed: u64,
        num_servers: usize,
        clusters: usize,
        feature_dim: usize,
        temperature: f64,
    ) -> Self {
        assert!(temperature > 0.0, "temperature must be positive");
        assert!(clusters > 0 && feature_dim > 0);
        let mut rng = stream_rng(seed, Stream::GatingModel, 0);
        let prototypes = (0..num_servers)
            .map(|_| random_direction(&mut rng, feature_dim, 1.0))
            .collect();
        let centers = (0..clusters)
            .map(|_| random_direction(&mut rng, feature_dim, DEFAULT_CENTER_NORM))
            .collect();
        Self {
            prototypes,
            centers,
            noise: DEFAULT_NOISE,
            temperature,
            seed,
        }
    }

    pub fn num_servers(&self) -> usize {
        self.prototypes.len()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Score row for one feature vector: softmax of prototype similarities.
    pub fn scores_for(&self, feature: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .prototypes
            .iter()
            .map(|p| p.iter().zip(feature).map(|(a, b)| a * b).sum::<f64>() / self.temperature)
            .collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    /// Scores for `batch_size` tokens of slot `slot`. Depends only on
    /// `(seed, slot, batch_size)`.
    pub fn gate_scores(&self, slot: u64, batch_size: usize) -> TokenBatch {
        let mut rng = stream_rng(self.seed, Stream::Scores, slot);
        let dim = self.centers[0].len();
        let tokens = (0..batch_size)
            .map(|i| {
                let center = &self.centers[rng.random_range(0..self.centers.len())];
                let feature: Vec<f64> = center
                    .iter()
                    .map(|c| {
                        let n: f64 = rng.sample(StandardNormal);
                        c + self.noise * n
                    })
                    .collect();
                debug_assert_eq!(feature.len(), dim);
                Token {
                    id: i as u64,
                    scores: self.scores_for(&feature),
                }
            })
            .collect();
        TokenBatch::new(slot, self.num_servers(), tokens).expect("softmax rows lie in [0, 1]")
    }
}

/// Where a run's token batches come from.
#[derive(Debug, Clone)]
pub enum Workload {
    /// Poisson arrivals scored by a synthetic gating model.
    Synthetic { rate: f64, seed: u64, model: GatingModel },
    /// Batches replayed from an external score file; slots without rows are empty.
    Replay {
        num_servers: usize,
        batches: BTreeMap<u64, TokenBatch>,
    },
}

impl Workload {
    pub fn synthetic(p: &SystemParams) -> Self {
        Workload::Synthetic {
            rate: p.arrival_rate,
            seed: p.rng_seed,
            model: GatingModel::new(p.rng_seed, p.num_servers),
        }
    }

    pub fn batch(&self, slot: u64) -> TokenBatch {
        match self {
            Workload::Synthetic { rate, seed, model } => {
                let mut rng = stream_rng(*seed, Stream::Arrivals, slot);
                let size = sample_batch_size(*rate, &mut rng);
                model.gate_scores(slot, size as usize)
            }
            Workload::Replay {
                num_servers,
                batches,
            } => batches
                .get(&slot)
                .cloned()
                .unwrap_or_else(|| TokenBatch::empty(slot, *num_servers)),
        }
    }
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    slot: u64,
    token: usize,
    j: usize,
    g: f64,
}

/// Reads `slot,token,j,g` rows (header required) into per-slot batches.
///
/// Within a slot, token indices must be contiguous from 0 and every token
/// needs exactly one score per server.
pub fn load_score_csv<R: Read>(
    reader: R,
    num_servers: usize,
) -> Result<BTreeMap<u64, TokenBatch>, ReplayError> {
    let mut rows: BTreeMap<u64, BTreeMap<usize, Vec<Option<f64>>>> = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    for (idx, rec) in rdr.deserialize::<ScoreRow>().enumerate() {
        let line = idx + 2;
        let row = rec.map_err(|e| ReplayError::Parse {
            line,
            reason: e.to_string(),
        })?;
        if row.j >= num_servers {
            return Err(ReplayError::Parse {
                line,
                reason: format!("server index {} out of range (J = {num_servers})", row.j),
            });
        }
        let cells = rows
            .entry(row.slot)
            .or_default()
            .entry(row.token)
            .or_insert_with(|| vec![None; num_servers]);
        if cells[row.j].replace(row.g).is_some() {
            return Err(ReplayError::Parse {
                line,
                reason: format!("duplicate score for slot {} token {} j {}", row.slot, row.token, row.j),
            });
        }
    }
    let mut out = BTreeMap::new();
    for (slot, tokens) in rows {
        let mut list = Vec::with_capacity(tokens.len());
        for (expected, (id, cells)) in tokens.into_iter().enumerate() {
            if id != expected {
                return Err(ReplayError::Parse {
                    line: 0,
                    reason: format!("slot {slot}: token {expected} missing"),
                });
            }
            let scores = cells
                .into_iter()
                .enumerate()
                .map(|(j, c)| {
                    c.ok_or_else(|| ReplayError::Parse {
                        line: 0,
                        reason: format!("slot {slot}: token {id} has no score for server {j}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            list.push(Token {
                id: id as u64,
                scores,
            });
        }
        let batch = TokenBatch::new(slot, num_servers, list).map_err(|e| ReplayError::Parse {
            line: 0,
            reason: e.to_string(),
        })?;
        out.insert(slot, batch);
    }
    Ok(out)
}
