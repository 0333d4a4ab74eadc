//! Fictitious self-play with gradient-based best responses.
//!
//! Each iteration trains a best response for both sides against the other
//! side's current mixture and appends it with weight `1/(k+1)`. Exploitability
//! of a profile is measured with the best responses trained against it, which
//! are exactly the responses the next iteration needs.

mod best_response;
mod eval;
mod run;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AdError;
use crate::policy::{MixturePolicy, PolicyError, PolicyParams};
use crate::rollout::RolloutError;
use crate::scenarios::ScenarioError;
use crate::stl::StlError;

pub use best_response::{best_response, BestResponse, EpochStat};
pub use eval::{
    exact_value, expected_return, exploitability, exploitability_from, heldout_experiment, play_episode, EpisodeRecord,
    Evaluation, Exploitability, HeldoutCell, HeldoutReport, ReturnEstimate, Valuation,
};
pub use run::{load_checkpoint, run_fsp, Checkpoint, FspOptions, FspState, IterationMetrics, SeedEntry};

#[derive(Debug, Error)]
pub enum FspError {
    #[error("budget must be positive: {0}")]
    Budget(&'static str),
    #[error("non-finite training loss at epoch {epoch}, episode {episode}: {source}")]
    NonFiniteLoss { epoch: usize, episode: usize, source: AdError },
    #[error("mixture weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("mixture has {found} components at iteration {k}")]
    MixtureSize { k: usize, found: usize },
    #[error("seen and unseen opponent sets overlap (unseen policy {0} is also seen)")]
    Overlap(usize),
    #[error("empty opponent set: {0}")]
    EmptySet(&'static str),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type FspResult<T> = Result<T, FspError>;

/// Training budget of one best response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrBudget {
    pub epochs: usize,
    /// Episodes (opponent draw plus initial condition) per gradient step.
    pub opponent_samples: usize,
}

impl BrBudget {
    pub fn validate(&self) -> FspResult<()> {
        if self.epochs == 0 {
            return Err(FspError::Budget("epochs"));
        }
        if self.opponent_samples == 0 {
            return Err(FspError::Budget("opponent_samples"));
        }
        Ok(())
    }

    /// Simulation steps one best response consumes.
    pub fn simulation_steps(&self, horizon: usize) -> usize {
        self.epochs * self.opponent_samples * horizon
    }
}

/// Average-policy update: `pi_{k+1} = k/(k+1) pi_k + 1/(k+1) br`.
/// At `k = 0` the initial random policy gets weight zero and is dropped.
pub fn fp_update(mix: Option<&MixturePolicy>, br: PolicyParams, k: usize) -> FspResult<MixturePolicy> {
    if k == 0 {
        return Ok(MixturePolicy::single(br));
    }
    let mix = mix.ok_or(FspError::MixtureSize { k, found: 0 })?;
    if mix.len() != k {
        return Err(FspError::MixtureSize { k, found: mix.len() });
    }
    let keep = k as f64 / (k + 1) as f64;
    let mut weights: Vec<f64> = mix.weights().iter().map(|w| w * keep).collect();
    weights.push(1.0 / (k + 1) as f64);
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(FspError::WeightSum(total));
    }
    let mut components = mix.components().to_vec();
    components.push(br);
    Ok(MixturePolicy::new(components, weights)?)
}

/// Counts evaluated episodes and any whose two returns fail to cancel exactly.
#[derive(Debug, Default)]
pub struct ZeroSumLedger {
    episodes: AtomicU64,
    violations: AtomicU64,
}

impl ZeroSumLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, ego: f64, opponent: f64) {
        self.episodes.fetch_add(1, Ordering::Relaxed);
        if ego + opponent != 0.0 {
            self.violations.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn episodes(&self) -> u64 {
        self.episodes.load(Ordering::Relaxed)
    }

    pub fn violations(&self) -> u64 {
        self.violations.load(Ordering::Relaxed)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed; distinct `parts` give independent streams.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(master), |h, &p| splitmix64(h ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_SAMPLE: u64 = 2;
pub(crate) const TAG_BR: u64 = 3;
pub(crate) const TAG_EVAL: u64 = 4;
pub(crate) const TAG_PROFILE0: u64 = 5;
