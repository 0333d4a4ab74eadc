use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{best_response, derive_seed, BestResponse, BrBudget, FspError, FspResult, ZeroSumLedger, TAG_BR, TAG_EVAL};
use crate::dynamics::Side;
use crate::policy::{MixturePolicy, PolicyParams};
use crate::rollout::rollout;
use crate::scenarios::{terminal_reward, Game};

/// Outcome of one plain episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub ego_component: usize,
    pub opponent_component: usize,
    pub initial_condition: usize,
    /// Hard robustness of the joint trace; `-inf` marks a failed rollout.
    pub robustness: f64,
    pub ego_return: f64,
    pub opponent_return: f64,
}

/// Plays one episode and returns `(robustness, ego return, opponent return)`.
pub fn play_episode(game: &Game, ego: &PolicyParams, opponent: &PolicyParams, ic: usize) -> FspResult<(f64, f64, f64)> {
    let steps = game.steps();
    let ep = rollout(game, ego, opponent, &game.initial_states[ic], steps)?;
    let (re, ro) = terminal_reward(&ep.trace, &game.formula, steps, steps)?;
    let discount = game.config.optimization.gamma.powi(steps as i32);
    Ok((re, discount * re, discount * ro))
}

/// Monte-Carlo estimate of the ego's expected hard robustness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnEstimate {
    pub mean: f64,
    pub std: f64,
    pub episodes: usize,
    pub satisfaction_rate: f64,
    /// Rollouts that failed; excluded from `mean` and `std`, counted as unsatisfied.
    pub failures: usize,
    pub records: Vec<EpisodeRecord>,
}

impl ReturnEstimate {
    pub fn robustness(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.robustness).collect()
    }
}

/// `E` episodes, each with a fresh component draw for both sides and a
/// uniformly drawn initial condition.
pub fn expected_return(
    game: &Game,
    ego: &MixturePolicy,
    opponent: &MixturePolicy,
    episodes: usize,
    seed: u64,
    ledger: &ZeroSumLedger,
) -> FspResult<ReturnEstimate> {
    if episodes == 0 {
        return Err(FspError::Budget("episodes"));
    }
    let n_ic = game.num_initial_conditions();
    let records: Vec<EpisodeRecord> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64]));
            let ce = ego.sample(&mut rng);
            let co = opponent.sample(&mut rng);
            let ic = rng.gen_range(0..n_ic);
            let rec = match play_episode(game, ego.component(ce), opponent.component(co), ic) {
                Ok((rho, e, o)) => EpisodeRecord {
                    ego_component: ce,
                    opponent_component: co,
                    initial_condition: ic,
                    robustness: rho,
                    ego_return: e,
                    opponent_return: o,
                },
                Err(_) => EpisodeRecord {
                    ego_component: ce,
                    opponent_component: co,
                    initial_condition: ic,
                    robustness: f64::NEG_INFINITY,
                    ego_return: f64::NEG_INFINITY,
                    opponent_return: f64::INFINITY,
                },
            };
            rec
        })
        .collect();
    let ok: Vec<f64> = records.iter().filter(|r| r.robustness.is_finite()).map(|r| r.robustness).collect();
    for r in records.iter().filter(|r| r.robustness.is_finite()) {
        ledger.record(r.ego_return, r.opponent_return);
    }
    let (mean, std) = mean_std(&ok);
    let satisfied = records.iter().filter(|r| r.robustness >= 0.0).count();
    Ok(ReturnEstimate {
        mean,
        std,
        episodes,
        satisfaction_rate: satisfied as f64 / episodes as f64,
        failures: episodes - ok.len(),
        records,
    })
}

/// Population mean and standard deviation; `(NaN, NaN)` for an empty slice.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Ego expected return, overall (uniform over initial conditions) and per initial condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Valuation {
    pub mean: f64,
    pub per_ic: Vec<f64>,
}

impl Valuation {
    /// Same valuation from the point of view of `side`.
    pub fn for_side(&self, side: Side) -> Valuation {
        let s = side.sign();
        Valuation { mean: s * self.mean, per_ic: self.per_ic.iter().map(|v| s * v).collect() }
    }
}

/// Exact expectation by enumerating every component pair and initial condition.
pub fn exact_value(game: &Game, ego: &MixturePolicy, opponent: &MixturePolicy, ledger: &ZeroSumLedger) -> FspResult<Valuation> {
    let n_ic = game.num_initial_conditions();
    let jobs: Vec<(usize, usize, usize)> = (0..ego.len())
        .flat_map(|i| (0..opponent.len()).flat_map(move |j| (0..n_ic).map(move |c| (i, j, c))))
        .filter(|&(i, j, _)| ego.weights()[i] > 0.0 && opponent.weights()[j] > 0.0)
        .collect();
    let returns = jobs
        .par_iter()
        .map(|&(i, j, c)| play_episode(game, ego.component(i), opponent.component(j), c).map(|(_, e, o)| (e, o)))
        .collect::<FspResult<Vec<_>>>()?;
    let mut per_ic = vec![0.0; n_ic];
    for (&(i, j, c), &(e, o)) in jobs.iter().zip(&returns) {
        ledger.record(e, o);
        per_ic[c] += ego.weights()[i] * opponent.weights()[j] * e;
    }
    let mean = per_ic.iter().sum::<f64>() / n_ic as f64;
    Ok(Valuation { mean, per_ic })
}

/// How expectations are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Evaluation {
    /// Enumerate mixture components and initial conditions.
    Exact,
    MonteCarlo { episodes: usize },
}

impl Evaluation {
    pub(crate) fn value(
        self,
        game: &Game,
        ego: &MixturePolicy,
        opponent: &MixturePolicy,
        seed: u64,
        ledger: &ZeroSumLedger,
    ) -> FspResult<Valuation> {
        match self {
            Evaluation::Exact => exact_value(game, ego, opponent, ledger),
            Evaluation::MonteCarlo { episodes } => {
                let est = expected_return(game, ego, opponent, episodes, seed, ledger)?;
                let n_ic = game.num_initial_conditions();
                let mut sum = vec![0.0; n_ic];
                let mut count = vec![0usize; n_ic];
                for r in est.records.iter().filter(|r| r.ego_return.is_finite()) {
                    sum[r.initial_condition] += r.ego_return;
                    count[r.initial_condition] += 1;
                }
                let per_ic = sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect();
                let mean = est.records.iter().filter(|r| r.ego_return.is_finite()).map(|r| r.ego_return).sum::<f64>()
                    / (est.episodes - est.failures).max(1) as f64;
                Ok(Valuation { mean, per_ic })
            }
        }
    }
}

/// Exploitability of a profile: the total each side gains by switching to its best response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exploitability {
    /// `max(0, ego_gain) + max(0, opponent_gain)`.
    pub value: f64,
    /// `ego_gain + opponent_gain`, unclamped.
    pub raw: f64,
    pub ego_gain: f64,
    pub opponent_gain: f64,
    /// Ego expected return of the profile itself.
    pub profile_value: f64,
    /// Ego expected return of (ego best response, opponent mixture).
    pub ego_br_value: f64,
    /// Ego expected return of (ego mixture, opponent best response).
    pub opponent_br_value: f64,
    /// Clamped exploitability per initial condition.
    pub per_ic: Vec<f64>,
    pub per_ic_mean: f64,
    pub per_ic_std: f64,
}

/// Combines ego-side valuations of the profile and of both deviations.
pub fn exploitability_from(profile: &Valuation, ego_br: &Valuation, opponent_br: &Valuation) -> Exploitability {
    let ego_gain = ego_br.mean - profile.mean;
    let opponent_gain = profile.mean - opponent_br.mean;
    let per_ic: Vec<f64> = (0..profile.per_ic.len())
        .map(|c| (ego_br.per_ic[c] - profile.per_ic[c]).max(0.0) + (profile.per_ic[c] - opponent_br.per_ic[c]).max(0.0))
        .collect();
    let (per_ic_mean, per_ic_std) = mean_std(&per_ic);
    Exploitability {
        value: ego_gain.max(0.0) + opponent_gain.max(0.0),
        raw: ego_gain + opponent_gain,
        ego_gain,
        opponent_gain,
        profile_value: profile.mean,
        ego_br_value: ego_br.mean,
        opponent_br_value: opponent_br.mean,
        per_ic,
        per_ic_mean,
        per_ic_std,
    }
}

/// Trains a best response against each side of the profile and measures the gains.
pub fn exploitability(
    game: &Game,
    ego: &MixturePolicy,
    opponent: &MixturePolicy,
    budget: BrBudget,
    evaluation: Evaluation,
    seed: u64,
    ledger: &ZeroSumLedger,
) -> FspResult<(Exploitability, BestResponse, BestResponse)> {
    budget.validate()?;
    if let Evaluation::MonteCarlo { episodes: 0 } = evaluation {
        return Err(FspError::Budget("episodes"));
    }
    let ego_br = best_response(game, opponent, Side::Ego, budget, derive_seed(seed, &[TAG_BR, 0]), ledger)?;
    let opp_br = best_response(game, ego, Side::Opponent, budget, derive_seed(seed, &[TAG_BR, 1]), ledger)?;
    let es = derive_seed(seed, &[TAG_EVAL]);
    let profile = evaluation.value(game, ego, opponent, es, ledger)?;
    let v_ego = evaluation.value(game, &MixturePolicy::single(ego_br.policy.clone()), opponent, es, ledger)?;
    let v_opp = evaluation.value(game, ego, &MixturePolicy::single(opp_br.policy.clone()), es, ledger)?;
    Ok((exploitability_from(&profile, &v_ego, &v_opp), ego_br, opp_br))
}

/// One cell of the seen / unseen comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldoutCell {
    pub policy: String,
    pub opponents: String,
    pub estimate: ReturnEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldoutReport {
    /// Nash/seen, BR/seen, Nash/unseen, BR/unseen.
    pub cells: Vec<HeldoutCell>,
    pub best_response_value: f64,
}

impl HeldoutReport {
    pub fn cell(&self, policy: &str, opponents: &str) -> &ReturnEstimate {
        &self.cells.iter().find(|c| c.policy == policy && c.opponents == opponents).expect("cell exists").estimate
    }
}

/// Trains an ego best response against the uniform mixture of `seen` only, then plays
/// it and the Nash mixture against the seen mixture and against the unseen policies.
pub fn heldout_experiment(
    game: &Game,
    nash: &MixturePolicy,
    seen: &[PolicyParams],
    unseen: &[PolicyParams],
    budget: BrBudget,
    episodes: usize,
    seed: u64,
    ledger: &ZeroSumLedger,
) -> FspResult<HeldoutReport> {
    if seen.is_empty() {
        return Err(FspError::EmptySet("seen"));
    }
    if unseen.is_empty() {
        return Err(FspError::EmptySet("unseen"));
    }
    if let Some(i) = unseen.iter().position(|u| seen.contains(u)) {
        return Err(FspError::Overlap(i));
    }
    if episodes == 0 {
        return Err(FspError::Budget("episodes"));
    }
    let seen_mix = MixturePolicy::uniform(seen.to_vec())?;
    let unseen_mix = MixturePolicy::uniform(unseen.to_vec())?;
    let br = best_response(game, &seen_mix, Side::Ego, budget, derive_seed(seed, &[TAG_BR]), ledger)?;
    let br_mix = MixturePolicy::single(br.policy.clone());
    let mut cells = Vec::new();
    for (name, opp) in [("seen", &seen_mix), ("unseen", &unseen_mix)] {
        for (pname, ego) in [("nash", nash), ("br", &br_mix)] {
            let estimate = expected_return(game, ego, opp, episodes, derive_seed(seed, &[TAG_EVAL]), ledger)?;
            cells.push(HeldoutCell { policy: pname.into(), opponents: name.into(), estimate });
        }
    }
    Ok(HeldoutReport { cells, best_response_value: br.value })
}
