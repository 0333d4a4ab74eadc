use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    best_response, derive_seed, exploitability_from, fp_update, BestResponse, BrBudget, Exploitability, FspError, FspResult,
    ZeroSumLedger, TAG_BR, TAG_PROFILE0,
};
use crate::dynamics::Side;
use crate::io::write_atomic;
use crate::policy::{init_policy, MixturePolicy, PolicyParams};
use crate::scenarios::{Game, GameConfig, UpdateRule};

pub const STATE_FORMAT: &str = "stlgame-fsp-state";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub iteration: usize,
    pub side: Side,
    pub purpose: String,
    pub seed: u64,
}

/// Per-iteration record for the profile `(pi_k^ego, pi_k^opp)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub exploitability: f64,
    pub exploitability_raw: f64,
    pub ego_gain: f64,
    pub opponent_gain: f64,
    pub profile_value: f64,
    /// Learner-side return of the best responses trained against this profile.
    pub ego_br_return: f64,
    pub opponent_br_return: f64,
    pub ego_br_epoch: usize,
    pub opponent_br_epoch: usize,
    pub exploitability_per_ic: Vec<f64>,
    pub exploitability_ic_mean: f64,
    pub exploitability_ic_std: f64,
}

impl IterationMetrics {
    fn new(iteration: usize, e: &Exploitability, ego_br: &BestResponse, opp_br: &BestResponse) -> Self {
        Self {
            iteration,
            exploitability: e.value,
            exploitability_raw: e.raw,
            ego_gain: e.ego_gain,
            opponent_gain: e.opponent_gain,
            profile_value: e.profile_value,
            ego_br_return: ego_br.value,
            opponent_br_return: opp_br.value,
            ego_br_epoch: ego_br.best_epoch,
            opponent_br_epoch: opp_br.best_epoch,
            exploitability_per_ic: e.per_ic.clone(),
            exploitability_ic_mean: e.per_ic_mean,
            exploitability_ic_std: e.per_ic_std,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FspOptions {
    /// Number of best-response pairs appended to the mixtures.
    pub iterations: usize,
    pub budget: BrBudget,
    pub seed: u64,
    /// Where `iter_k/` directories are written; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
}

/// Training state after `iteration` best-response pairs.
#[derive(Clone, Debug)]
pub struct FspState {
    pub iteration: usize,
    pub ego: MixturePolicy,
    pub opponent: MixturePolicy,
    /// Best responses appended so far, in order.
    pub ego_brs: Vec<PolicyParams>,
    pub opponent_brs: Vec<PolicyParams>,
    /// One record per profile `0 ..= iteration`.
    pub metrics: Vec<IterationMetrics>,
    pub seed_ledger: Vec<SeedEntry>,
    /// Wall-clock seconds per iteration, kept apart from the deterministic metrics.
    pub wall_clock: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    format: String,
    version: u32,
    iteration: usize,
    master_seed: u64,
    budget: BrBudget,
    config: GameConfig,
    seed_ledger: Vec<SeedEntry>,
}

/// A checkpoint directory loaded from disk.
pub struct Checkpoint {
    pub dir: PathBuf,
    pub config: GameConfig,
    pub master_seed: u64,
    pub budget: BrBudget,
    pub state: FspState,
    /// The best responses already trained against this checkpoint's profile.
    pub next: (PolicyParams, PolicyParams),
}

fn ckpt_err(path: &Path, message: impl Into<String>) -> FspError {
    FspError::Checkpoint { path: path.display().to_string(), message: message.into() }
}

fn iter_dir(out: &Path, k: usize) -> PathBuf {
    out.join(format!("iter_{k}"))
}

fn br_seed(master: u64, pair: usize, side: Side) -> u64 {
    derive_seed(master, &[TAG_BR, pair as u64, side as u64])
}

/// Random initial policies, the profile at iteration 0.
fn initial_profile(game: &Game, master: u64) -> FspResult<(PolicyParams, PolicyParams)> {
    let shape = game.policy_shape();
    let bounds = game.action_bounds();
    Ok((
        init_policy(shape, &bounds, derive_seed(master, &[TAG_PROFILE0, 0]))?,
        init_policy(shape, &bounds, derive_seed(master, &[TAG_PROFILE0, 1]))?,
    ))
}

fn write_checkpoint(
    out: &Path,
    game: &Game,
    opts: &FspOptions,
    state: &FspState,
    current_brs: (&PolicyParams, &PolicyParams),
    next: (&PolicyParams, &PolicyParams),
) -> FspResult<()> {
    let k = state.iteration;
    let dir = iter_dir(out, k);
    fs::create_dir_all(&dir)?;
    current_brs.0.save(&dir.join("ego_br.json"))?;
    current_brs.1.save(&dir.join("opp_br.json"))?;
    next.0.save(&dir.join("next_ego_br.json"))?;
    next.1.save(&dir.join("next_opp_br.json"))?;
    let refs = |name: &str| -> Vec<PathBuf> {
        if k == 0 {
            vec![PathBuf::from(name)]
        } else {
            (1..=k).map(|j| PathBuf::from(format!("../iter_{j}/{name}"))).collect()
        }
    };
    state.ego.save(&dir.join("ego_mixture.json"), &refs("ego_br.json"))?;
    state.opponent.save(&dir.join("opp_mixture.json"), &refs("opp_br.json"))?;
    let mut lines = String::new();
    for m in &state.metrics {
        lines.push_str(&serde_json::to_string(m).expect("metrics serialise"));
        lines.push('\n');
    }
    write_atomic(&dir.join("metrics.jsonl"), lines.as_bytes())?;
    let sf = StateFile {
        format: STATE_FORMAT.into(),
        version: 1,
        iteration: k,
        master_seed: opts.seed,
        budget: opts.budget,
        config: game.config.clone(),
        seed_ledger: state.seed_ledger.clone(),
    };
    write_atomic(&dir.join("state.json"), serde_json::to_string_pretty(&sf).expect("state serialises").as_bytes())?;
    let timing: String = state.wall_clock.iter().enumerate().map(|(i, s)| format!("{{\"iteration\":{i},\"seconds\":{s}}}\n")).collect();
    write_atomic(&out.join("timing.jsonl"), timing.as_bytes())?;
    Ok(())
}

/// Reads `iter_k/` back: mixtures, best responses of every earlier iteration, metrics and seeds.
pub fn load_checkpoint(dir: &Path) -> FspResult<Checkpoint> {
    let text = fs::read_to_string(dir.join("state.json")).map_err(|e| ckpt_err(dir, e.to_string()))?;
    let sf: StateFile = serde_json::from_str(&text).map_err(|e| ckpt_err(dir, e.to_string()))?;
    if sf.format != STATE_FORMAT {
        return Err(ckpt_err(dir, format!("unknown format `{}`", sf.format)));
    }
    let ego = MixturePolicy::load(&dir.join("ego_mixture.json"))?;
    let opponent = MixturePolicy::load(&dir.join("opp_mixture.json"))?;
    let metrics = fs::read_to_string(dir.join("metrics.jsonl"))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ckpt_err(dir, e.to_string())))
        .collect::<FspResult<Vec<IterationMetrics>>>()?;
    let next = (PolicyParams::load(&dir.join("next_ego_br.json"))?, PolicyParams::load(&dir.join("next_opp_br.json"))?);
    let (ego_brs, opponent_brs) =
        if sf.iteration == 0 { (vec![], vec![]) } else { (ego.components().to_vec(), opponent.components().to_vec()) };
    let state = FspState {
        iteration: sf.iteration,
        ego,
        opponent,
        ego_brs,
        opponent_brs,
        metrics,
        seed_ledger: sf.seed_ledger,
        wall_clock: Vec::new(),
    };
    Ok(Checkpoint { dir: dir.to_path_buf(), config: sf.config, master_seed: sf.master_seed, budget: sf.budget, state, next })
}

/// Runs fictitious self-play for `opts.iterations` iterations, optionally continuing a checkpoint.
///
/// Iteration `p` trains both best responses against profile `p - 1`; those
/// responses also give that profile's exploitability. One extra pair is trained
/// after the last iteration so the final profile is scored too.
pub fn run_fsp(game: &Game, opts: &FspOptions, resume: Option<Checkpoint>, ledger: &ZeroSumLedger) -> FspResult<FspState> {
    if opts.iterations == 0 {
        return Err(FspError::Budget("iterations"));
    }
    opts.budget.validate()?;
    let master = opts.seed;
    let (pi0_ego, pi0_opp) = initial_profile(game, master)?;

    let (mut state, mut pending) = match resume {
        Some(c) => {
            if c.state.iteration > opts.iterations {
                return Err(ckpt_err(&c.dir, format!("checkpoint is at iteration {} beyond target {}", c.state.iteration, opts.iterations)));
            }
            (c.state, Some(c.next))
        }
        None => (
            FspState {
                iteration: 0,
                ego: MixturePolicy::single(pi0_ego.clone()),
                opponent: MixturePolicy::single(pi0_opp.clone()),
                ego_brs: vec![],
                opponent_brs: vec![],
                metrics: vec![],
                seed_ledger: vec![],
                wall_clock: vec![],
            },
            None,
        ),
    };

    loop {
        let k = state.iteration;
        let started = Instant::now();
        let (ego_br, opp_br) = match pending.take() {
            Some(next) => next,
            None => {
                let (e, o, metrics) = train_pair(game, &mut state, opts, ledger)?;
                state.metrics.push(metrics);
                if let Some(out) = &opts.out_dir {
                    let current = if k == 0 {
                        (&pi0_ego, &pi0_opp)
                    } else {
                        (state.ego_brs.last().expect("k > 0"), state.opponent_brs.last().expect("k > 0"))
                    };
                    write_checkpoint(out, game, opts, &state, current, (&e, &o))?;
                }
                (e, o)
            }
        };
        state.wall_clock.push(started.elapsed().as_secs_f64());
        if k == opts.iterations {
            break;
        }
        let prev = if k == 0 { None } else { Some((&state.ego, &state.opponent)) };
        let new_ego = fp_update(prev.map(|p| p.0), ego_br.clone(), k)?;
        let new_opp = fp_update(prev.map(|p| p.1), opp_br.clone(), k)?;
        state.ego = new_ego;
        state.opponent = new_opp;
        state.ego_brs.push(ego_br);
        state.opponent_brs.push(opp_br);
        state.iteration = k + 1;
    }
    Ok(state)
}

/// Trains best responses against the current profile and scores it.
fn train_pair(
    game: &Game,
    state: &mut FspState,
    opts: &FspOptions,
    ledger: &ZeroSumLedger,
) -> FspResult<(PolicyParams, PolicyParams, IterationMetrics)> {
    let k = state.iteration;
    let pair = k + 1;
    let master = opts.seed;
    let se = br_seed(master, pair, Side::Ego);
    let so = br_seed(master, pair, Side::Opponent);
    state.seed_ledger.push(SeedEntry { iteration: pair, side: Side::Ego, purpose: "best_response".into(), seed: se });
    state.seed_ledger.push(SeedEntry { iteration: pair, side: Side::Opponent, purpose: "best_response".into(), seed: so });

    let ego_br = best_response(game, &state.opponent, Side::Ego, opts.budget, se, ledger)?;
    let profile = super::exact_value(game, &state.ego, &state.opponent, ledger)?;
    let (opp_br, opp_eval) = match game.config.optimization.update {
        UpdateRule::Simultaneous => {
            let br = best_response(game, &state.ego, Side::Opponent, opts.budget, so, ledger)?;
            let v = br.valuation.clone();
            (br, v)
        }
        UpdateRule::Alternating => {
            // the opponent responds to the ego mixture that already contains this iteration's response
            let updated = fp_update(if k == 0 { None } else { Some(&state.ego) }, ego_br.policy.clone(), k)?;
            let br = best_response(game, &updated, Side::Opponent, opts.budget, so, ledger)?;
            let probe_seed = derive_seed(so, &[TAG_PROFILE0]);
            let probe = best_response(game, &state.ego, Side::Opponent, opts.budget, probe_seed, ledger)?;
            (br, probe.valuation)
        }
    };
    let e = exploitability_from(&profile, &ego_br.valuation, &opp_eval);
    let metrics = IterationMetrics::new(k, &e, &ego_br, &opp_br);
    Ok((ego_br.policy, opp_br.policy, metrics))
}
