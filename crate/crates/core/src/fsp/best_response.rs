use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, exact_value, BrBudget, FspError, FspResult, Valuation, ZeroSumLedger, TAG_INIT, TAG_SAMPLE};
use crate::autodiff::Tape;
use crate::dynamics::Side;
use crate::optim::Adam;
use crate::policy::{init_policy, MixturePolicy, PolicyParams};
use crate::rollout::{rollout_tape, RolloutError};
use crate::scenarios::Game;
use crate::stl::{smooth_robustness, SmoothRobustness, StlError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    /// Exact expected return (learner's side) of the parameters entering this epoch.
    pub value: f64,
    /// Mean smooth objective over the epoch's training episodes.
    pub smooth: f64,
}

#[derive(Clone, Debug)]
pub struct BestResponse {
    pub policy: PolicyParams,
    /// Learner-side expected return of `policy` against the opponent mixture.
    pub value: f64,
    /// The same, per initial condition.
    pub per_ic: Vec<f64>,
    /// Ego-side valuation of `policy` against the opponent mixture.
    pub valuation: Valuation,
    pub best_epoch: usize,
    pub history: Vec<EpochStat>,
}

fn valuation(game: &Game, side: Side, policy: &PolicyParams, opponent: &MixturePolicy, ledger: &ZeroSumLedger) -> FspResult<Valuation> {
    let me = MixturePolicy::single(policy.clone());
    match side {
        Side::Ego => exact_value(game, &me, opponent, ledger),
        Side::Opponent => exact_value(game, opponent, &me, ledger),
    }
}

/// Gradient of the learner's smooth objective for one episode, and its value.
fn episode_gradient(
    game: &Game,
    side: Side,
    policy: &PolicyParams,
    opponent: &PolicyParams,
    ic: usize,
    tau: f64,
) -> Result<(Vec<f64>, f64), FspError> {
    let mut tape = Tape::new();
    let steps = game.steps();
    let joint = rollout_tape(game, &mut tape, side, policy, opponent, &game.initial_states[ic], steps)?;
    let rho = smooth_robustness(&game.formula, &joint, 0, tau, &mut tape)?;
    let n = policy.num_params();
    match rho {
        SmoothRobustness::Value(t) => {
            let v = tape.scalar(t);
            let g = tape.backward(t).map_err(StlError::from)?.vars();
            Ok((g.into_iter().map(|x| side.sign() * x).collect(), side.sign() * v))
        }
        other => Ok((vec![0.0; n], side.sign() * other.value(&tape))),
    }
}

/// Gradient-ascent best response of `side` against a fixed opponent mixture.
///
/// Every epoch first scores the current parameters exactly (hard robustness,
/// all opponent components and initial conditions), then takes one Adam step on
/// the mean smooth robustness of `opponent_samples` sampled episodes. The
/// highest-scoring parameters seen, including those after the last step, are returned.
pub fn best_response(
    game: &Game,
    opponent: &MixturePolicy,
    side: Side,
    budget: BrBudget,
    seed: u64,
    ledger: &ZeroSumLedger,
) -> FspResult<BestResponse> {
    budget.validate()?;
    let opt = &game.config.optimization;
    let mut policy = init_policy(game.policy_shape(), &game.action_bounds(), derive_seed(seed, &[TAG_INIT]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_SAMPLE]));
    let mut flat = policy.flat();
    let mut adam = Adam::new(flat.len(), opt.learning_rate);
    let n_ic = game.num_initial_conditions();
    let mut history = Vec::with_capacity(budget.epochs);
    let mut best: Option<(f64, usize, PolicyParams, Valuation)> = None;

    let consider = |epoch: usize, policy: &PolicyParams, best: &mut Option<(f64, usize, PolicyParams, Valuation)>| -> FspResult<f64> {
        let val = valuation(game, side, policy, opponent, ledger)?;
        let v = side.sign() * val.mean;
        if best.as_ref().is_none_or(|b| v > b.0) {
            *best = Some((v, epoch, policy.clone(), val));
        }
        Ok(v)
    };

    for epoch in 0..budget.epochs {
        policy.set_flat(&flat)?;
        let value = consider(epoch, &policy, &mut best)?;
        let draws: Vec<(usize, usize)> =
            (0..budget.opponent_samples).map(|_| (opponent.sample(&mut rng), rng.gen_range(0..n_ic))).collect();
        let tau = opt.tau_at(epoch);
        let results: Vec<FspResult<(Vec<f64>, f64)>> = draws
            .par_iter()
            .map(|&(c, ic)| episode_gradient(game, side, &policy, opponent.component(c), ic, tau))
            .collect();
        let mut grad = vec![0.0; flat.len()];
        let mut smooth = 0.0;
        for (episode, r) in results.into_iter().enumerate() {
            let (g, v) = r.map_err(|e| match e {
                FspError::Rollout(RolloutError::Autodiff(source)) | FspError::Stl(StlError::Autodiff(source)) => {
                    FspError::NonFiniteLoss { epoch, episode, source }
                }
                other => other,
            })?;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
            smooth += v;
        }
        let scale = 1.0 / budget.opponent_samples as f64;
        // Adam minimises, the learner maximises its own objective
        let descent: Vec<f64> = grad.iter().map(|g| -g * scale).collect();
        adam.step(&mut flat, &descent);
        history.push(EpochStat { epoch, value, smooth: smooth * scale });
    }
    policy.set_flat(&flat)?;
    consider(budget.epochs, &policy, &mut best)?;
    let (value, best_epoch, policy, val) = best.expect("at least one epoch evaluated");
    let per_ic = val.for_side(side).per_ic;
    Ok(BestResponse { policy, value, per_ic, valuation: val, best_epoch, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{GameConfig, ScenarioId};

    fn small_game() -> Game {
        let mut cfg = GameConfig::defaults(ScenarioId::Vehicles);
        cfg.scenario.horizon = 20;
        cfg.optimization.hidden = 8;
        // reach a disc straight ahead of every start position
        cfg.scenario.formula = Some("F[0,19](in_final_goal)".into());
        cfg.regions.insert("final_goal".into(), crate::scenarios::Region::Disc { center: [0.0, 0.0], radius: 0.3 });
        cfg.optimization.learning_rate = 0.02;
        Game::new(cfg).unwrap()
    }

    #[test]
    fn zero_budget_rejected() {
        let game = small_game();
        let opp = MixturePolicy::single(init_policy(game.policy_shape(), &game.action_bounds(), 0).unwrap());
        let ledger = ZeroSumLedger::new();
        let b = BrBudget { epochs: 0, opponent_samples: 3 };
        assert!(matches!(best_response(&game, &opp, Side::Ego, b, 1, &ledger), Err(FspError::Budget("epochs"))));
    }

    #[test]
    fn reaches_an_uncontested_goal() {
        let game = small_game();
        let opp = MixturePolicy::single(init_policy(game.policy_shape(), &game.action_bounds(), 0).unwrap());
        let ledger = ZeroSumLedger::new();
        let br = best_response(&game, &opp, Side::Ego, BrBudget { epochs: 60, opponent_samples: 5 }, 3, &ledger).unwrap();
        assert!(br.value > 0.0, "value {} at epoch {}", br.value, br.best_epoch);
        assert!(br.history.iter().all(|h| h.value <= br.value));
        assert_eq!(ledger.violations(), 0);
    }

    #[test]
    fn longer_budget_never_worse() {
        let game = small_game();
        let opp = MixturePolicy::single(init_policy(game.policy_shape(), &game.action_bounds(), 0).unwrap());
        let ledger = ZeroSumLedger::new();
        let a = best_response(&game, &opp, Side::Opponent, BrBudget { epochs: 5, opponent_samples: 2 }, 9, &ledger).unwrap();
        let b = best_response(&game, &opp, Side::Opponent, BrBudget { epochs: 10, opponent_samples: 2 }, 9, &ledger).unwrap();
        assert!(b.value >= a.value);
        assert_eq!(&a.history[..5], &b.history[..5]);
    }
}
