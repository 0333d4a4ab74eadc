//! Simultaneous-move episodes: both agents observe the joint state, act, and
//! the joint state advances once per step.

use std::io::Write;

use thiserror::Error;

use crate::autodiff::{AdError, Tape, Tensor};
use crate::dynamics::{DynamicsError, Side};
use crate::policy::{PolicyError, PolicyParams};
use crate::scenarios::Game;
use crate::stl::{Trace, StlError};

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("policy evaluation failed at step {step}: {source}")]
    Policy { step: usize, source: PolicyError },
    #[error("non-finite state at step {step}: {source}")]
    NonFinite { step: usize, source: DynamicsError },
    #[error("episode length {steps} is shorter than the formula horizon {horizon}")]
    TooShort { steps: usize, horizon: usize },
    #[error("start state has dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error("csv: {0}")]
    Io(#[from] std::io::Error),
}

pub type RolloutResult<T> = Result<T, RolloutError>;

/// A finished plain episode: `T + 1` joint states and `T` action pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub trace: Trace,
    pub ego_actions: Vec<Vec<f64>>,
    pub opponent_actions: Vec<Vec<f64>>,
}

fn check_start(game: &Game, s0: &[f64]) -> RolloutResult<()> {
    if s0.len() != game.layout.dim() {
        return Err(RolloutError::Dimension { expected: game.layout.dim(), found: s0.len() });
    }
    Ok(())
}

/// Plain-arithmetic rollout for `steps` steps.
pub fn rollout(game: &Game, ego: &PolicyParams, opponent: &PolicyParams, s0: &[f64], steps: usize) -> RolloutResult<Episode> {
    check_start(game, s0)?;
    let layout = &game.layout;
    let mut he = ego.initial_hidden();
    let mut ho = opponent.initial_hidden();
    let mut states = Vec::with_capacity(steps + 1);
    let mut ego_actions = Vec::with_capacity(steps);
    let mut opponent_actions = Vec::with_capacity(steps);
    states.push(s0.to_vec());
    for step in 0..steps {
        let s = &states[step];
        let ae = ego.step(&mut he, &layout.observe(s, Side::Ego)).map_err(|source| RolloutError::Policy { step, source })?;
        let ao = opponent
            .step(&mut ho, &layout.observe(s, Side::Opponent))
            .map_err(|source| RolloutError::Policy { step, source })?;
        let next_e = game.dynamics.step(&s[layout.ego.clone()], &ae).map_err(|source| RolloutError::NonFinite { step, source })?;
        let next_o =
            game.dynamics.step(&s[layout.opponent.clone()], &ao).map_err(|source| RolloutError::NonFinite { step, source })?;
        states.push(layout.join(&next_e, &next_o));
        ego_actions.push(ae);
        opponent_actions.push(ao);
    }
    Ok(Episode { trace: Trace::new(states, game.dynamics.dt())?, ego_actions, opponent_actions })
}

/// Tape-recorded rollout for the `learner` side.
///
/// The learner's weights are tape variables and the other side's weights are
/// constants. Both agents step on the tape, so the gradient also flows through
/// the other side's reaction to the learner. Returns the joint states as tape tensors.
pub fn rollout_tape(
    game: &Game,
    tape: &mut Tape,
    learner: Side,
    learner_policy: &PolicyParams,
    other_policy: &PolicyParams,
    s0: &[f64],
    steps: usize,
) -> RolloutResult<Vec<Tensor>> {
    check_start(game, s0)?;
    let layout = &game.layout;
    let (ego, opponent) = match learner {
        Side::Ego => (learner_policy, other_policy),
        Side::Opponent => (other_policy, learner_policy),
    };
    let record = |tape: &mut Tape, p: &PolicyParams, side: Side| if side == learner { p.record_vars(tape) } else { p.record_constants(tape) };
    let we = record(tape, ego, Side::Ego)?;
    let wo = record(tape, opponent, Side::Opponent)?;
    let model = game.dynamics.tape_model(tape)?;
    let mut he = ego.initial_hidden_tape(tape)?;
    let mut ho = opponent.initial_hidden_tape(tape)?;

    let mut se = tape.constant(&s0[layout.ego.clone()])?;
    let mut so = tape.constant(&s0[layout.opponent.clone()])?;
    let mut joint = Vec::with_capacity(steps + 1);
    joint.push(tape.concat(&[se, so])?);
    for step in 0..steps {
        let obs_e = joint[step];
        let obs_o = tape.concat(&[so, se])?;
        let (ae, nhe) = ego.step_tape(tape, &we, he, obs_e).map_err(|source| RolloutError::Policy { step, source })?;
        let (ao, nho) = opponent.step_tape(tape, &wo, ho, obs_o).map_err(|source| RolloutError::Policy { step, source })?;
        he = nhe;
        ho = nho;
        let non_finite = |e| RolloutError::NonFinite { step, source: DynamicsError::Autodiff(e) };
        se = game.dynamics.step_tape(tape, model, se, ae).map_err(non_finite)?;
        so = game.dynamics.step_tape(tape, model, so, ao).map_err(non_finite)?;
        joint.push(tape.concat(&[se, so])?);
    }
    Ok(joint)
}

/// Writes `t,agent,<state>,<action>` rows, one per (step, agent). The final
/// step has no action, so its action cells are empty.
pub fn write_csv<W: Write>(game: &Game, episode: &Episode, out: W) -> RolloutResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "agent".to_string()];
    header.extend(game.dynamics.state_names().iter().map(|s| s.to_string()));
    header.extend(game.dynamics.action_names().iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    let act_dim = game.dynamics.action_dim();
    for (t, s) in episode.trace.states().iter().enumerate() {
        for side in [Side::Ego, Side::Opponent] {
            let mut row = vec![t.to_string(), side.name().to_string()];
            row.extend(s[game.layout.slice(side)].iter().map(|v| fmt17(*v)));
            let actions = match side {
                Side::Ego => &episode.ego_actions,
                Side::Opponent => &episode.opponent_actions,
            };
            match actions.get(t) {
                Some(a) => row.extend(a.iter().map(|v| fmt17(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), act_dim)),
            }
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> RolloutError {
    RolloutError::Io(std::io::Error::other(e))
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
