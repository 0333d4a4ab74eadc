//! Shared fixtures for the benchmarks.

use stlgame_core::policy::init_policy;
use stlgame_core::rollout::rollout;
use stlgame_core::{Game, MixturePolicy, PolicyParams, ScenarioId, Trace};

pub struct Fixture {
    pub game: Game,
    pub ego: PolicyParams,
    pub opponent: PolicyParams,
    /// Episode from the first initial condition.
    pub trace: Trace,
}

impl Fixture {
    pub fn new(id: ScenarioId) -> Self {
        let game = Game::from_scenario(id).expect("built-in scenario");
        let ego = init_policy(game.policy_shape(), &game.action_bounds(), 1).expect("policy");
        let opponent = init_policy(game.policy_shape(), &game.action_bounds(), 2).expect("policy");
        let trace = rollout(&game, &ego, &opponent, &game.initial_states[0], game.steps()).expect("rollout").trace;
        Self { game, ego, opponent, trace }
    }

    pub fn opponent_mixture(&self) -> MixturePolicy {
        MixturePolicy::single(self.opponent.clone())
    }
}
