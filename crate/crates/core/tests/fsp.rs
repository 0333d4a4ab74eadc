use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use stlgame_core::dynamics::Side;
use stlgame_core::fsp::*;
use stlgame_core::policy::{init_policy, MixturePolicy, PolicyParams};
use stlgame_core::scenarios::{Game, GameConfig, ScenarioId};

fn tiny_game() -> Game {
    let mut cfg = GameConfig::defaults(ScenarioId::Vehicles);
    cfg.scenario.horizon = 8;
    cfg.optimization.hidden = 4;
    Game::new(cfg).unwrap()
}

const BUDGET: BrBudget = BrBudget { epochs: 3, opponent_samples: 2 };

fn policy(game: &Game, seed: u64) -> PolicyParams {
    init_policy(game.policy_shape(), &game.action_bounds(), seed).unwrap()
}

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timing.jsonl" {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn train(game: &Game, iterations: usize, out: &Path, resume: Option<Checkpoint>) -> FspState {
    let opts = FspOptions { iterations, budget: BUDGET, seed: 5, out_dir: Some(out.to_path_buf()) };
    run_fsp(game, &opts, resume, &ZeroSumLedger::new()).unwrap()
}

#[test]
fn weights_stay_uniform_for_a_hundred_updates() {
    let game = tiny_game();
    let mut mix: Option<MixturePolicy> = None;
    for k in 0..100 {
        mix = Some(fp_update(mix.as_ref(), policy(&game, k as u64), k).unwrap());
        let m = mix.as_ref().unwrap();
        for w in m.weights() {
            assert!((w - 1.0 / (k + 1) as f64).abs() <= 1e-12);
        }
    }
}

#[test]
fn runs_are_bit_identical() {
    let game = tiny_game();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = train(&game, 2, a.path(), None);
    let sb = train(&game, 2, b.path(), None);
    assert_eq!(sa.metrics, sb.metrics);
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let game = tiny_game();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let full = train(&game, 3, a.path(), None);
    train(&game, 1, b.path(), None);
    let ckpt = load_checkpoint(&b.path().join("iter_1")).unwrap();
    let resumed = train(&game, 3, b.path(), Some(ckpt));
    assert_eq!(full.metrics, resumed.metrics);
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn checkpoint_layout_and_mixture_sizes() {
    let game = tiny_game();
    let dir = tempfile::tempdir().unwrap();
    let state = train(&game, 2, dir.path(), None);
    assert_eq!(state.ego.len(), 2);
    assert_eq!(state.metrics.len(), 3);
    for k in 0..=2 {
        let ck = load_checkpoint(&dir.path().join(format!("iter_{k}"))).unwrap();
        assert_eq!(ck.state.iteration, k);
        assert_eq!(ck.state.ego.len(), k.max(1));
        assert_eq!(ck.state.metrics.len(), k + 1);
    }
    let last = load_checkpoint(&dir.path().join("iter_2")).unwrap();
    assert_eq!(last.state.ego, state.ego);
    assert_eq!(last.state.opponent, state.opponent);
    assert!(state.metrics.iter().all(|m| m.exploitability >= 0.0 && m.exploitability >= m.exploitability_raw));
}

#[test]
fn missing_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(FspError::Checkpoint { .. })));
}

#[test]
fn exploitability_of_a_pure_profile() {
    let game = tiny_game();
    let ego = MixturePolicy::single(policy(&game, 1));
    let opp = MixturePolicy::single(policy(&game, 2));
    let ledger = ZeroSumLedger::new();
    let (e, ebr, obr) = exploitability(&game, &ego, &opp, BUDGET, Evaluation::Exact, 3, &ledger).unwrap();
    assert!(e.value >= 0.0);
    assert!((e.ego_gain - (e.ego_br_value - e.profile_value)).abs() < 1e-12);
    assert!((e.opponent_gain - (e.profile_value - e.opponent_br_value)).abs() < 1e-12);
    // best responses keep the best epoch, which includes their random start
    assert!(ebr.value >= ebr.history[0].value && obr.value >= obr.history[0].value);
    assert_eq!(ledger.violations(), 0);
    let zero = BrBudget { epochs: 0, opponent_samples: 1 };
    assert!(matches!(exploitability(&game, &ego, &opp, zero, Evaluation::Exact, 3, &ledger), Err(FspError::Budget(_))));
}

#[test]
fn expected_return_of_a_deterministic_pair() {
    let game = tiny_game();
    let ego = MixturePolicy::single(policy(&game, 1));
    let opp = MixturePolicy::single(policy(&game, 2));
    let ledger = ZeroSumLedger::new();
    let one = expected_return(&game, &ego, &opp, 1, 9, &ledger).unwrap();
    assert_eq!(one.std, 0.0);
    let many = expected_return(&game, &ego, &opp, 40, 9, &ledger).unwrap();
    assert_eq!(many, expected_return(&game, &ego, &opp, 40, 9, &ledger).unwrap());
    for r in &many.records {
        let (rho, _, _) = play_episode(&game, ego.component(0), opp.component(0), r.initial_condition).unwrap();
        assert_eq!(rho, r.robustness);
        assert_eq!(r.ego_return + r.opponent_return, 0.0);
    }
    assert!(expected_return(&game, &ego, &opp, 0, 9, &ledger).is_err());
}

#[test]
fn heldout_rejects_bad_sets() {
    let game = tiny_game();
    let nash = MixturePolicy::single(policy(&game, 1));
    let (a, b) = (policy(&game, 2), policy(&game, 3));
    let ledger = ZeroSumLedger::new();
    let run = |seen: &[PolicyParams], unseen: &[PolicyParams]| heldout_experiment(&game, &nash, seen, unseen, BUDGET, 4, 1, &ledger);
    assert!(matches!(run(&[], std::slice::from_ref(&b)), Err(FspError::EmptySet("seen"))));
    assert!(matches!(run(std::slice::from_ref(&a), &[]), Err(FspError::EmptySet("unseen"))));
    assert!(matches!(run(std::slice::from_ref(&a), &[b.clone(), a.clone()]), Err(FspError::Overlap(1))));
    let report = run(&[a], &[b]).unwrap();
    assert_eq!(report.cells.len(), 4);
    assert_eq!(report.cell("nash", "unseen").episodes, 4);
}

#[test]
fn opponent_best_response_lowers_ego_value() {
    let game = tiny_game();
    let ego = MixturePolicy::single(policy(&game, 1));
    let ledger = ZeroSumLedger::new();
    let br = best_response(&game, &ego, Side::Opponent, BrBudget { epochs: 5, opponent_samples: 3 }, 4, &ledger).unwrap();
    assert!((br.value + br.valuation.mean).abs() < 1e-12);
    assert!(br.history.iter().all(|h| h.value <= br.value));
}
