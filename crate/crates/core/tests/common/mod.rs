//! Reference implementations shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use stlgame_core::stl::{Formula, Interval, Predicate, PredicateKind};

/// Definition-level robustness at step `k`, recomputing every subformula from scratch.
pub fn brute_robustness(phi: &Formula, s: &[Vec<f64>], k: usize) -> f64 {
    match phi {
        Formula::True => 1e9,
        Formula::Predicate(p) => match &p.kind {
            PredicateKind::Affine { indices, coeffs, offset } => {
                indices.iter().zip(coeffs).map(|(&i, c)| c * s[k][i]).sum::<f64>() + offset
            }
            _ => p.eval(&s[k]),
        },
        Formula::Not(c) => -brute_robustness(c, s, k),
        Formula::And(a, b) => brute_robustness(a, s, k).min(brute_robustness(b, s, k)),
        Formula::Or(a, b) => brute_robustness(a, s, k).max(brute_robustness(b, s, k)),
        Formula::Implies(a, b) => (-brute_robustness(a, s, k)).max(brute_robustness(b, s, k)),
        Formula::Eventually(i, c) => {
            (k + i.lo()..=k + i.hi()).map(|t| brute_robustness(c, s, t)).fold(f64::NEG_INFINITY, f64::max)
        }
        Formula::Always(i, c) => (k + i.lo()..=k + i.hi()).map(|t| brute_robustness(c, s, t)).fold(f64::INFINITY, f64::min),
        // the left operand must hold on every step up to and including the witness
        Formula::Until(i, a, b) => (k + i.lo()..=k + i.hi())
            .map(|t| {
                let hold = (k..=t).map(|u| brute_robustness(a, s, u)).fold(f64::INFINITY, f64::min);
                brute_robustness(b, s, t).min(hold)
            })
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Definition-level Boolean satisfaction.
pub fn brute_sat(phi: &Formula, s: &[Vec<f64>], k: usize) -> bool {
    match phi {
        Formula::True => true,
        Formula::Predicate(p) => p.eval(&s[k]) >= 0.0,
        Formula::Not(c) => !brute_sat(c, s, k),
        Formula::And(a, b) => brute_sat(a, s, k) && brute_sat(b, s, k),
        Formula::Or(a, b) => brute_sat(a, s, k) || brute_sat(b, s, k),
        Formula::Implies(a, b) => !brute_sat(a, s, k) || brute_sat(b, s, k),
        Formula::Eventually(i, c) => (k + i.lo()..=k + i.hi()).any(|t| brute_sat(c, s, t)),
        Formula::Always(i, c) => (k + i.lo()..=k + i.hi()).all(|t| brute_sat(c, s, t)),
        Formula::Until(i, a, b) => (k + i.lo()..=k + i.hi()).any(|t| brute_sat(b, s, t) && (k..=t).all(|u| brute_sat(a, s, u))),
    }
}

/// Steps beyond `k` a formula reads.
pub fn brute_horizon(phi: &Formula) -> usize {
    match phi {
        Formula::True | Formula::Predicate(_) => 0,
        Formula::Not(c) => brute_horizon(c),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => brute_horizon(a).max(brute_horizon(b)),
        Formula::Eventually(i, c) | Formula::Always(i, c) => i.hi() + brute_horizon(c),
        Formula::Until(i, a, b) => i.hi() + brute_horizon(a).max(brute_horizon(b)),
    }
}

/// `(D, W)`: nesting depth of soft min/max layers and their widest fan-in.
/// An until is a max over witnesses of a min over the held prefix: two layers, the inner
/// one reading up to `hi + 1` prefix values plus the witness.
pub fn depth_width(phi: &Formula) -> (usize, usize) {
    match phi {
        Formula::True | Formula::Predicate(_) => (0, 1),
        Formula::Not(c) => depth_width(c),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            let (da, wa) = depth_width(a);
            let (db, wb) = depth_width(b);
            (1 + da.max(db), 2.max(wa).max(wb))
        }
        Formula::Eventually(i, c) | Formula::Always(i, c) => {
            let (d, w) = depth_width(c);
            (1 + d, w.max(i.hi() - i.lo() + 1))
        }
        Formula::Until(i, a, b) => {
            let (da, wa) = depth_width(a);
            let (db, wb) = depth_width(b);
            (2 + da.max(db), wa.max(wb).max(i.hi() + 2).max(i.hi() - i.lo() + 1))
        }
    }
}

pub fn random_affine<R: Rng>(rng: &mut R, name: String, dim: usize) -> Arc<Predicate> {
    let n = rng.gen_range(1..=dim.min(3));
    let mut indices: Vec<usize> = (0..dim).collect();
    for i in 0..n {
        let j = rng.gen_range(i..dim);
        indices.swap(i, j);
    }
    indices.truncate(n);
    let coeffs = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let offset = rng.gen_range(-1.0..1.0);
    Arc::new(Predicate::new(name, PredicateKind::Affine { indices, coeffs, offset }).unwrap())
}

fn interval<R: Rng>(rng: &mut R, max_hi: usize) -> Interval {
    let a = rng.gen_range(0..=max_hi.min(3));
    let b = rng.gen_range(a..=max_hi.min(a + 5));
    Interval::new(a, b).unwrap()
}

/// Random formula of depth at most `depth` over `preds`, with every interval
/// upper bound at most `max_hi`.
pub fn random_formula<R: Rng>(rng: &mut R, depth: usize, preds: &[Arc<Predicate>], max_hi: usize) -> Formula {
    let leaf = |rng: &mut R| Formula::pred(preds[rng.gen_range(0..preds.len())].clone());
    if depth == 0 || rng.gen_bool(0.2) {
        return leaf(rng);
    }
    let sub = |rng: &mut R| random_formula(rng, depth - 1, preds, max_hi);
    match rng.gen_range(0..7) {
        0 => Formula::not(sub(rng)),
        1 => Formula::and(sub(rng), sub(rng)),
        2 => Formula::or(sub(rng), sub(rng)),
        3 => Formula::implies(sub(rng), sub(rng)),
        4 => Formula::eventually(interval(rng, max_hi), sub(rng)),
        5 => Formula::always(interval(rng, max_hi), sub(rng)),
        _ => Formula::until(interval(rng, max_hi), sub(rng), sub(rng)),
    }
}

pub fn random_states<R: Rng>(rng: &mut R, len: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..len).map(|_| (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect()
}

/// A random (formula, trace) instance with horizon below `max_len`; the trace is just long enough
/// for evaluation at step 0, plus up to `slack` extra samples.
pub fn random_instance<R: Rng>(rng: &mut R, depth: usize, dim: usize, max_len: usize, slack: usize) -> (Formula, Vec<Vec<f64>>) {
    let preds: Vec<Arc<Predicate>> = (0..4).map(|i| random_affine(rng, format!("p{i}"), dim)).collect();
    loop {
        let phi = random_formula(rng, depth, &preds, 8);
        let need = brute_horizon(&phi) + 1;
        if need <= max_len {
            let len = (need + rng.gen_range(0..=slack)).min(max_len);
            return (phi, random_states(rng, len, dim));
        }
    }
}

/// Largest relative deviation between two gradient vectors, scaled by the larger max-norm.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

pub mod rollouts {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use stlgame_core::autodiff::Tape;
    use stlgame_core::dynamics::Side;
    use stlgame_core::policy::{init_policy, PolicyParams};
    use stlgame_core::rollout::{rollout, rollout_tape};
    use stlgame_core::scenarios::{Game, GameConfig, ScenarioId};
    use stlgame_core::stl::{smooth_robustness, smooth_robustness_value, Formula, SmoothRobustness};

    use super::{brute_horizon, random_affine, random_formula};

    pub const STEPS: usize = 5;

    /// Drone game with a 5-step horizon and small recurrent policies.
    pub fn drone_game(hidden: usize) -> Game {
        let mut cfg = GameConfig::defaults(ScenarioId::Drones);
        cfg.scenario.horizon = STEPS;
        cfg.scenario.formula = Some(format!("F[0,{}](in_goal)", STEPS - 1));
        cfg.optimization.hidden = hidden;
        Game::new(cfg).unwrap()
    }

    /// `(autodiff, central difference)` gradients of the ego's smooth robustness
    /// with respect to its policy parameters, for one random instance.
    pub fn gradient_pair(game: &Game, seed: u64, h: f64) -> (Vec<f64>, Vec<f64>, Formula) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = game.layout.dim();
        let preds: Vec<_> = (0..4).map(|i| random_affine(&mut rng, format!("p{i}"), dim)).collect();
        let phi = loop {
            let f = random_formula(&mut rng, 3, &preds, 2);
            if brute_horizon(&f) <= STEPS {
                break f;
            }
        };
        let tau = rng.gen_range(0.2..1.0);
        let ego = init_policy(game.policy_shape(), &game.action_bounds(), rng.gen()).unwrap();
        let opp = init_policy(game.policy_shape(), &game.action_bounds(), rng.gen()).unwrap();
        let ic = rng.gen_range(0..game.num_initial_conditions());
        let s0 = game.initial_states[ic].clone();

        let mut tape = Tape::new();
        let joint = rollout_tape(game, &mut tape, Side::Ego, &ego, &opp, &s0, STEPS).unwrap();
        let ad = match smooth_robustness(&phi, &joint, 0, tau, &mut tape).unwrap() {
            SmoothRobustness::Value(t) => tape.backward(t).unwrap().vars(),
            _ => vec![0.0; ego.num_params()],
        };
        let value = |p: &PolicyParams| {
            let ep = rollout(game, p, &opp, &s0, STEPS).unwrap();
            smooth_robustness_value(&phi, &ep.trace, 0, tau).unwrap()
        };
        let flat = ego.flat();
        let mut probe = ego.clone();
        let fd = (0..flat.len())
            .map(|i| {
                let mut x = flat.clone();
                x[i] = flat[i] + h;
                probe.set_flat(&x).unwrap();
                let up = value(&probe);
                x[i] = flat[i] - h;
                probe.set_flat(&x).unwrap();
                let down = value(&probe);
                (up - down) / (2.0 * h)
            })
            .collect();
        (ad, fd, phi)
    }
}
