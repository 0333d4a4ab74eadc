//! Horizon, Boolean satisfaction and hard robustness.
//!
//! Both semantics are computed bottom-up as signals over every start time the
//! trace supports, so nested temporal operators cost `O(|phi| * T * width)`.

use super::{check_length, Formula, StlResult, Trace, TOP};

/// Number of future steps a formula needs beyond its evaluation time.
pub fn horizon(phi: &Formula) -> usize {
    match phi {
        Formula::True | Formula::Predicate(_) => 0,
        Formula::Not(c) => horizon(c),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => horizon(a).max(horizon(b)),
        Formula::Until(i, a, b) => i.hi() + horizon(a).max(horizon(b)),
        Formula::Eventually(i, c) | Formula::Always(i, c) => i.hi() + horizon(c),
    }
}

/// Robustness `rho(phi, s, k)` for every `k` in `0 ..= len - 1 - horizon(phi)`.
pub fn robustness_signal(phi: &Formula, trace: &Trace) -> Vec<f64> {
    let n = valid_starts(phi, trace.len());
    match phi {
        Formula::True => vec![TOP; n],
        Formula::Predicate(p) => trace.states()[..n].iter().map(|s| p.eval(s)).collect(),
        Formula::Not(c) => robustness_signal(c, trace)[..n].iter().map(|v| -v).collect(),
        Formula::And(a, b) => zip_with(phi, trace, a, b, f64::min),
        Formula::Or(a, b) => zip_with(phi, trace, a, b, f64::max),
        Formula::Implies(a, b) => zip_with(phi, trace, a, b, |x, y| (-x).max(y)),
        Formula::Eventually(i, c) => {
            let r = robustness_signal(c, trace);
            (0..n).map(|k| r[k + i.lo()..=k + i.hi()].iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
        }
        Formula::Always(i, c) => {
            let r = robustness_signal(c, trace);
            (0..n).map(|k| r[k + i.lo()..=k + i.hi()].iter().copied().fold(f64::INFINITY, f64::min)).collect()
        }
        Formula::Until(i, a, b) => {
            let r1 = robustness_signal(a, trace);
            let r2 = robustness_signal(b, trace);
            (0..n)
                .map(|k| {
                    let mut best = f64::NEG_INFINITY;
                    let mut prefix = f64::INFINITY;
                    for kp in k..=k + i.hi() {
                        prefix = prefix.min(r1[kp]);
                        if kp >= k + i.lo() {
                            best = best.max(r2[kp].min(prefix));
                        }
                    }
                    best
                })
                .collect()
        }
    }
}

fn valid_starts(phi: &Formula, len: usize) -> usize {
    (len).saturating_sub(horizon(phi))
}

fn zip_with(phi: &Formula, trace: &Trace, a: &Formula, b: &Formula, f: fn(f64, f64) -> f64) -> Vec<f64> {
    let n = valid_starts(phi, trace.len());
    let ra = robustness_signal(a, trace);
    let rb = robustness_signal(b, trace);
    (0..n).map(|k| f(ra[k], rb[k])).collect()
}

/// Hard robustness at step `k`; `True` is worth [`TOP`].
pub fn robustness(phi: &Formula, trace: &Trace, k: usize) -> StlResult<f64> {
    check_length(phi, trace.len(), k)?;
    phi.check_dimension(trace.dim())?;
    Ok(robustness_signal(phi, trace)[k])
}

fn satisfaction_signal(phi: &Formula, trace: &Trace) -> Vec<bool> {
    let n = valid_starts(phi, trace.len());
    let both = |a: &Formula, b: &Formula, f: fn(bool, bool) -> bool| {
        let sa = satisfaction_signal(a, trace);
        let sb = satisfaction_signal(b, trace);
        (0..n).map(|k| f(sa[k], sb[k])).collect()
    };
    match phi {
        Formula::True => vec![true; n],
        Formula::Predicate(p) => trace.states()[..n].iter().map(|s| p.eval(s) >= 0.0).collect(),
        Formula::Not(c) => satisfaction_signal(c, trace)[..n].iter().map(|v| !v).collect(),
        Formula::And(a, b) => both(a, b, |x, y| x && y),
        Formula::Or(a, b) => both(a, b, |x, y| x || y),
        Formula::Implies(a, b) => both(a, b, |x, y| !x || y),
        Formula::Eventually(i, c) => {
            let s = satisfaction_signal(c, trace);
            (0..n).map(|k| s[k + i.lo()..=k + i.hi()].iter().any(|&v| v)).collect()
        }
        Formula::Always(i, c) => {
            let s = satisfaction_signal(c, trace);
            (0..n).map(|k| s[k + i.lo()..=k + i.hi()].iter().all(|&v| v)).collect()
        }
        Formula::Until(i, a, b) => {
            let s1 = satisfaction_signal(a, trace);
            let s2 = satisfaction_signal(b, trace);
            (0..n)
                .map(|k| (k + i.lo()..=k + i.hi()).any(|kp| s2[kp] && s1[k..=kp].iter().all(|&v| v)))
                .collect()
        }
    }
}

/// Boolean satisfaction `(s, k) |= phi`.
pub fn eval_boolean(phi: &Formula, trace: &Trace, k: usize) -> StlResult<bool> {
    check_length(phi, trace.len(), k)?;
    phi.check_dimension(trace.dim())?;
    Ok(satisfaction_signal(phi, trace)[k])
}
