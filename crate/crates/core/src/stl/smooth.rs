//! Differentiable robustness: the hard recursion with every min/max replaced by
//! a temperature-`tau` log-sum-exp.
//!
//! `True` never reaches the tape. It is tracked symbolically as `Top` (and its
//! negation as `Bottom`) and dropped from soft minima / maxima, which keeps
//! `exp` away from the sentinel value.

use super::{check_length, horizon, Formula, StlError, StlResult, Trace, TOP};
use crate::autodiff::{Tape, Tensor};

/// Smooth robustness value: a tape scalar, or one of the two infinite constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SmoothRobustness {
    Top,
    Bottom,
    Value(Tensor),
}

impl SmoothRobustness {
    pub fn tensor(self) -> Option<Tensor> {
        match self {
            SmoothRobustness::Value(t) => Some(t),
            _ => None,
        }
    }

    /// Forward value, with the infinities mapped to `+-TOP`.
    pub fn value(self, tape: &Tape) -> f64 {
        match self {
            SmoothRobustness::Top => TOP,
            SmoothRobustness::Bottom => -TOP,
            SmoothRobustness::Value(t) => tape.scalar(t),
        }
    }
}

use SmoothRobustness::{Bottom, Top, Value};

struct Node<'a> {
    formula: &'a Formula,
    children: [usize; 2],
}

fn flatten<'a>(phi: &'a Formula, nodes: &mut Vec<Node<'a>>) -> usize {
    let id = nodes.len();
    nodes.push(Node { formula: phi, children: [usize::MAX; 2] });
    let kids: Vec<usize> = phi.children().into_iter().map(|c| flatten(c, nodes)).collect();
    for (slot, k) in kids.into_iter().enumerate() {
        nodes[id].children[slot] = k;
    }
    id
}

struct Evaluator<'a, 't> {
    nodes: Vec<Node<'a>>,
    memo: Vec<Option<SmoothRobustness>>,
    len: usize,
    states: &'t [Tensor],
    tau: f64,
    tape: &'t mut Tape,
}

impl Evaluator<'_, '_> {
    fn soft(&mut self, items: &[SmoothRobustness], maximum: bool) -> StlResult<SmoothRobustness> {
        // For a maximum `Top` absorbs and `Bottom` is neutral; for a minimum the reverse.
        let (absorbing, neutral) = if maximum { (Top, Bottom) } else { (Bottom, Top) };
        let mut vals = Vec::with_capacity(items.len());
        for &it in items {
            if it == absorbing {
                return Ok(absorbing);
            }
            if let Value(t) = it {
                vals.push(t);
            }
        }
        Ok(match vals.len() {
            0 => neutral,
            1 => Value(vals[0]),
            _ if maximum => Value(self.tape.softmax(&vals, self.tau)?),
            _ => Value(self.tape.softmin(&vals, self.tau)?),
        })
    }

    fn negate(&mut self, v: SmoothRobustness) -> StlResult<SmoothRobustness> {
        Ok(match v {
            Top => Bottom,
            Bottom => Top,
            Value(t) => Value(self.tape.neg(t)?),
        })
    }

    fn eval(&mut self, id: usize, k: usize) -> StlResult<SmoothRobustness> {
        let slot = id * self.len + k;
        if let Some(v) = self.memo[slot] {
            return Ok(v);
        }
        let [c0, c1] = self.nodes[id].children;
        let v = match self.nodes[id].formula {
            Formula::True => Top,
            Formula::Predicate(p) => Value(p.eval_tape(self.tape, self.states[k])?),
            Formula::Not(_) => {
                let c = self.eval(c0, k)?;
                self.negate(c)?
            }
            Formula::And(..) => {
                let (a, b) = (self.eval(c0, k)?, self.eval(c1, k)?);
                self.soft(&[a, b], false)?
            }
            Formula::Or(..) => {
                let (a, b) = (self.eval(c0, k)?, self.eval(c1, k)?);
                self.soft(&[a, b], true)?
            }
            Formula::Implies(..) => {
                let a = self.eval(c0, k)?;
                let na = self.negate(a)?;
                let b = self.eval(c1, k)?;
                self.soft(&[na, b], true)?
            }
            Formula::Eventually(i, _) | Formula::Always(i, _) => {
                let maximum = matches!(self.nodes[id].formula, Formula::Eventually(..));
                let items = (k + i.lo()..=k + i.hi()).map(|kp| self.eval(c0, kp)).collect::<StlResult<Vec<_>>>()?;
                self.soft(&items, maximum)?
            }
            Formula::Until(i, ..) => {
                let mut outer = Vec::with_capacity(i.width());
                for kp in k + i.lo()..=k + i.hi() {
                    let mut inner = Vec::with_capacity(kp - k + 2);
                    inner.push(self.eval(c1, kp)?);
                    for kpp in k..=kp {
                        inner.push(self.eval(c0, kpp)?);
                    }
                    outer.push(self.soft(&inner, false)?);
                }
                self.soft(&outer, true)?
            }
        };
        self.memo[slot] = Some(v);
        Ok(v)
    }
}

/// Smooth robustness of `phi` at step `k` over a trace whose states live on `tape`.
pub fn smooth_robustness(
    phi: &Formula,
    states: &[Tensor],
    k: usize,
    tau: f64,
    tape: &mut Tape,
) -> StlResult<SmoothRobustness> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(StlError::NonPositiveTemperature(tau));
    }
    check_length(phi, states.len(), k)?;
    if let Some(s) = states.first() {
        phi.check_dimension(s.len())?;
    }
    let mut nodes = Vec::new();
    flatten(phi, &mut nodes);
    let len = states.len();
    let memo = vec![None; nodes.len() * len];
    let mut ev = Evaluator { nodes, memo, len, states, tau, tape };
    ev.eval(0, k)
}

/// Smooth robustness over a plain trace (the states are recorded as constants).
pub fn smooth_robustness_value(phi: &Formula, trace: &Trace, k: usize, tau: f64) -> StlResult<f64> {
    let mut tape = Tape::new();
    let states = trace.states().iter().map(|s| tape.constant(s)).collect::<Result<Vec<_>, _>>()?;
    let v = smooth_robustness(phi, &states, k, tau, &mut tape)?;
    Ok(v.value(&tape))
}

/// Worst-case gap between smooth and hard robustness at a given temperature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothBound {
    /// Nesting depth of soft min/max operators (an until counts twice).
    pub depth: usize,
    /// Largest number of arguments of any soft operator.
    pub width: usize,
    /// `depth * tau * ln(width)`.
    pub uniform: f64,
    /// Sum of `tau * ln(width_i)` along the worst root-to-leaf path; never above `uniform`.
    pub path: f64,
}

/// Each soft operator over `n` arguments is within `tau * ln(n)` of the exact
/// min/max, and min/max are 1-Lipschitz in the sup norm, so errors add along a path.
pub fn smooth_bound(phi: &Formula, tau: f64) -> SmoothBound {
    fn walk(phi: &Formula) -> (usize, usize, Vec<usize>) {
        // returns (depth, width, widths along the worst path by log-sum)
        let best_child = |kids: Vec<&Formula>| {
            let mut depth = 0;
            let mut width = 1;
            let mut path: Vec<usize> = Vec::new();
            for c in kids {
                let (d, w, p) = walk(c);
                depth = depth.max(d);
                width = width.max(w);
                if log_sum(&p) > log_sum(&path) {
                    path = p;
                }
            }
            (depth, width, path)
        };
        match phi {
            Formula::True | Formula::Predicate(_) => (0, 1, vec![]),
            Formula::Not(c) => walk(c),
            Formula::And(..) | Formula::Or(..) | Formula::Implies(..) => {
                let (d, w, mut p) = best_child(phi.children());
                p.push(2);
                (d + 1, w.max(2), p)
            }
            Formula::Eventually(i, c) | Formula::Always(i, c) => {
                let (d, w, mut p) = walk(c);
                p.push(i.width());
                (d + 1, w.max(i.width()), p)
            }
            Formula::Until(i, ..) => {
                let (d, w, mut p) = best_child(phi.children());
                let inner = i.hi() + 2;
                p.push(inner);
                p.push(i.width());
                (d + 2, w.max(inner).max(i.width()), p)
            }
        }
    }
    fn log_sum(p: &[usize]) -> f64 {
        p.iter().map(|&w| (w as f64).ln()).sum()
    }
    let (depth, width, path) = walk(phi);
    SmoothBound {
        depth,
        width,
        uniform: depth as f64 * tau * (width as f64).ln(),
        path: tau * log_sum(&path),
    }
}

/// Number of trace samples the formula needs when evaluated at step 0.
pub fn required_len(phi: &Formula) -> usize {
    horizon(phi) + 1
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::autodiff::{softmax_value, Tape};
    use crate::stl::{robustness, Interval, Predicate};

    fn x_ge(c: f64) -> Formula {
        Formula::Predicate(Arc::new(Predicate::affine1("x", 0, 1.0, -c).unwrap()))
    }

    #[test]
    fn softmax_of_equal_zeros() {
        assert!((softmax_value(&[0.0, 0.0], 1.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn approaches_hard_value() {
        let g = Formula::always(Interval::new(0, 2).unwrap(), x_ge(1.0));
        let t = Trace::scalar(&[2.0, 3.0, 1.5]);
        let s = smooth_robustness_value(&g, &t, 0, 0.001).unwrap();
        let h = robustness(&g, &t, 0).unwrap();
        assert_eq!(h, 0.5);
        assert!(s <= h && h - s <= 0.001 * 3f64.ln(), "{s}");
    }

    #[test]
    fn softmax_gradient_is_half_at_tie() {
        let mut t = Tape::new();
        let x = t.var_scalar(0.7).unwrap();
        let y = t.var_scalar(0.7).unwrap();
        let m = t.softmax(&[x, y], 0.3).unwrap();
        let g = t.backward(m).unwrap();
        assert!((g.wrt(x).unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_temperature() {
        let t = Trace::scalar(&[1.0]);
        assert!(matches!(smooth_robustness_value(&x_ge(0.0), &t, 0, 0.0), Err(StlError::NonPositiveTemperature(_))));
        assert!(matches!(smooth_robustness_value(&x_ge(0.0), &t, 0, -1.0), Err(StlError::NonPositiveTemperature(_))));
    }

    #[test]
    fn true_is_eliminated() {
        let t = Trace::scalar(&[0.25, -1.0]);
        let i = Interval::new(0, 1).unwrap();
        let ev = Formula::eventually(i, x_ge(0.0));
        let tu = Formula::until(i, Formula::True, x_ge(0.0));
        let a = smooth_robustness_value(&ev, &t, 0, 0.1).unwrap();
        let b = smooth_robustness_value(&tu, &t, 0, 0.1).unwrap();
        assert_eq!(a, b);
        assert_eq!(smooth_robustness_value(&Formula::True, &t, 0, 0.1).unwrap(), TOP);
        let neg = Formula::and(Formula::not(Formula::True), x_ge(0.0));
        assert_eq!(smooth_robustness_value(&neg, &t, 0, 0.1).unwrap(), -TOP);
    }

    #[test]
    fn bound_for_simple_always() {
        let g = Formula::always(Interval::new(0, 2).unwrap(), x_ge(1.0));
        let b = smooth_bound(&g, 0.5);
        assert_eq!((b.depth, b.width), (1, 3));
        assert!((b.uniform - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert_eq!(b.uniform, b.path);
        assert_eq!(required_len(&g), 3);
    }
}
