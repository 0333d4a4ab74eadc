//! Signal temporal logic: formulas, predicates, traces and their semantics.
//!
//! Time is discrete. Interval bounds count timesteps and a trace `s_0 .. s_T`
//! is indexed by step; the sampling period is carried as metadata only.

mod parse;
mod predicate;
mod semantics;
mod smooth;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::autodiff::AdError;

pub use parse::parse_formula;
pub use predicate::{Predicate, PredicateKind, PredicateTable};
pub use semantics::{eval_boolean, horizon, robustness, robustness_signal};
pub use smooth::{required_len, smooth_bound, smooth_robustness, smooth_robustness_value, SmoothBound, SmoothRobustness};

/// Hard robustness assigned to `True` (and its negation, `-TOP`).
pub const TOP: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StlError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown predicate `{name}` at {line}:{column}")]
    UnknownPredicate { name: String, line: usize, column: usize },
    #[error("malformed interval at {line}:{column}: {message}")]
    MalformedInterval { line: usize, column: usize, message: String },
    #[error("invalid interval [{a}, {b}]: lower bound exceeds upper bound")]
    InvalidInterval { a: usize, b: usize },
    #[error("trace too short: evaluating at step {k} with horizon {horizon} needs {needed} samples, trace has {available}")]
    TraceTooShort { k: usize, horizon: usize, needed: usize, available: usize },
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("state dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("predicate `{name}` reads state index {index} but states have dimension {dim}")]
    PredicateIndex { name: String, index: usize, dim: usize },
    #[error("invalid predicate `{name}`: {message}")]
    InvalidPredicate { name: String, message: String },
    #[error(transparent)]
    Autodiff(#[from] AdError),
}

pub type StlResult<T> = Result<T, StlError>;

/// Closed interval of timesteps `[a, b]` with `a <= b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    a: usize,
    b: usize,
}

impl Interval {
    pub fn new(a: usize, b: usize) -> StlResult<Self> {
        if a > b {
            return Err(StlError::InvalidInterval { a, b });
        }
        Ok(Self { a, b })
    }

    pub fn lo(&self) -> usize {
        self.a
    }

    pub fn hi(&self) -> usize {
        self.b
    }

    pub fn width(&self) -> usize {
        self.b - self.a + 1
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.a, self.b)
    }
}

/// STL abstract syntax tree. Derived operators keep their own node kinds.
#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    True,
    Predicate(Arc<Predicate>),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Always(Interval, Box<Formula>),
}

impl Formula {
    pub fn pred(p: Arc<Predicate>) -> Self {
        Formula::Predicate(p)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(phi: Formula) -> Self {
        Formula::Not(Box::new(phi))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn until(i: Interval, a: Formula, b: Formula) -> Self {
        Formula::Until(i, Box::new(a), Box::new(b))
    }

    pub fn eventually(i: Interval, phi: Formula) -> Self {
        Formula::Eventually(i, Box::new(phi))
    }

    pub fn always(i: Interval, phi: Formula) -> Self {
        Formula::Always(i, Box::new(phi))
    }

    /// Left-folded conjunction; `True` when empty.
    pub fn all(parts: impl IntoIterator<Item = Formula>) -> Self {
        parts.into_iter().reduce(Formula::and).unwrap_or(Formula::True)
    }

    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::True | Formula::Predicate(_) => vec![],
            Formula::Not(c) | Formula::Eventually(_, c) | Formula::Always(_, c) => vec![c],
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Until(_, a, b) => vec![a, b],
        }
    }

    /// Predicates referenced by the formula, in first-occurrence order.
    pub fn predicates(&self) -> Vec<Arc<Predicate>> {
        fn walk(f: &Formula, out: &mut Vec<Arc<Predicate>>) {
            if let Formula::Predicate(p) = f {
                if !out.iter().any(|q| q.name == p.name) {
                    out.push(p.clone());
                }
            }
            for c in f.children() {
                walk(c, out);
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    /// Checks that every predicate only reads indices below `dim`.
    pub fn check_dimension(&self, dim: usize) -> StlResult<()> {
        for p in self.predicates() {
            if let Some(&index) = p.reads().iter().find(|&&i| i >= dim) {
                return Err(StlError::PredicateIndex { name: p.name.clone(), index, dim });
            }
        }
        Ok(())
    }

    fn is_atomic(&self) -> bool {
        matches!(self, Formula::True | Formula::Predicate(_))
    }

    fn is_prefix(&self) -> bool {
        matches!(self, Formula::Not(_) | Formula::Eventually(..) | Formula::Always(..))
    }
}

struct Operand<'a>(&'a Formula);

impl fmt::Display for Operand<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_atomic() || self.0.is_prefix() {
            write!(f, "{}", self.0)
        } else {
            write!(f, "({})", self.0)
        }
    }
}

/// Canonical text form; `parse_formula` of the output yields the same tree.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Predicate(p) => write!(f, "{}", p.name),
            Formula::Not(c) => write!(f, "!({c})"),
            Formula::And(a, b) => write!(f, "{} & {}", Operand(a), Operand(b)),
            Formula::Or(a, b) => write!(f, "{} | {}", Operand(a), Operand(b)),
            Formula::Implies(a, b) => write!(f, "{} -> {}", Operand(a), Operand(b)),
            Formula::Until(i, a, b) => write!(f, "{} U{i} {}", Operand(a), Operand(b)),
            Formula::Eventually(i, c) => write!(f, "F{i}({c})"),
            Formula::Always(i, c) => write!(f, "G{i}({c})"),
        }
    }
}

/// Finite sequence of joint state vectors `s_0 .. s_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    states: Vec<Vec<f64>>,
    dt: f64,
}

impl Trace {
    pub fn new(states: Vec<Vec<f64>>, dt: f64) -> StlResult<Self> {
        if let Some(first) = states.first() {
            let n = first.len();
            if let Some(bad) = states.iter().find(|s| s.len() != n) {
                return Err(StlError::Dimension { expected: n, found: bad.len() });
            }
        }
        Ok(Self { states, dt })
    }

    /// Trace of one-dimensional states, handy for scalar signals.
    pub fn scalar(values: &[f64]) -> Self {
        Self { states: values.iter().map(|&v| vec![v]).collect(), dt: 1.0 }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k]
    }
}

pub(crate) fn check_length(phi: &Formula, len: usize, k: usize) -> StlResult<usize> {
    let h = horizon(phi);
    let needed = k + h + 1;
    if len < needed {
        return Err(StlError::TraceTooShort { k, horizon: h, needed, available: len });
    }
    Ok(h)
}
