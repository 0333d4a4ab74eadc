use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{StlError, StlResult};
use crate::autodiff::{AdResult, Tape, Tensor};

/// Real-valued function `mu` of a state vector; the predicate holds where `mu >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredicateKind {
    /// `sum_j coeffs[j] * s[indices[j]] + offset`.
    Affine { indices: Vec<usize>, coeffs: Vec<f64>, offset: f64 },
    /// `radius - |q - center|` with `q = s[indices]`: positive inside the ball.
    Ball { indices: Vec<usize>, center: Vec<f64>, radius: f64 },
    /// Signed Euclidean distance to the boundary of an axis-aligned box, positive inside.
    Box { indices: Vec<usize>, lo: Vec<f64>, hi: Vec<f64> },
    /// `|s[a] - s[b]|^2 - d_min^2`.
    SeparationSq { a: Vec<usize>, b: Vec<usize>, d_min: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub name: String,
    #[serde(flatten)]
    pub kind: PredicateKind,
}

impl Predicate {
    pub fn new(name: impl Into<String>, kind: PredicateKind) -> StlResult<Self> {
        let p = Self { name: name.into(), kind };
        p.validate()?;
        Ok(p)
    }

    /// Convenience: `coeff * s[index] + offset`.
    pub fn affine1(name: impl Into<String>, index: usize, coeff: f64, offset: f64) -> StlResult<Self> {
        Self::new(name, PredicateKind::Affine { indices: vec![index], coeffs: vec![coeff], offset })
    }

    fn invalid(&self, message: impl Into<String>) -> StlError {
        StlError::InvalidPredicate { name: self.name.clone(), message: message.into() }
    }

    pub fn validate(&self) -> StlResult<()> {
        match &self.kind {
            PredicateKind::Affine { indices, coeffs, offset } => {
                if indices.len() != coeffs.len() {
                    return Err(self.invalid("indices and coeffs differ in length"));
                }
                if !offset.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(self.invalid("non-finite coefficient"));
                }
            }
            PredicateKind::Ball { indices, center, radius } => {
                if indices.is_empty() || indices.len() != center.len() {
                    return Err(self.invalid("indices and center differ in length"));
                }
                if !(*radius > 0.0) {
                    return Err(self.invalid("radius must be positive"));
                }
            }
            PredicateKind::Box { indices, lo, hi } => {
                if indices.is_empty() || indices.len() != lo.len() || indices.len() != hi.len() {
                    return Err(self.invalid("indices, lo and hi differ in length"));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
                    return Err(self.invalid("box requires lo < hi on every axis"));
                }
            }
            PredicateKind::SeparationSq { a, b, d_min } => {
                if a.is_empty() || a.len() != b.len() {
                    return Err(self.invalid("position slices differ in length"));
                }
                if !(*d_min >= 0.0) {
                    return Err(self.invalid("d_min must be non-negative"));
                }
            }
        }
        Ok(())
    }

    /// State indices the predicate reads.
    pub fn reads(&self) -> Vec<usize> {
        match &self.kind {
            PredicateKind::Affine { indices, .. }
            | PredicateKind::Ball { indices, .. }
            | PredicateKind::Box { indices, .. } => indices.clone(),
            PredicateKind::SeparationSq { a, b, .. } => a.iter().chain(b).copied().collect(),
        }
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        match &self.kind {
            PredicateKind::Affine { indices, coeffs, offset } => {
                indices.iter().zip(coeffs).map(|(&i, c)| c * s[i]).sum::<f64>() + offset
            }
            PredicateKind::Ball { indices, center, radius } => {
                let d2: f64 = indices.iter().zip(center).map(|(&i, c)| (s[i] - c).powi(2)).sum();
                radius - d2.sqrt()
            }
            PredicateKind::Box { indices, lo, hi } => {
                let margins: Vec<f64> =
                    indices.iter().enumerate().map(|(j, &i)| (s[i] - lo[j]).min(hi[j] - s[i])).collect();
                if margins.iter().all(|&m| m >= 0.0) {
                    margins.into_iter().fold(f64::INFINITY, f64::min)
                } else {
                    -margins.iter().map(|&m| m.min(0.0).powi(2)).sum::<f64>().sqrt()
                }
            }
            PredicateKind::SeparationSq { a, b, d_min } => {
                let d2: f64 = a.iter().zip(b).map(|(&i, &j)| (s[i] - s[j]).powi(2)).sum();
                d2 - d_min * d_min
            }
        }
    }

    /// Records `mu(s)` for a state vector held on the tape.
    pub fn eval_tape(&self, tape: &mut Tape, s: Tensor) -> AdResult<Tensor> {
        match &self.kind {
            PredicateKind::Affine { indices, coeffs, offset } => {
                let q = gather(tape, s, indices)?;
                let c = tape.constant(coeffs)?;
                let d = tape.dot(q, c)?;
                tape.shift(d, *offset)
            }
            PredicateKind::Ball { indices, center, radius } => {
                let q = gather(tape, s, indices)?;
                let c = tape.constant(center)?;
                let d = tape.sub(q, c)?;
                let d2 = tape.dot(d, d)?;
                let n = tape.sqrt(d2)?;
                let neg = tape.neg(n)?;
                tape.shift(neg, *radius)
            }
            PredicateKind::Box { indices, lo, hi } => {
                let q = gather(tape, s, indices)?;
                let lo_t = tape.constant(lo)?;
                let hi_t = tape.constant(hi)?;
                let above = tape.sub(q, lo_t)?;
                let below = tape.sub(hi_t, q)?;
                let m = tape.minimum(above, below)?;
                let inside = tape.value(m)?.iter().all(|&v| v >= 0.0);
                if inside {
                    let mut best = tape.index(m, 0)?;
                    for j in 1..indices.len() {
                        let mj = tape.index(m, j)?;
                        best = tape.minimum(best, mj)?;
                    }
                    Ok(best)
                } else {
                    let zero = tape.constant_scalar(0.0)?;
                    let v = tape.minimum(m, zero)?;
                    let v2 = tape.dot(v, v)?;
                    let n = tape.sqrt(v2)?;
                    tape.neg(n)
                }
            }
            PredicateKind::SeparationSq { a, b, d_min } => {
                let qa = gather(tape, s, a)?;
                let qb = gather(tape, s, b)?;
                let d = tape.sub(qa, qb)?;
                let d2 = tape.dot(d, d)?;
                tape.shift(d2, -d_min * d_min)
            }
        }
    }
}

/// Selects `indices` from a tape vector, as a slice when contiguous.
fn gather(tape: &mut Tape, s: Tensor, indices: &[usize]) -> AdResult<Tensor> {
    let contiguous = indices.windows(2).all(|w| w[1] == w[0] + 1);
    if contiguous && !indices.is_empty() {
        tape.slice(s, indices[0], indices.len())
    } else {
        let parts = indices.iter().map(|&i| tape.index(s, i)).collect::<AdResult<Vec<_>>>()?;
        tape.concat(&parts)
    }
}

/// Named predicates available to the parser.
#[derive(Clone, Debug, Default)]
pub struct PredicateTable {
    map: BTreeMap<String, Arc<Predicate>>,
}

impl PredicateTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, p: Predicate) -> Arc<Predicate> {
        let p = Arc::new(p);
        self.map.insert(p.name.clone(), p.clone());
        p
    }

    pub fn get(&self, name: &str) -> Option<Arc<Predicate>> {
        self.map.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl FromIterator<Predicate> for PredicateTable {
    fn from_iter<I: IntoIterator<Item = Predicate>>(iter: I) -> Self {
        let mut t = Self::new();
        for p in iter {
            t.insert(p);
        }
        t
    }
}
