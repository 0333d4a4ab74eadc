//! Reverse-mode automatic differentiation over scalars and small dense vectors.
//!
//! Every operation is evaluated eagerly and appended to a [`Tape`]. Entries are
//! stored in a flat value buffer, so a recorded program is a straight-line
//! sequence whose parents always precede their children. [`Tape::backward`]
//! walks that sequence once in reverse.
//!
//! Handles ([`Tensor`]) are plain `Copy` indices. They carry the tape identity and
//! the tape generation; using a handle after [`Tape::reset`] is reported as
//! [`AdError::Stale`].

use std::sync::atomic::{AtomicU32, Ordering};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("domain error in `{op}`: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("non-finite value produced by `{op}` at tape entry {index}")]
    NonFinite { op: &'static str, index: usize },
    #[error("shape mismatch in `{op}`: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("stale tensor: recorded in generation {found}, tape is at generation {current}")]
    Stale { found: u32, current: u32 },
    #[error("tensor belongs to a different tape")]
    ForeignTape,
}

pub type AdResult<T> = Result<T, AdError>;

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to one tape entry: a dense vector of `len` values (a scalar when `len == 1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tensor {
    index: u32,
    len: u32,
    tape: u32,
    generation: u32,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_scalar(&self) -> bool {
        self.len == 1
    }

    /// Position of this entry on its tape.
    pub fn entry(&self) -> usize {
        self.index as usize
    }
}

/// A scalar is a length-one tensor.
pub type TapeScalar = Tensor;

#[derive(Clone, Debug)]
enum Op {
    Const,
    Var,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Shift(usize),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Sigmoid(usize),
    Powf(usize, f64),
    Sqrt(usize),
    Sin(usize),
    Cos(usize),
    Tan(usize),
    Clamp(usize, f64, f64),
    Max(usize, usize),
    Min(usize, usize),
    Sum(usize),
    Dot(usize, usize),
    MatVec { matrix: usize, vector: usize, rows: usize, cols: usize },
    Index(usize, usize),
    Slice(usize, usize),
    Concat(Vec<usize>),
    /// `c * ln(sum_i exp(x_i / c))` over scalar parents. `c = 1` is plain
    /// log-sum-exp, `c = tau` a soft maximum and `c = -tau` a soft minimum.
    LogSumExp { parents: Vec<usize>, scale: f64 },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Const => "const",
            Op::Var => "var",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::Shift(..) => "shift",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Powf(..) => "pow",
            Op::Sqrt(..) => "sqrt",
            Op::Sin(..) => "sin",
            Op::Cos(..) => "cos",
            Op::Tan(..) => "tan",
            Op::Clamp(..) => "clamp",
            Op::Max(..) => "max",
            Op::Min(..) => "min",
            Op::Sum(..) => "sum",
            Op::Dot(..) => "dot",
            Op::MatVec { .. } => "matvec",
            Op::Index(..) => "index",
            Op::Slice(..) => "slice",
            Op::Concat(..) => "concat",
            Op::LogSumExp { .. } => "logsumexp",
        }
    }
}

#[derive(Clone, Debug)]
struct Entry {
    op: Op,
    offset: usize,
    len: usize,
}

/// Append-only record of a differentiable program.
#[derive(Debug)]
pub struct Tape {
    id: u32,
    generation: u32,
    entries: Vec<Entry>,
    values: Vec<f64>,
    vars: Vec<usize>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Broadcast rule for binary element-wise ops: equal lengths, or one side scalar.
fn broadcast_len(op: &'static str, a: usize, b: usize) -> AdResult<usize> {
    if a == b || b == 1 {
        Ok(a)
    } else if a == 1 {
        Ok(b)
    } else {
        Err(AdError::Shape { op, detail: format!("lengths {a} and {b} do not broadcast") })
    }
}

#[inline]
fn bidx(len: usize, i: usize) -> usize {
    if len == 1 {
        0
    } else {
        i
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
            entries: Vec::new(),
            values: Vec::new(),
            vars: Vec::new(),
        }
    }

    /// Clears the tape for reuse. Handles recorded before the reset become stale.
    pub fn reset(&mut self) {
        self.entries.clear();
        self.values.clear();
        self.vars.clear();
        self.generation = self.generation.wrapping_add(1);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    fn check(&self, t: Tensor) -> AdResult<usize> {
        if t.tape != self.id {
            return Err(AdError::ForeignTape);
        }
        if t.generation != self.generation {
            return Err(AdError::Stale { found: t.generation, current: self.generation });
        }
        Ok(t.index as usize)
    }

    fn span(&self, entry: usize) -> (usize, usize) {
        let e = &self.entries[entry];
        (e.offset, e.len)
    }

    pub fn value(&self, t: Tensor) -> AdResult<&[f64]> {
        let i = self.check(t)?;
        let (o, l) = self.span(i);
        Ok(&self.values[o..o + l])
    }

    /// Value of a scalar handle. Panics on a stale handle; use [`Tape::value`] to check.
    pub fn scalar(&self, t: Tensor) -> f64 {
        self.value(t).expect("valid tensor handle")[0]
    }

    /// Appends an entry of `len` values, filling them with `fill(previous_values, out)`.
    fn push<F>(&mut self, op: Op, len: usize, fill: F) -> AdResult<Tensor>
    where
        F: FnOnce(&[f64], &mut [f64]),
    {
        let offset = self.values.len();
        self.values.resize(offset + len, 0.0);
        {
            let (prev, out) = self.values.split_at_mut(offset);
            fill(prev, out);
        }
        let index = self.entries.len();
        if self.values[offset..].iter().any(|v| !v.is_finite()) {
            self.values.truncate(offset);
            return Err(AdError::NonFinite { op: op.name(), index });
        }
        self.entries.push(Entry { op, offset, len });
        Ok(Tensor { index: index as u32, len: len as u32, tape: self.id, generation: self.generation })
    }

    pub fn constant(&mut self, values: &[f64]) -> AdResult<Tensor> {
        self.push(Op::Const, values.len(), |_, out| out.copy_from_slice(values))
    }

    pub fn constant_scalar(&mut self, value: f64) -> AdResult<Tensor> {
        self.constant(&[value])
    }

    /// Records a differentiable input. Gradients are reported per variable in creation order.
    pub fn var(&mut self, values: &[f64]) -> AdResult<Tensor> {
        let t = self.push(Op::Var, values.len(), |_, out| out.copy_from_slice(values))?;
        self.vars.push(t.index as usize);
        Ok(t)
    }

    pub fn var_scalar(&mut self, value: f64) -> AdResult<Tensor> {
        self.var(&[value])
    }

    fn binary(
        &mut self,
        a: Tensor,
        b: Tensor,
        make: fn(usize, usize) -> Op,
        f: fn(f64, f64) -> f64,
    ) -> AdResult<Tensor> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let op = make(ia, ib);
        let len = broadcast_len(op.name(), a.len(), b.len())?;
        let (oa, la) = self.span(ia);
        let (ob, lb) = self.span(ib);
        self.push(op, len, |prev, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = f(prev[oa + bidx(la, i)], prev[ob + bidx(lb, i)]);
            }
        })
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> AdResult<Tensor> {
        self.binary(a, b, Op::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> AdResult<Tensor> {
        self.binary(a, b, Op::Sub, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> AdResult<Tensor> {
        self.binary(a, b, Op::Mul, |x, y| x * y)
    }

    pub fn div(&mut self, a: Tensor, b: Tensor) -> AdResult<Tensor> {
        let ib = self.check(b)?;
        let (ob, lb) = self.span(ib);
        if self.values[ob..ob + lb].contains(&0.0) {
            return Err(AdError::Domain { op: "div", detail: "division by zero".into() });
        }
        self.binary(a, b, Op::Div, |x, y| x / y)
    }

    /// Element-wise maximum; the gradient goes to the larger argument (the first on ties).
    pub fn maximum(&mut self, a: Tensor, b: Tensor) -> AdResult<Tensor> {
        self.binary(a, b, Op::Max, f64::max)
    }

    /// Element-wise minimum; the gradient goes to the smaller argument (the first on ties).
    pub fn minimum(&mut self, a: Tensor, b: Tensor) -> AdResult<Tensor> {
        self.binary(a, b, Op::Min, f64::min)
    }

    fn unary(&mut self, a: Tensor, op: Op, f: impl Fn(f64) -> f64) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        let (oa, la) = self.span(ia);
        self.push(op, la, |prev, out| {
            for (o, &x) in out.iter_mut().zip(&prev[oa..oa + la]) {
                *o = f(x);
            }
        })
    }

    pub fn neg(&mut self, a: Tensor) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        self.unary(a, Op::Neg(ia), |x| -x)
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, a: Tensor, c: f64) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        self.unary(a, Op::Scale(ia, c), |x| c * x)
    }

    /// Adds a constant.
    pub fn shift(&mut self, a: Tensor, c: f64) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        self.unary(a, Op::Shift(ia), |x| x + c)
    }

    pub fn exp(&mut self, a: Tensor) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        self.unary(a, Op::Exp(ia), f64::exp)
    }

    pub fn log(&mut self, a: Tensor) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        if self.value(a)?.iter().any(|&v| v <= 0.0) {
            return Err(AdError::Domain { op: "log", detail: "non-positive argument".into() });
        }
        self.unary(a, Op::Log(ia), f64::ln)
    }

    pub fn tanh(&mut self, a: Tensor) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        self.unary(a, Op::Tanh(ia), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Tensor) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        self.unary(a, Op::Sigmoid(ia), sigmoid)
    }

    /// `a^p` for a constant exponent. Non-integer exponents require a non-negative base.
    pub fn powf(&mut self, a: Tensor, p: f64) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        if p.fract() != 0.0 && self.value(a)?.iter().any(|&v| v < 0.0) {
            return Err(AdError::Domain { op: "pow", detail: "negative base with fractional exponent".into() });
        }
        self.unary(a, Op::Powf(ia, p), |x| x.powf(p))
    }

    /// Square root with derivative 0 at the origin (subgradient convention).
    pub fn sqrt(&mut self, a: Tensor) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        if self.value(a)?.iter().any(|&v| v < 0.0) {
            return Err(AdError::Domain { op: "sqrt", detail: "negative argument".into() });
        }
        self.unary(a, Op::Sqrt(ia), f64::sqrt)
    }

    pub fn sin(&mut self, a: Tensor) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        self.unary(a, Op::Sin(ia), f64::sin)
    }

    pub fn cos(&mut self, a: Tensor) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        self.unary(a, Op::Cos(ia), f64::cos)
    }

    pub fn tan(&mut self, a: Tensor) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        self.unary(a, Op::Tan(ia), f64::tan)
    }

    /// Saturation to `[lo, hi]`; zero gradient where the bound is active.
    pub fn clamp(&mut self, a: Tensor, lo: f64, hi: f64) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        if lo > hi {
            return Err(AdError::Domain { op: "clamp", detail: format!("empty interval [{lo}, {hi}]") });
        }
        self.unary(a, Op::Clamp(ia, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn sum(&mut self, a: Tensor) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        let (oa, la) = self.span(ia);
        self.push(Op::Sum(ia), 1, |prev, out| out[0] = prev[oa..oa + la].iter().sum())
    }

    pub fn dot(&mut self, a: Tensor, b: Tensor) -> AdResult<Tensor> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        if a.len() != b.len() {
            return Err(AdError::Shape { op: "dot", detail: format!("lengths {} and {}", a.len(), b.len()) });
        }
        let (oa, la) = self.span(ia);
        let (ob, _) = self.span(ib);
        self.push(Op::Dot(ia, ib), 1, |prev, out| {
            out[0] = prev[oa..oa + la].iter().zip(&prev[ob..ob + la]).map(|(x, y)| x * y).sum();
        })
    }

    /// Row-major `rows x cols` matrix times a vector of length `cols`.
    pub fn matvec(&mut self, matrix: Tensor, vector: Tensor, rows: usize, cols: usize) -> AdResult<Tensor> {
        let (im, iv) = (self.check(matrix)?, self.check(vector)?);
        if matrix.len() != rows * cols || vector.len() != cols {
            return Err(AdError::Shape {
                op: "matvec",
                detail: format!("matrix {} for {rows}x{cols}, vector {}", matrix.len(), vector.len()),
            });
        }
        let (om, _) = self.span(im);
        let (ov, _) = self.span(iv);
        self.push(Op::MatVec { matrix: im, vector: iv, rows, cols }, rows, |prev, out| {
            let x = &prev[ov..ov + cols];
            for (r, o) in out.iter_mut().enumerate() {
                let row = &prev[om + r * cols..om + (r + 1) * cols];
                *o = row.iter().zip(x).map(|(w, v)| w * v).sum();
            }
        })
    }

    pub fn index(&mut self, a: Tensor, i: usize) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        if i >= a.len() {
            return Err(AdError::Shape { op: "index", detail: format!("index {i} out of {}", a.len()) });
        }
        let (oa, _) = self.span(ia);
        self.push(Op::Index(ia, i), 1, |prev, out| out[0] = prev[oa + i])
    }

    pub fn slice(&mut self, a: Tensor, start: usize, len: usize) -> AdResult<Tensor> {
        let ia = self.check(a)?;
        if start + len > a.len() {
            return Err(AdError::Shape { op: "slice", detail: format!("{start}..{} out of {}", start + len, a.len()) });
        }
        let (oa, _) = self.span(ia);
        self.push(Op::Slice(ia, start), len, |prev, out| out.copy_from_slice(&prev[oa + start..oa + start + len]))
    }

    pub fn concat(&mut self, parts: &[Tensor]) -> AdResult<Tensor> {
        let mut idx = Vec::with_capacity(parts.len());
        let mut spans = Vec::with_capacity(parts.len());
        for &p in parts {
            let i = self.check(p)?;
            idx.push(i);
            spans.push(self.span(i));
        }
        let len = spans.iter().map(|s| s.1).sum();
        self.push(Op::Concat(idx), len, |prev, out| {
            let mut at = 0;
            for &(o, l) in &spans {
                out[at..at + l].copy_from_slice(&prev[o..o + l]);
                at += l;
            }
        })
    }

    fn lse(&mut self, xs: &[Tensor], scale: f64) -> AdResult<Tensor> {
        if xs.is_empty() {
            return Err(AdError::Shape { op: "logsumexp", detail: "no arguments".into() });
        }
        let mut parents = Vec::with_capacity(xs.len());
        let mut offs = Vec::with_capacity(xs.len());
        for &x in xs {
            let i = self.check(x)?;
            if !x.is_scalar() {
                return Err(AdError::Shape { op: "logsumexp", detail: "arguments must be scalars".into() });
            }
            parents.push(i);
            offs.push(self.span(i).0);
        }
        self.push(Op::LogSumExp { parents, scale }, 1, |prev, out| {
            out[0] = scaled_logsumexp(offs.iter().map(|&o| prev[o]), scale);
        })
    }

    /// Overflow-safe `ln(sum_i exp(x_i))` over scalar arguments.
    pub fn logsumexp(&mut self, xs: &[Tensor]) -> AdResult<Tensor> {
        self.lse(xs, 1.0)
    }

    /// `tau * ln(sum_i exp(x_i / tau))`, an upper approximation of the maximum.
    pub fn softmax(&mut self, xs: &[Tensor], tau: f64) -> AdResult<Tensor> {
        check_temperature(tau)?;
        self.lse(xs, tau)
    }

    /// `-tau * ln(sum_i exp(-x_i / tau))`, a lower approximation of the minimum.
    pub fn softmin(&mut self, xs: &[Tensor], tau: f64) -> AdResult<Tensor> {
        check_temperature(tau)?;
        self.lse(xs, -tau)
    }

    /// Reverse sweep seeded with 1.0 at the scalar `output`.
    pub fn backward(&self, output: Tensor) -> AdResult<Gradients<'_>> {
        let out = self.check(output)?;
        if !output.is_scalar() {
            return Err(AdError::Shape { op: "backward", detail: "output must be a scalar".into() });
        }
        let mut adj = vec![0.0; self.values.len()];
        adj[self.entries[out].offset] = 1.0;
        let vals = &self.values;
        for j in (0..=out).rev() {
            let e = &self.entries[j];
            let (prev, cur) = adj.split_at_mut(e.offset);
            let g = &cur[..e.len];
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            let y = &vals[e.offset..e.offset + e.len];
            let sp = |i: usize| {
                let p = &self.entries[i];
                (p.offset, p.len)
            };
            match &e.op {
                Op::Const | Op::Var => {}
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(e.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    let (oa, la) = sp(*a);
                    let (ob, lb) = sp(*b);
                    for (i, &gi) in g.iter().enumerate() {
                        prev[oa + bidx(la, i)] += gi;
                        prev[ob + bidx(lb, i)] += sign * gi;
                    }
                }
                Op::Mul(a, b) => {
                    let (oa, la) = sp(*a);
                    let (ob, lb) = sp(*b);
                    for (i, &gi) in g.iter().enumerate() {
                        let (xa, xb) = (vals[oa + bidx(la, i)], vals[ob + bidx(lb, i)]);
                        prev[oa + bidx(la, i)] += gi * xb;
                        prev[ob + bidx(lb, i)] += gi * xa;
                    }
                }
                Op::Div(a, b) => {
                    let (oa, la) = sp(*a);
                    let (ob, lb) = sp(*b);
                    for (i, &gi) in g.iter().enumerate() {
                        let xb = vals[ob + bidx(lb, i)];
                        prev[oa + bidx(la, i)] += gi / xb;
                        prev[ob + bidx(lb, i)] -= gi * y[i] / xb;
                    }
                }
                Op::Max(a, b) | Op::Min(a, b) => {
                    let is_max = matches!(e.op, Op::Max(..));
                    let (oa, la) = sp(*a);
                    let (ob, lb) = sp(*b);
                    for (i, &gi) in g.iter().enumerate() {
                        let (xa, xb) = (vals[oa + bidx(la, i)], vals[ob + bidx(lb, i)]);
                        let first = if is_max { xa >= xb } else { xa <= xb };
                        if first {
                            prev[oa + bidx(la, i)] += gi;
                        } else {
                            prev[ob + bidx(lb, i)] += gi;
                        }
                    }
                }
                Op::Neg(a) | Op::Scale(a, _) | Op::Shift(a) => {
                    let c = match e.op {
                        Op::Neg(_) => -1.0,
                        Op::Scale(_, c) => c,
                        _ => 1.0,
                    };
                    let (oa, _) = sp(*a);
                    for (i, &gi) in g.iter().enumerate() {
                        prev[oa + i] += c * gi;
                    }
                }
                Op::Exp(a) => unary_back(prev, sp(*a).0, g, |i| y[i]),
                Op::Log(a) => {
                    let oa = sp(*a).0;
                    unary_back(prev, oa, g, |i| 1.0 / vals[oa + i])
                }
                Op::Tanh(a) => unary_back(prev, sp(*a).0, g, |i| 1.0 - y[i] * y[i]),
                Op::Sigmoid(a) => unary_back(prev, sp(*a).0, g, |i| y[i] * (1.0 - y[i])),
                Op::Powf(a, p) => {
                    let oa = sp(*a).0;
                    let p = *p;
                    unary_back(prev, oa, g, |i| if p == 0.0 { 0.0 } else { p * vals[oa + i].powf(p - 1.0) })
                }
                Op::Sqrt(a) => unary_back(prev, sp(*a).0, g, |i| if y[i] > 0.0 { 0.5 / y[i] } else { 0.0 }),
                Op::Sin(a) => {
                    let oa = sp(*a).0;
                    unary_back(prev, oa, g, |i| vals[oa + i].cos())
                }
                Op::Cos(a) => {
                    let oa = sp(*a).0;
                    unary_back(prev, oa, g, |i| -vals[oa + i].sin())
                }
                Op::Tan(a) => unary_back(prev, sp(*a).0, g, |i| 1.0 + y[i] * y[i]),
                Op::Clamp(a, lo, hi) => {
                    let oa = sp(*a).0;
                    unary_back(prev, oa, g, |i| {
                        let x = vals[oa + i];
                        if x < *lo || x > *hi {
                            0.0
                        } else {
                            1.0
                        }
                    })
                }
                Op::Sum(a) => {
                    let (oa, la) = sp(*a);
                    for v in &mut prev[oa..oa + la] {
                        *v += g[0];
                    }
                }
                Op::Dot(a, b) => {
                    let (oa, la) = sp(*a);
                    let (ob, _) = sp(*b);
                    for i in 0..la {
                        let (xa, xb) = (vals[oa + i], vals[ob + i]);
                        prev[oa + i] += g[0] * xb;
                        prev[ob + i] += g[0] * xa;
                    }
                }
                Op::MatVec { matrix, vector, rows, cols } => {
                    let (om, _) = sp(*matrix);
                    let (ov, _) = sp(*vector);
                    let (rows, cols) = (*rows, *cols);
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let base = om + r * cols;
                        for c in 0..cols {
                            prev[base + c] += gr * vals[ov + c];
                        }
                        for c in 0..cols {
                            prev[ov + c] += gr * vals[base + c];
                        }
                    }
                }
                Op::Index(a, i) => prev[sp(*a).0 + i] += g[0],
                Op::Slice(a, start) => {
                    let oa = sp(*a).0 + start;
                    for (i, &gi) in g.iter().enumerate() {
                        prev[oa + i] += gi;
                    }
                }
                Op::Concat(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let (op, lp) = sp(p);
                        for i in 0..lp {
                            prev[op + i] += g[at + i];
                        }
                        at += lp;
                    }
                }
                Op::LogSumExp { parents, scale } => {
                    // d/dx_i = exp((x_i - y) / c), the normalised weights.
                    for &p in parents {
                        let op = sp(p).0;
                        prev[op] += g[0] * ((vals[op] - y[0]) / scale).exp();
                    }
                }
            }
        }
        Ok(Gradients { tape: self, adjoint: adj })
    }
}

fn unary_back(prev: &mut [f64], offset: usize, g: &[f64], deriv: impl Fn(usize) -> f64) {
    for (i, &gi) in g.iter().enumerate() {
        prev[offset + i] += gi * deriv(i);
    }
}

fn check_temperature(tau: f64) -> AdResult<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(AdError::Domain { op: "logsumexp", detail: format!("temperature must be positive, got {tau}") })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c * ln(sum_i exp(x_i / c))` with the max-shift trick. `c` may be negative.
pub fn scaled_logsumexp(xs: impl Iterator<Item = f64> + Clone, c: f64) -> f64 {
    let m = xs.clone().map(|x| x / c).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m * c.signum();
    }
    let s: f64 = xs.map(|x| (x / c - m).exp()).sum();
    c * (m + s.ln())
}

/// Plain-arithmetic soft maximum, `tau * ln(sum exp(x / tau))`.
pub fn softmax_value(xs: &[f64], tau: f64) -> f64 {
    scaled_logsumexp(xs.iter().copied(), tau)
}

/// Plain-arithmetic soft minimum, `-tau * ln(sum exp(-x / tau))`.
pub fn softmin_value(xs: &[f64], tau: f64) -> f64 {
    scaled_logsumexp(xs.iter().copied(), -tau)
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients<'a> {
    tape: &'a Tape,
    adjoint: Vec<f64>,
}

impl Gradients<'_> {
    /// Gradient of the output with respect to any recorded tensor.
    pub fn wrt(&self, t: Tensor) -> AdResult<&[f64]> {
        let i = self.tape.check(t)?;
        let (o, l) = self.tape.span(i);
        Ok(&self.adjoint[o..o + l])
    }

    /// Gradients of every `var` entry, concatenated in creation order.
    pub fn vars(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for &v in &self.tape.vars {
            let (o, l) = self.tape.span(v);
            out.extend_from_slice(&self.adjoint[o..o + l]);
        }
        out
    }
}

/// Result of comparing reverse-mode gradients with central finite differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Checks `f` at `point`. `f` receives a fresh tape and a single vector variable
/// holding the point, and must return a scalar.
pub fn grad_check<F>(f: F, point: &[f64], eps: f64) -> AdResult<GradCheck>
where
    F: Fn(&mut Tape, Tensor) -> AdResult<Tensor>,
{
    let mut tape = Tape::new();
    let x = tape.var(point)?;
    let y = f(&mut tape, x)?;
    let analytic = tape.backward(y)?.wrt(x)?.to_vec();

    let eval = |p: &[f64]| -> AdResult<f64> {
        let mut t = Tape::new();
        let x = t.var(p)?;
        let y = f(&mut t, x)?;
        Ok(t.scalar(y))
    };
    let mut numeric = Vec::with_capacity(point.len());
    let mut p = point.to_vec();
    for i in 0..point.len() {
        p[i] = point[i] + eps;
        let hi = eval(&p)?;
        p[i] = point[i] - eps;
        let lo = eval(&p)?;
        p[i] = point[i];
        numeric.push((hi - lo) / (2.0 * eps));
    }
    let max_rel_error = relative_error(&analytic, &numeric);
    Ok(GradCheck { max_rel_error, analytic, numeric })
}

/// Max over coordinates of `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}
