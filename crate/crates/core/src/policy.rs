//! Recurrent (LSTM) policies and finitely supported mixtures of them.
//!
//! A policy maps the observation history to an action: each step feeds one
//! observation through a single LSTM layer and a linear head squashed by
//! `tanh` and scaled to the action bounds. Gate order is input, forget,
//! cell, output.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{sigmoid, AdError, AdResult, Tape, Tensor};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("layer sizes must be positive: obs {obs}, hidden {hidden}, action {action}")]
    ZeroSize { obs: usize, hidden: usize, action: usize },
    #[error("expected {what} of dimension {expected}, got {found}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("invalid policy: {0}")]
    Invalid(String),
    #[error("invalid mixture: {0}")]
    Mixture(String),
    #[error("empty mixture")]
    EmptyMixture,
    #[error("policy file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("policy file {path}: {source}")]
    Format { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Autodiff(#[from] AdError),
}

pub type PolicyResult<T> = Result<T, PolicyError>;

pub const POLICY_FORMAT: &str = "stlgame-policy";
pub const MIXTURE_FORMAT: &str = "stlgame-mixture";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub obs_dim: usize,
    pub hidden: usize,
    pub act_dim: usize,
}

impl PolicyShape {
    /// `4H(I + H + 1) + A(H + 1)`.
    pub fn num_params(&self) -> usize {
        let (i, h, a) = (self.obs_dim, self.hidden, self.act_dim);
        4 * h * (i + h + 1) + a * (h + 1)
    }
}

/// Weights of one LSTM policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub shape: PolicyShape,
    pub action_bounds: Vec<f64>,
    /// `4H x I`, row-major.
    pub w_ih: Vec<f64>,
    /// `4H x H`, row-major.
    pub w_hh: Vec<f64>,
    /// `4H`.
    pub bias: Vec<f64>,
    /// `A x H`, row-major.
    pub w_out: Vec<f64>,
    /// `A`.
    pub b_out: Vec<f64>,
}

/// Recurrent state carried between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Policy weights recorded on a tape, as variables (trainable) or constants.
#[derive(Clone, Copy, Debug)]
pub struct TapePolicy {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
    pub w_out: Tensor,
    pub b_out: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct TapeHidden {
    pub h: Tensor,
    pub c: Tensor,
}

fn matvec(m: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    (0..rows).map(|r| m[r * cols..(r + 1) * cols].iter().zip(x).map(|(w, v)| w * v).sum()).collect()
}

/// Builds a randomly initialised policy: weights uniform in `+-1/sqrt(H)`, forget-gate bias 1.
pub fn init_policy(shape: PolicyShape, action_bounds: &[f64], seed: u64) -> PolicyResult<PolicyParams> {
    if shape.obs_dim == 0 || shape.hidden == 0 || shape.act_dim == 0 {
        return Err(PolicyError::ZeroSize { obs: shape.obs_dim, hidden: shape.hidden, action: shape.act_dim });
    }
    if action_bounds.len() != shape.act_dim {
        return Err(PolicyError::Dimension { what: "action bounds", expected: shape.act_dim, found: action_bounds.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (i, h, a) = (shape.obs_dim, shape.hidden, shape.act_dim);
    let k = 1.0 / (h as f64).sqrt();
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-k..k)).collect() };
    let w_ih = draw(4 * h * i);
    let w_hh = draw(4 * h * h);
    let mut bias = draw(4 * h);
    let w_out = draw(a * h);
    let b_out = draw(a);
    for b in &mut bias[h..2 * h] {
        *b = 1.0;
    }
    let p = PolicyParams { shape, action_bounds: action_bounds.to_vec(), w_ih, w_hh, bias, w_out, b_out };
    p.validate()?;
    Ok(p)
}

impl PolicyParams {
    pub fn num_params(&self) -> usize {
        self.shape.num_params()
    }

    pub fn validate(&self) -> PolicyResult<()> {
        let PolicyShape { obs_dim: i, hidden: h, act_dim: a } = self.shape;
        let checks = [
            ("w_ih", self.w_ih.len(), 4 * h * i),
            ("w_hh", self.w_hh.len(), 4 * h * h),
            ("bias", self.bias.len(), 4 * h),
            ("w_out", self.w_out.len(), a * h),
            ("b_out", self.b_out.len(), a),
            ("action_bounds", self.action_bounds.len(), a),
        ];
        for (what, found, expected) in checks {
            if found != expected {
                return Err(PolicyError::Dimension { what, expected, found });
            }
        }
        if !self.flat().iter().all(|v| v.is_finite()) {
            return Err(PolicyError::Invalid("non-finite weight".into()));
        }
        if !self.action_bounds.iter().all(|b| *b > 0.0 && b.is_finite()) {
            return Err(PolicyError::Invalid("action bounds must be positive".into()));
        }
        Ok(())
    }

    /// All weights in the order `w_ih, w_hh, bias, w_out, b_out`.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        for part in [&self.w_ih, &self.w_hh, &self.bias, &self.w_out, &self.b_out] {
            v.extend_from_slice(part);
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> PolicyResult<()> {
        if flat.len() != self.num_params() {
            return Err(PolicyError::Dimension { what: "flat parameters", expected: self.num_params(), found: flat.len() });
        }
        let mut at = 0;
        for part in [&mut self.w_ih, &mut self.w_hh, &mut self.bias, &mut self.w_out, &mut self.b_out] {
            let n = part.len();
            part.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    pub fn initial_hidden(&self) -> HiddenState {
        HiddenState { h: vec![0.0; self.shape.hidden], c: vec![0.0; self.shape.hidden] }
    }

    /// One recurrent update followed by the bounded action head.
    pub fn step(&self, hidden: &mut HiddenState, obs: &[f64]) -> PolicyResult<Vec<f64>> {
        let PolicyShape { obs_dim, hidden: h, act_dim } = self.shape;
        if obs.len() != obs_dim {
            return Err(PolicyError::Dimension { what: "observation", expected: obs_dim, found: obs.len() });
        }
        let wx = matvec(&self.w_ih, obs, 4 * h);
        let wh = matvec(&self.w_hh, &hidden.h, 4 * h);
        let gates: Vec<f64> = wx.iter().zip(&wh).zip(&self.bias).map(|((x, y), b)| (x + y) + b).collect();
        for j in 0..h {
            let ig = sigmoid(gates[j]);
            let fg = sigmoid(gates[h + j]);
            let gg = gates[2 * h + j].tanh();
            let og = sigmoid(gates[3 * h + j]);
            let c = fg * hidden.c[j] + ig * gg;
            hidden.c[j] = c;
            hidden.h[j] = og * c.tanh();
        }
        let out = matvec(&self.w_out, &hidden.h, act_dim);
        Ok(out
            .iter()
            .zip(&self.b_out)
            .zip(&self.action_bounds)
            .map(|((o, b), bound)| (o + b).tanh() * bound)
            .collect())
    }

    /// Records the weights as trainable variables (in [`PolicyParams::flat`] order).
    pub fn record_vars(&self, tape: &mut Tape) -> AdResult<TapePolicy> {
        Ok(TapePolicy {
            w_ih: tape.var(&self.w_ih)?,
            w_hh: tape.var(&self.w_hh)?,
            bias: tape.var(&self.bias)?,
            w_out: tape.var(&self.w_out)?,
            b_out: tape.var(&self.b_out)?,
        })
    }

    pub fn record_constants(&self, tape: &mut Tape) -> AdResult<TapePolicy> {
        Ok(TapePolicy {
            w_ih: tape.constant(&self.w_ih)?,
            w_hh: tape.constant(&self.w_hh)?,
            bias: tape.constant(&self.bias)?,
            w_out: tape.constant(&self.w_out)?,
            b_out: tape.constant(&self.b_out)?,
        })
    }

    pub fn initial_hidden_tape(&self, tape: &mut Tape) -> AdResult<TapeHidden> {
        let z = vec![0.0; self.shape.hidden];
        Ok(TapeHidden { h: tape.constant(&z)?, c: tape.constant(&z)? })
    }

    /// Tape version of [`PolicyParams::step`], with the same operation order.
    pub fn step_tape(&self, tape: &mut Tape, w: &TapePolicy, hidden: TapeHidden, obs: Tensor) -> PolicyResult<(Tensor, TapeHidden)> {
        let PolicyShape { obs_dim, hidden: h, act_dim } = self.shape;
        if obs.len() != obs_dim {
            return Err(PolicyError::Dimension { what: "observation", expected: obs_dim, found: obs.len() });
        }
        let wx = tape.matvec(w.w_ih, obs, 4 * h, obs_dim)?;
        let wh = tape.matvec(w.w_hh, hidden.h, 4 * h, h)?;
        let s = tape.add(wx, wh)?;
        let gates = tape.add(s, w.bias)?;
        let i_pre = tape.slice(gates, 0, h)?;
        let f_pre = tape.slice(gates, h, h)?;
        let g_pre = tape.slice(gates, 2 * h, h)?;
        let o_pre = tape.slice(gates, 3 * h, h)?;
        let ig = tape.sigmoid(i_pre)?;
        let fg = tape.sigmoid(f_pre)?;
        let gg = tape.tanh(g_pre)?;
        let og = tape.sigmoid(o_pre)?;
        let fc = tape.mul(fg, hidden.c)?;
        let ic = tape.mul(ig, gg)?;
        let c = tape.add(fc, ic)?;
        let tc = tape.tanh(c)?;
        let hn = tape.mul(og, tc)?;
        let o = tape.matvec(w.w_out, hn, act_dim, h)?;
        let ob = tape.add(o, w.b_out)?;
        let squashed = tape.tanh(ob)?;
        let bounds = tape.constant(&self.action_bounds)?;
        let action = tape.mul(squashed, bounds)?;
        Ok((action, TapeHidden { h: hn, c }))
    }

    pub fn save(&self, path: &Path) -> PolicyResult<()> {
        let file = PolicyFile { format: POLICY_FORMAT.into(), version: FORMAT_VERSION, params: self.clone() };
        write_json(path, &file)
    }

    pub fn load(path: &Path) -> PolicyResult<Self> {
        let file: PolicyFile = read_json(path)?;
        if file.format != POLICY_FORMAT || file.version != FORMAT_VERSION {
            return Err(PolicyError::Invalid(format!("{}: unsupported format {} v{}", path.display(), file.format, file.version)));
        }
        file.params.validate()?;
        Ok(file.params)
    }

    pub fn to_json(&self) -> String {
        let file = PolicyFile { format: POLICY_FORMAT.into(), version: FORMAT_VERSION, params: self.clone() };
        serde_json::to_string(&file).expect("policy serialises")
    }

    pub fn from_json(text: &str) -> PolicyResult<Self> {
        let file: PolicyFile =
            serde_json::from_str(text).map_err(|source| PolicyError::Format { path: PathBuf::from("<memory>"), source })?;
        file.params.validate()?;
        Ok(file.params)
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format: String,
    version: u32,
    params: PolicyParams,
}

#[derive(Serialize, Deserialize)]
struct MixtureFile {
    format: String,
    version: u32,
    weights: Vec<f64>,
    /// Component files, relative to the mixture file's directory.
    components: Vec<PathBuf>,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> PolicyResult<()> {
    let text = serde_json::to_string(value).map_err(|source| PolicyError::Format { path: path.into(), source })?;
    crate::io::write_atomic(path, text.as_bytes()).map_err(|source| PolicyError::Io { path: path.into(), source })
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> PolicyResult<T> {
    let text = fs::read_to_string(path).map_err(|source| PolicyError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| PolicyError::Format { path: path.into(), source })
}

/// Probability distribution over stored policies; one component acts for a whole episode.
#[derive(Clone, Debug, PartialEq)]
pub struct MixturePolicy {
    components: Vec<PolicyParams>,
    weights: Vec<f64>,
}

impl MixturePolicy {
    pub fn new(components: Vec<PolicyParams>, weights: Vec<f64>) -> PolicyResult<Self> {
        if components.is_empty() {
            return Err(PolicyError::EmptyMixture);
        }
        if components.len() != weights.len() {
            return Err(PolicyError::Mixture(format!("{} components but {} weights", components.len(), weights.len())));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(PolicyError::Mixture("weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(PolicyError::Mixture(format!("weights sum to {total}")));
        }
        Ok(Self { components, weights })
    }

    pub fn uniform(components: Vec<PolicyParams>) -> PolicyResult<Self> {
        let n = components.len();
        Self::new(components, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn single(policy: PolicyParams) -> Self {
        Self { components: vec![policy], weights: vec![1.0] }
    }

    pub fn components(&self) -> &[PolicyParams] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, i: usize) -> &PolicyParams {
        &self.components[i]
    }

    /// Draws a component index with probability `weights[i]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        mixture_sample(&self.weights, rng)
    }

    /// Writes the mixture file plus one file per component into `dir`,
    /// reusing existing component paths when given.
    pub fn save(&self, path: &Path, component_paths: &[PathBuf]) -> PolicyResult<()> {
        if component_paths.len() != self.len() {
            return Err(PolicyError::Mixture("one path per component required".into()));
        }
        let file = MixtureFile {
            format: MIXTURE_FORMAT.into(),
            version: FORMAT_VERSION,
            weights: self.weights.clone(),
            components: component_paths.to_vec(),
        };
        write_json(path, &file)
    }

    pub fn load(path: &Path) -> PolicyResult<Self> {
        let file: MixtureFile = read_json(path)?;
        if file.format != MIXTURE_FORMAT || file.version != FORMAT_VERSION {
            return Err(PolicyError::Invalid(format!("{}: unsupported format {} v{}", path.display(), file.format, file.version)));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let components = file.components.iter().map(|c| PolicyParams::load(&base.join(c))).collect::<PolicyResult<Vec<_>>>()?;
        Self::new(components, file.weights)
    }
}

/// Inverse-CDF draw from a probability vector; zero-weight entries are never chosen.
pub fn mixture_sample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len().saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;

    fn shape() -> PolicyShape {
        PolicyShape { obs_dim: 10, hidden: 32, act_dim: 2 }
    }

    #[test]
    fn parameter_count_matches_gate_arithmetic() {
        let p = init_policy(shape(), &[0.4, 1.5], 1).unwrap();
        // 4 gates x 32 units x (10 inputs + 32 recurrent + 1 bias) + 2 x (32 + 1)
        assert_eq!(p.num_params(), 4 * 32 * 43 + 2 * 33);
        assert_eq!(p.flat().len(), 5570);
        assert!(p.bias[32..64].iter().all(|&b| b == 1.0));
    }

    #[test]
    fn init_is_seeded() {
        let a = init_policy(shape(), &[0.4, 1.5], 7).unwrap();
        let b = init_policy(shape(), &[0.4, 1.5], 7).unwrap();
        let c = init_policy(shape(), &[0.4, 1.5], 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.flat(), c.flat());
        assert!(matches!(
            init_policy(PolicyShape { obs_dim: 0, hidden: 4, act_dim: 1 }, &[1.0], 0),
            Err(PolicyError::ZeroSize { .. })
        ));
    }

    #[test]
    fn zero_weights_give_zero_action() {
        let mut p = init_policy(shape(), &[0.4, 1.5], 1).unwrap();
        let n = p.num_params();
        p.set_flat(&vec![0.0; n]).unwrap();
        let mut hs = p.initial_hidden();
        assert_eq!(p.step(&mut hs, &[0.5; 10]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn actions_respect_bounds() {
        let mut p = init_policy(shape(), &[0.4, 1.5], 3).unwrap();
        let big: Vec<f64> = p.flat().iter().map(|w| w * 50.0).collect();
        p.set_flat(&big).unwrap();
        let mut hs = p.initial_hidden();
        for t in 0..20 {
            let a = p.step(&mut hs, &[t as f64 - 10.0; 10]).unwrap();
            assert!(a[0].abs() <= 0.4 && a[1].abs() <= 1.5);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = init_policy(shape(), &[0.4, 1.5], 1).unwrap();
        let mut hs = p.initial_hidden();
        assert!(matches!(p.step(&mut hs, &[0.0; 3]), Err(PolicyError::Dimension { .. })));
    }

    #[test]
    fn tape_matches_plain_over_a_history() {
        let p = init_policy(PolicyShape { obs_dim: 4, hidden: 6, act_dim: 2 }, &[0.5, 2.0], 11).unwrap();
        let mut tape = Tape::new();
        let w = p.record_vars(&mut tape).unwrap();
        let mut th = p.initial_hidden_tape(&mut tape).unwrap();
        let mut hs = p.initial_hidden();
        for t in 0..6 {
            let o = [0.3 * t as f64, -0.2, 1.0, 0.1 * t as f64];
            let ot = tape.constant(&o).unwrap();
            let (a, nh) = p.step_tape(&mut tape, &w, th, ot).unwrap();
            th = nh;
            assert_eq!(tape.value(a).unwrap(), p.step(&mut hs, &o).unwrap().as_slice());
        }
    }

    #[test]
    fn action_gradient_matches_finite_differences() {
        let p = init_policy(PolicyShape { obs_dim: 3, hidden: 4, act_dim: 2 }, &[0.5, 2.0], 5).unwrap();
        let r = grad_check(
            |tape, x| {
                let mut q = p.clone();
                q.set_flat(tape.value(x).unwrap()).unwrap();
                // rebuild the weights as slices of the single variable so gradients flow to x
                let sizes = [q.w_ih.len(), q.w_hh.len(), q.bias.len(), q.w_out.len(), q.b_out.len()];
                let mut at = 0;
                let mut parts = Vec::new();
                for n in sizes {
                    parts.push(tape.slice(x, at, n)?);
                    at += n;
                }
                let w = TapePolicy { w_ih: parts[0], w_hh: parts[1], bias: parts[2], w_out: parts[3], b_out: parts[4] };
                let mut h = q.initial_hidden_tape(tape)?;
                let mut last = None;
                for t in 0..3 {
                    let o = tape.constant(&[0.2 * t as f64, -0.5, 0.7])?;
                    let (a, nh) = q.step_tape(tape, &w, h, o).expect("dims");
                    h = nh;
                    last = Some(a);
                }
                let a = last.unwrap();
                let c = tape.constant(&[1.0, -0.3])?;
                tape.dot(a, c)
            },
            &p.flat(),
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error <= 1e-4, "{}", r.max_rel_error);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let p = init_policy(shape(), &[0.4, 1.5], 99).unwrap();
        let q = PolicyParams::from_json(&p.to_json()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn mixture_validation_and_sampling() {
        let p = init_policy(PolicyShape { obs_dim: 2, hidden: 2, act_dim: 1 }, &[1.0], 0).unwrap();
        assert!(matches!(MixturePolicy::new(vec![], vec![]), Err(PolicyError::EmptyMixture)));
        assert!(MixturePolicy::new(vec![p.clone(), p.clone()], vec![0.7, 0.4]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let single = MixturePolicy::single(p.clone());
        assert!((0..100).all(|_| single.sample(&mut rng) == 0));
        let last = MixturePolicy::new(vec![p.clone(), p.clone()], vec![0.0, 1.0]).unwrap();
        assert!((0..1000).all(|_| last.sample(&mut rng) == 1));
    }

    #[test]
    fn fair_mixture_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let ones = (0..n).filter(|_| mixture_sample(&[0.5, 0.5], &mut rng) == 1).count();
        let freq = ones as f64 / n as f64;
        // 0.01 is more than six binomial standard deviations at n = 1e5
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }
}
