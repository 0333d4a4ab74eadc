//! Discrete-time transition functions for the two benchmark systems.
//!
//! Each system steps in plain `f64` arithmetic and, with identical operation
//! order, on an autodiff tape, so differentiable and plain rollouts agree.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdError, AdResult, Tape, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite {what}: {values:?}")]
    NonFinite { what: &'static str, values: Vec<f64> },
    #[error("expected {what} of dimension {expected}, got {found}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("invalid dynamics parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Autodiff(#[from] AdError),
}

pub type DynamicsResult<T> = Result<T, DynamicsError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

/// Kinematic single-track vehicle. State `[s_x, s_y, delta, v, psi]`, input `[v_delta, a_long]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub steer_min: f64,
    pub steer_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub steer_rate_max: f64,
    pub accel_max: f64,
    pub dt: f64,
    pub integrator: Integrator,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 0.32,
            steer_min: -0.9,
            steer_max: 0.9,
            v_min: -1.0,
            v_max: 3.0,
            steer_rate_max: 0.4,
            accel_max: 1.5,
            dt: 0.1,
            integrator: Integrator::Euler,
        }
    }
}

/// Linearised quad-rotor, state `[vx, vy, vz, x, y, z]`, input `[theta, phi, thrust]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DroneParams {
    pub roll_max: f64,
    pub pitch_max: f64,
    pub thrust_min: f64,
    pub thrust_max: f64,
}

impl Default for DroneParams {
    fn default() -> Self {
        Self { roll_max: 0.3, pitch_max: 0.3, thrust_min: -1.0, thrust_max: 1.0 }
    }
}

pub const VEHICLE_STATE_DIM: usize = 5;
pub const VEHICLE_ACTION_DIM: usize = 2;
pub const DRONE_STATE_DIM: usize = 6;
pub const DRONE_ACTION_DIM: usize = 3;

/// Sampling period implied by the discretised drone matrices.
pub const DRONE_DT: f64 = 0.2;

#[rustfmt::skip]
pub const DRONE_A: [[f64; 6]; 6] = [
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, 0.2, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.2, 0.0, 0.0, 1.0],
];

#[rustfmt::skip]
pub const DRONE_B: [[f64; 3]; 6] = [
    [1.96, 0.0, 0.0],
    [0.0, -1.96, 0.0],
    [0.0, 0.0, 0.4],
    [0.196, 0.0, 0.0],
    [0.0, -0.196, 0.0],
    [0.0, 0.0, 0.04],
];

fn check_finite(what: &'static str, v: &[f64]) -> DynamicsResult<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(DynamicsError::NonFinite { what, values: v.to_vec() })
    }
}

fn check_dim(what: &'static str, v: &[f64], expected: usize) -> DynamicsResult<()> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(DynamicsError::Dimension { what, expected, found: v.len() })
    }
}

impl VehicleParams {
    pub fn validate(&self) -> DynamicsResult<()> {
        let ok = self.wheelbase > 0.0
            && self.dt > 0.0
            && self.steer_min < self.steer_max
            && self.v_min < self.v_max
            && self.steer_rate_max > 0.0
            && self.accel_max > 0.0;
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::Parameter(format!("{self:?}")))
        }
    }

    /// `[f_steer, f_acc]`: commanded rates saturated to their bounds.
    fn saturate_input(&self, u: &[f64]) -> [f64; 2] {
        [u[0].clamp(-self.steer_rate_max, self.steer_rate_max), u[1].clamp(-self.accel_max, self.accel_max)]
    }

    fn derivative(&self, x: &[f64; 5], u: &[f64; 2]) -> [f64; 5] {
        [x[3] * x[4].cos(), x[3] * x[4].sin(), u[0], u[1], x[3] * (1.0 / self.wheelbase) * x[2].tan()]
    }

    fn saturate_state(&self, mut x: [f64; 5]) -> [f64; 5] {
        x[2] = x[2].clamp(self.steer_min, self.steer_max);
        x[3] = x[3].clamp(self.v_min, self.v_max);
        x
    }

    /// One step of length `dt`: input saturation, integration, state saturation.
    pub fn step(&self, state: &[f64], action: &[f64]) -> DynamicsResult<Vec<f64>> {
        check_dim("vehicle state", state, VEHICLE_STATE_DIM)?;
        check_dim("vehicle action", action, VEHICLE_ACTION_DIM)?;
        check_finite("vehicle state", state)?;
        check_finite("vehicle action", action)?;
        let x: [f64; 5] = state.try_into().expect("checked length");
        let u = self.saturate_input(action);
        let dt = self.dt;
        let next = match self.integrator {
            Integrator::Euler => {
                let d = self.derivative(&x, &u);
                std::array::from_fn(|i| x[i] + dt * d[i])
            }
            Integrator::Rk4 => {
                let add = |a: &[f64; 5], d: &[f64; 5], h: f64| -> [f64; 5] { std::array::from_fn(|i| a[i] + h * d[i]) };
                let k1 = self.derivative(&x, &u);
                let k2 = self.derivative(&add(&x, &k1, dt / 2.0), &u);
                let k3 = self.derivative(&add(&x, &k2, dt / 2.0), &u);
                let k4 = self.derivative(&add(&x, &k3, dt), &u);
                std::array::from_fn(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            }
        };
        let next = self.saturate_state(next);
        check_finite("vehicle state", &next)?;
        Ok(next.to_vec())
    }

    fn derivative_tape(&self, tape: &mut Tape, x: &[Tensor; 5], u: &[Tensor; 2]) -> AdResult<[Tensor; 5]> {
        let c = tape.cos(x[4])?;
        let s = tape.sin(x[4])?;
        let dx = tape.mul(x[3], c)?;
        let dy = tape.mul(x[3], s)?;
        let t = tape.tan(x[2])?;
        let r = tape.scale(x[3], 1.0 / self.wheelbase)?;
        let dpsi = tape.mul(r, t)?;
        Ok([dx, dy, u[0], u[1], dpsi])
    }

    pub fn step_tape(&self, tape: &mut Tape, state: Tensor, action: Tensor) -> AdResult<Tensor> {
        let x: [Tensor; 5] = [0, 1, 2, 3, 4].map(|i| tape.index(state, i)).into_iter().collect::<AdResult<Vec<_>>>()?
            .try_into()
            .expect("five components");
        let u0 = tape.index(action, 0)?;
        let u1 = tape.index(action, 1)?;
        let u = [tape.clamp(u0, -self.steer_rate_max, self.steer_rate_max)?, tape.clamp(u1, -self.accel_max, self.accel_max)?];
        let dt = self.dt;
        let euler = |tape: &mut Tape, a: &[Tensor; 5], d: &[Tensor; 5], h: f64| -> AdResult<[Tensor; 5]> {
            let mut out = *a;
            for i in 0..5 {
                let hd = tape.scale(d[i], h)?;
                out[i] = tape.add(a[i], hd)?;
            }
            Ok(out)
        };
        let next = match self.integrator {
            Integrator::Euler => {
                let d = self.derivative_tape(tape, &x, &u)?;
                euler(tape, &x, &d, dt)?
            }
            Integrator::Rk4 => {
                let k1 = self.derivative_tape(tape, &x, &u)?;
                let x2 = euler(tape, &x, &k1, dt / 2.0)?;
                let k2 = self.derivative_tape(tape, &x2, &u)?;
                let x3 = euler(tape, &x, &k2, dt / 2.0)?;
                let k3 = self.derivative_tape(tape, &x3, &u)?;
                let x4 = euler(tape, &x, &k3, dt)?;
                let k4 = self.derivative_tape(tape, &x4, &u)?;
                let mut out = x;
                for i in 0..5 {
                    let a = tape.scale(k2[i], 2.0)?;
                    let b = tape.scale(k3[i], 2.0)?;
                    let s1 = tape.add(k1[i], a)?;
                    let s2 = tape.add(s1, b)?;
                    let s3 = tape.add(s2, k4[i])?;
                    let inc = tape.scale(s3, dt / 6.0)?;
                    out[i] = tape.add(x[i], inc)?;
                }
                out
            }
        };
        let delta = tape.clamp(next[2], self.steer_min, self.steer_max)?;
        let v = tape.clamp(next[3], self.v_min, self.v_max)?;
        tape.concat(&[next[0], next[1], delta, v, next[4]])
    }
}

/// `next = A * state + B * action` with the fixed discretised matrices.
pub fn drone_step(state: &[f64], action: &[f64]) -> DynamicsResult<Vec<f64>> {
    check_dim("drone state", state, DRONE_STATE_DIM)?;
    check_dim("drone action", action, DRONE_ACTION_DIM)?;
    check_finite("drone state", state)?;
    check_finite("drone action", action)?;
    let next: Vec<f64> = (0..6)
        .map(|r| {
            let ax: f64 = DRONE_A[r].iter().zip(state).map(|(a, x)| a * x).sum();
            let bu: f64 = DRONE_B[r].iter().zip(action).map(|(b, u)| b * u).sum();
            ax + bu
        })
        .collect();
    check_finite("drone state", &next)?;
    Ok(next)
}

/// Tape version of [`drone_step`]. `matrices` comes from [`drone_matrices`].
pub fn drone_step_tape(tape: &mut Tape, matrices: (Tensor, Tensor), state: Tensor, action: Tensor) -> AdResult<Tensor> {
    let ax = tape.matvec(matrices.0, state, 6, 6)?;
    let bu = tape.matvec(matrices.1, action, 6, 3)?;
    tape.add(ax, bu)
}

/// Records the drone `A` and `B` matrices as tape constants.
pub fn drone_matrices(tape: &mut Tape) -> AdResult<(Tensor, Tensor)> {
    let a: Vec<f64> = DRONE_A.iter().flatten().copied().collect();
    let b: Vec<f64> = DRONE_B.iter().flatten().copied().collect();
    Ok((tape.constant(&a)?, tape.constant(&b)?))
}

/// Per-agent dynamics; both agents of a game share one model.
#[derive(Clone, Debug, PartialEq)]
pub enum Dynamics {
    Vehicle(VehicleParams),
    Drone(DroneParams),
}

/// Per-rollout tape constants a model needs.
#[derive(Clone, Copy, Debug)]
pub enum TapeModel {
    Vehicle,
    Drone(Tensor, Tensor),
}

impl Dynamics {
    pub fn state_dim(&self) -> usize {
        match self {
            Dynamics::Vehicle(_) => VEHICLE_STATE_DIM,
            Dynamics::Drone(_) => DRONE_STATE_DIM,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Dynamics::Vehicle(_) => VEHICLE_ACTION_DIM,
            Dynamics::Drone(_) => DRONE_ACTION_DIM,
        }
    }

    /// Symmetric per-component bounds for a tanh-squashed policy head.
    pub fn action_bounds(&self) -> Vec<f64> {
        match self {
            Dynamics::Vehicle(p) => vec![p.steer_rate_max, p.accel_max],
            Dynamics::Drone(p) => vec![p.roll_max, p.pitch_max, p.thrust_max.abs().max(p.thrust_min.abs())],
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            Dynamics::Vehicle(p) => p.dt,
            Dynamics::Drone(_) => DRONE_DT,
        }
    }

    /// Indices of the position components inside an agent state.
    pub fn position_indices(&self) -> Vec<usize> {
        match self {
            Dynamics::Vehicle(_) => vec![0, 1],
            Dynamics::Drone(_) => vec![3, 4, 5],
        }
    }

    pub fn state_names(&self) -> &'static [&'static str] {
        match self {
            Dynamics::Vehicle(_) => &["sx", "sy", "delta", "v", "psi"],
            Dynamics::Drone(_) => &["vx", "vy", "vz", "x", "y", "z"],
        }
    }

    pub fn action_names(&self) -> &'static [&'static str] {
        match self {
            Dynamics::Vehicle(_) => &["v_delta", "a_long"],
            Dynamics::Drone(_) => &["theta", "phi", "thrust"],
        }
    }

    /// Agent state at rest at `position`; every other component is zero.
    pub fn state_at(&self, position: &[f64]) -> DynamicsResult<Vec<f64>> {
        let idx = self.position_indices();
        if position.len() != idx.len() {
            return Err(DynamicsError::Dimension { what: "initial position", expected: idx.len(), found: position.len() });
        }
        let mut s = vec![0.0; self.state_dim()];
        for (&i, &p) in idx.iter().zip(position) {
            s[i] = p;
        }
        Ok(s)
    }

    pub fn validate(&self) -> DynamicsResult<()> {
        match self {
            Dynamics::Vehicle(p) => p.validate(),
            Dynamics::Drone(p) => {
                if p.roll_max > 0.0 && p.pitch_max > 0.0 && p.thrust_min < p.thrust_max {
                    Ok(())
                } else {
                    Err(DynamicsError::Parameter(format!("{p:?}")))
                }
            }
        }
    }

    pub fn step(&self, state: &[f64], action: &[f64]) -> DynamicsResult<Vec<f64>> {
        match self {
            Dynamics::Vehicle(p) => p.step(state, action),
            Dynamics::Drone(_) => drone_step(state, action),
        }
    }

    pub fn tape_model(&self, tape: &mut Tape) -> AdResult<TapeModel> {
        Ok(match self {
            Dynamics::Vehicle(_) => TapeModel::Vehicle,
            Dynamics::Drone(_) => {
                let (a, b) = drone_matrices(tape)?;
                TapeModel::Drone(a, b)
            }
        })
    }

    pub fn step_tape(&self, tape: &mut Tape, model: TapeModel, state: Tensor, action: Tensor) -> AdResult<Tensor> {
        match (self, model) {
            (Dynamics::Vehicle(p), _) => p.step_tape(tape, state, action),
            (Dynamics::Drone(_), TapeModel::Drone(a, b)) => drone_step_tape(tape, (a, b), state, action),
            (Dynamics::Drone(_), TapeModel::Vehicle) => {
                Err(AdError::Shape { op: "drone_step", detail: "vehicle tape model used for a drone".into() })
            }
        }
    }
}

/// Which side of the game an agent plays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Ego,
    Opponent,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Ego => Side::Opponent,
            Side::Opponent => Side::Ego,
        }
    }

    /// `+1` for the maximising ego, `-1` for the minimising opponent.
    pub fn sign(self) -> f64 {
        match self {
            Side::Ego => 1.0,
            Side::Opponent => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Ego => "ego",
            Side::Opponent => "opponent",
        }
    }
}

/// Layout of the joint state `ego ++ opponent`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointLayout {
    pub ego: Range<usize>,
    pub opponent: Range<usize>,
}

impl JointLayout {
    pub fn symmetric(agent_dim: usize) -> Self {
        Self { ego: 0..agent_dim, opponent: agent_dim..2 * agent_dim }
    }

    pub fn dim(&self) -> usize {
        self.ego.len() + self.opponent.len()
    }

    pub fn slice(&self, side: Side) -> Range<usize> {
        match side {
            Side::Ego => self.ego.clone(),
            Side::Opponent => self.opponent.clone(),
        }
    }

    pub fn join(&self, ego: &[f64], opponent: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(ego);
        v.extend_from_slice(opponent);
        v
    }

    /// Default observation: the full joint state with the observer's own slice first.
    pub fn observe(&self, joint: &[f64], side: Side) -> Vec<f64> {
        let own = self.slice(side);
        let other = self.slice(side.other());
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&joint[own]);
        v.extend_from_slice(&joint[other]);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;

    #[test]
    fn vehicle_at_rest_stays() {
        let p = VehicleParams::default();
        let s = [0.3, -0.2, 0.1, 0.0, 0.7];
        assert_eq!(p.step(&s, &[0.0, 0.0]).unwrap(), s.to_vec());
    }

    #[test]
    fn vehicle_straight_line() {
        let p = VehicleParams::default();
        let n = p.step(&[0.0, 0.0, 0.0, 1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((n[0] - 0.1).abs() < 1e-15);
        assert_eq!(&n[1..], &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn vehicle_yaw_rate() {
        let p = VehicleParams::default();
        let delta = p.wheelbase.atan();
        let n = p.step(&[0.0, 0.0, delta, 1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((n[4] - 0.1).abs() < 1e-12, "{}", n[4]);
    }

    #[test]
    fn vehicle_saturates() {
        let p = VehicleParams::default();
        let n = p.step(&[0.0, 0.0, 0.88, 2.95, 0.0], &[10.0, 10.0]).unwrap();
        assert_eq!(n[2], p.steer_max);
        assert_eq!(n[3], p.v_max);
        assert!(p.step(&[0.0; 5], &[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn drone_matrix_columns() {
        let n = drone_step(&[0.0; 6], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(n, vec![1.96, 0.0, 0.0, 0.196, 0.0, 0.0]);
        let n = drone_step(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &[0.0; 3]).unwrap();
        assert_eq!(n, vec![1.0, 0.0, 0.0, 0.2, 0.0, 0.0]);
        assert_eq!(drone_step(&[0.0; 6], &[0.0; 3]).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn tape_steps_match_plain() {
        for integrator in [Integrator::Euler, Integrator::Rk4] {
            let p = VehicleParams { integrator, ..Default::default() };
            let s = [0.1, -0.4, 0.2, 1.3, 0.5];
            let u = [0.3, -0.7];
            let mut t = Tape::new();
            let st = t.constant(&s).unwrap();
            let ut = t.constant(&u).unwrap();
            let n = p.step_tape(&mut t, st, ut).unwrap();
            assert_eq!(t.value(n).unwrap(), p.step(&s, &u).unwrap().as_slice());
        }
        let d = Dynamics::Drone(DroneParams::default());
        let s = [0.1, -0.4, 0.2, 1.3, 0.5, 0.9];
        let u = [0.1, 0.2, -0.3];
        let mut t = Tape::new();
        let m = d.tape_model(&mut t).unwrap();
        let st = t.constant(&s).unwrap();
        let ut = t.constant(&u).unwrap();
        let n = d.step_tape(&mut t, m, st, ut).unwrap();
        assert_eq!(t.value(n).unwrap(), drone_step(&s, &u).unwrap().as_slice());
    }

    #[test]
    fn vehicle_step_gradient() {
        let p = VehicleParams::default();
        let r = grad_check(
            |t, x| {
                let s = t.slice(x, 0, 5)?;
                let u = t.slice(x, 5, 2)?;
                let n = p.step_tape(t, s, u)?;
                let w = t.constant(&[1.0, -2.0, 0.5, 0.3, 1.7])?;
                t.dot(n, w)
            },
            &[0.1, -0.4, 0.2, 1.3, 0.5, 0.3, -0.7],
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn observation_permutation_is_an_involution() {
        let l = JointLayout::symmetric(3);
        let joint = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(l.observe(&joint, Side::Ego), joint.to_vec());
        let o = l.observe(&joint, Side::Opponent);
        assert_eq!(o, vec![4.0, 5.0, 6.0, 1.0, 2.0, 3.0]);
        assert_eq!(l.observe(&o, Side::Opponent), joint.to_vec());
        assert_eq!(o.len(), l.dim());
    }
}
