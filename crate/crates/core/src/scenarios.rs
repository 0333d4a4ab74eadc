//! The two benchmark games: region geometry, predicates, task formulas,
//! initial conditions, reward wiring and the TOML configuration that ties
//! them together.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DroneParams, Dynamics, DynamicsError, JointLayout, VehicleParams};
use crate::policy::PolicyShape;
use crate::stl::{horizon, parse_formula, robustness, Formula, Interval, Predicate, PredicateKind, PredicateTable, StlError, Trace};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}` (expected `vehicles` or `drones`)")]
    UnknownScenario(String),
    #[error("formula needs region `{0}`, which is not in the region table")]
    MissingRegion(String),
    #[error("region `{name}`: {message}")]
    InvalidRegion { name: String, message: String },
    #[error("formula horizon {horizon} exceeds the episode length T = {steps}")]
    HorizonTooLong { horizon: usize, steps: usize },
    #[error("initial conditions: {0}")]
    InitialConditions(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("configuration parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

pub type ScenarioResult<T> = Result<T, ScenarioError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    Vehicles,
    Drones,
}

impl FromStr for ScenarioId {
    type Err = ScenarioError;
    fn from_str(s: &str) -> ScenarioResult<Self> {
        match s {
            "vehicles" | "vehicle" => Ok(ScenarioId::Vehicles),
            "drones" | "drone" => Ok(ScenarioId::Drones),
            other => Err(ScenarioError::UnknownScenario(other.into())),
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioId::Vehicles => "vehicles",
            ScenarioId::Drones => "drones",
        })
    }
}

/// Geometric region over an agent's position `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    /// Planar disc over `(x, y)`; membership `r - |q - c|`.
    Disc { center: [f64; 2], radius: f64 },
    /// Axis-aligned box over the leading `min.len()` position axes.
    Box { min: Vec<f64>, max: Vec<f64> },
    /// Disc in `(x, y)` extruded over the full height.
    Column { center: [f64; 2], radius: f64 },
    /// `normal . q >= offset`.
    HalfSpace { normal: Vec<f64>, offset: f64 },
}

impl Region {
    pub fn validate(&self, name: &str, position_dim: usize) -> ScenarioResult<()> {
        let bad = |message: String| Err(ScenarioError::InvalidRegion { name: name.into(), message });
        match self {
            Region::Disc { center, radius } | Region::Column { center, radius } => {
                if !(*radius > 0.0 && radius.is_finite()) || center.iter().any(|c| !c.is_finite()) {
                    return bad(format!("radius must be positive and finite, got {radius}"));
                }
            }
            Region::Box { min, max } => {
                if min.is_empty() || min.len() != max.len() || min.len() > position_dim {
                    return bad(format!("box needs 1..={position_dim} axes with matching min/max"));
                }
                if min.iter().zip(max).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                    return bad("box requires min < max on every axis".into());
                }
            }
            Region::HalfSpace { normal, offset } => {
                if normal.len() != position_dim || normal.iter().all(|&v| v == 0.0) || !offset.is_finite() {
                    return bad(format!("half-space normal must be a non-zero {position_dim}-vector"));
                }
            }
        }
        Ok(())
    }

    /// Signed membership predicate over the joint-state indices `position`.
    pub fn membership(&self, name: impl Into<String>, position: &[usize]) -> ScenarioResult<Predicate> {
        let kind = match self {
            Region::Disc { center, radius } | Region::Column { center, radius } => {
                PredicateKind::Ball { indices: position[..2].to_vec(), center: center.to_vec(), radius: *radius }
            }
            Region::Box { min, max } => {
                PredicateKind::Box { indices: position[..min.len()].to_vec(), lo: min.clone(), hi: max.clone() }
            }
            Region::HalfSpace { normal, offset } => {
                PredicateKind::Affine { indices: position.to_vec(), coeffs: normal.clone(), offset: -offset }
            }
        };
        Ok(Predicate::new(name, kind)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub id: ScenarioId,
    /// Episode length `T` in steps; traces hold `T + 1` states.
    pub horizon: usize,
    pub d_min: f64,
    /// Optional formula text replacing the built-in task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
    #[serde(default = "default_zone1_altitude")]
    pub zone1_altitude: [f64; 2],
    #[serde(default = "default_zone2_altitude")]
    pub zone2_altitude: [f64; 2],
}

fn default_zone1_altitude() -> [f64; 2] {
    [1.0, 5.0]
}

fn default_zone2_altitude() -> [f64; 2] {
    [0.0, 3.0]
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub drone: DroneParams,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    #[default]
    Simultaneous,
    Alternating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub opponent_samples: usize,
    pub learning_rate: f64,
    /// Temperature at the first BR epoch; annealed geometrically to `tau_end`.
    pub tau_start: f64,
    pub tau_end: f64,
    pub iterations: usize,
    pub eval_episodes: usize,
    pub gamma: f64,
    pub update: UpdateRule,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            epochs: 200,
            opponent_samples: 15,
            learning_rate: 1e-3,
            tau_start: 0.05,
            tau_end: 0.05,
            iterations: 10,
            eval_episodes: 150,
            gamma: 1.0,
            update: UpdateRule::Simultaneous,
        }
    }
}

impl OptimizationConfig {
    pub fn tau_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.tau_start;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        self.tau_start * (self.tau_end / self.tau_start).powf(frac)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// i-th ego position with i-th opponent position.
    #[default]
    Positional,
    /// Every ego position with every opponent position.
    Cross,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditionsSection {
    #[serde(default)]
    pub pairing: Pairing,
    pub ego: Vec<Vec<f64>>,
    pub opponent: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub regions: BTreeMap<String, Region>,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub optimization: OptimizationConfig,
    pub initial_conditions: InitialConditionsSection,
}

fn disc(x: f64, y: f64, r: f64) -> Region {
    Region::Disc { center: [x, y], radius: r }
}

/// Built-in start positions, ego then opponent.
pub fn default_positions(id: ScenarioId) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    match id {
        ScenarioId::Vehicles => (
            vec![vec![-1.0, -1.0], vec![-0.5, -1.0], vec![-1.0, -0.5], vec![-0.75, -0.75], vec![-0.5, -0.75]],
            vec![vec![-0.5, -0.5], vec![0.0, 0.0], vec![-0.25, -0.25], vec![-0.5, -1.0], vec![-0.5, -0.9]],
        ),
        ScenarioId::Drones => (
            vec![
                vec![-1.0, -1.0, 1.4],
                vec![-0.5, -1.0, 1.1],
                vec![-1.0, -0.5, 1.5],
                vec![0.5, -0.75, 1.2],
                vec![0.0, -0.75, 1.2],
            ],
            vec![
                vec![0.0, 0.5, 1.3],
                vec![0.0, 0.0, 1.1],
                vec![-0.25, -0.25, 0.8],
                vec![-0.5, -1.0, 0.8],
                vec![-0.5, -0.9, 1.4],
            ],
        ),
    }
}

impl GameConfig {
    pub fn defaults(id: ScenarioId) -> Self {
        let regions: BTreeMap<String, Region> = match id {
            ScenarioId::Vehicles => [
                ("intermediate_goal", disc(0.0, 0.8, 0.25)),
                ("final_goal", disc(0.9, 0.9, 0.25)),
                ("red_circle", disc(0.3, 0.3, 0.3)),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
            ScenarioId::Drones => [
                ("goal", Region::Box { min: vec![0.7, 0.7, 0.5], max: vec![1.2, 1.2, 1.5] }),
                ("unsafe", Region::Column { center: [0.0, 0.0], radius: 0.3 }),
                ("zone1", Region::HalfSpace { normal: vec![0.0, 1.0, 0.0], offset: 0.2 }),
                ("zone2", Region::HalfSpace { normal: vec![0.0, -1.0, 0.0], offset: -0.2 }),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        };
        let (ego, opponent) = default_positions(id);
        GameConfig {
            scenario: ScenarioSection {
                id,
                horizon: 50,
                d_min: 0.3,
                formula: None,
                zone1_altitude: default_zone1_altitude(),
                zone2_altitude: default_zone2_altitude(),
            },
            regions,
            dynamics: DynamicsSection::default(),
            optimization: OptimizationConfig::default(),
            initial_conditions: InitialConditionsSection { pairing: Pairing::Positional, ego, opponent },
        }
    }

    /// Parses a TOML document and merges it over the defaults of its `scenario.id`.
    /// Region entries replace the default entry of the same name wholesale.
    pub fn from_toml_str(text: &str) -> ScenarioResult<Self> {
        let user: toml::Value = toml::from_str(text)?;
        let id = user
            .get("scenario")
            .and_then(|s| s.get("id"))
            .and_then(|v| v.as_str())
            .ok_or_else(|| ScenarioError::Config("missing `scenario.id`".into()))?
            .parse::<ScenarioId>()?;
        let mut base = toml::Value::try_from(GameConfig::defaults(id)).map_err(|e| ScenarioError::Config(e.to_string()))?;
        merge(&mut base, user, &[]);
        let cfg: GameConfig = base.try_into()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> ScenarioResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Applies `section.key=value` (value parsed as TOML, falling back to a bare string).
    pub fn apply_override(&self, assignment: &str) -> ScenarioResult<Self> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ScenarioError::Config(format!("override `{assignment}` is not of the form key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut root = toml::Value::try_from(self).map_err(|e| ScenarioError::Config(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        let mut cursor = &mut root;
        for part in &parts[..parts.len() - 1] {
            let table = cursor.as_table_mut().ok_or_else(|| ScenarioError::Config(format!("`{key}` does not name a table")))?;
            cursor = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        }
        cursor
            .as_table_mut()
            .ok_or_else(|| ScenarioError::Config(format!("`{key}` does not name a table")))?
            .insert(parts[parts.len() - 1].to_string(), value);
        let cfg: GameConfig = root.try_into()?;
        Ok(cfg)
    }

    pub fn dynamics(&self) -> Dynamics {
        match self.scenario.id {
            ScenarioId::Vehicles => Dynamics::Vehicle(self.dynamics.vehicle.clone()),
            ScenarioId::Drones => Dynamics::Drone(self.dynamics.drone.clone()),
        }
    }
}

fn merge(base: &mut toml::Value, user: toml::Value, path: &[&str]) {
    let replace_whole = path.len() == 2 && path[0] == "regions";
    match (base, user) {
        (toml::Value::Table(b), toml::Value::Table(u)) if !replace_whole => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) => {
                        let mut p = path.to_vec();
                        p.push(&k);
                        merge(slot, v, &p);
                    }
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Joint-state indices of an agent's position.
fn position_in_joint(dynamics: &Dynamics, layout: &JointLayout, ego: bool) -> Vec<usize> {
    let base = if ego { layout.ego.start } else { layout.opponent.start };
    dynamics.position_indices().into_iter().map(|i| base + i).collect()
}

/// Membership predicates `in_<region>` for the ego, the separation predicate and
/// (for drones) the zone altitude bands.
pub fn predicate_library(config: &GameConfig) -> ScenarioResult<PredicateTable> {
    let dynamics = config.dynamics();
    let layout = JointLayout::symmetric(dynamics.state_dim());
    let ego_q = position_in_joint(&dynamics, &layout, true);
    let opp_q = position_in_joint(&dynamics, &layout, false);
    let mut table = PredicateTable::new();
    for (name, region) in &config.regions {
        region.validate(name, ego_q.len())?;
        table.insert(region.membership(format!("in_{name}"), &ego_q)?);
    }
    table.insert(Predicate::new("separation", PredicateKind::SeparationSq { a: ego_q.clone(), b: opp_q, d_min: config.scenario.d_min })?);
    if config.scenario.id == ScenarioId::Drones {
        let z = ego_q[2];
        for (name, [lo, hi]) in [("alt_zone1", config.scenario.zone1_altitude), ("alt_zone2", config.scenario.zone2_altitude)] {
            table.insert(Predicate::new(name, PredicateKind::Box { indices: vec![z], lo: vec![lo], hi: vec![hi] })?);
        }
    }
    Ok(table)
}

fn require(config: &GameConfig, table: &PredicateTable, region: &str) -> ScenarioResult<Formula> {
    if !config.regions.contains_key(region) {
        return Err(ScenarioError::MissingRegion(region.into()));
    }
    Ok(Formula::Predicate(table.get(&format!("in_{region}")).expect("library has every region")))
}

fn task_window(config: &GameConfig) -> ScenarioResult<Interval> {
    let t = config.scenario.horizon;
    if t == 0 {
        return Err(ScenarioError::Config("scenario.horizon must be positive".into()));
    }
    Ok(Interval::new(0, t - 1)?)
}

/// Reach both goals, avoid the red circle and keep the safe distance throughout.
pub fn vehicle_spec(config: &GameConfig) -> ScenarioResult<Formula> {
    let table = predicate_library(config)?;
    let w = task_window(config)?;
    let mid = require(config, &table, "intermediate_goal")?;
    let fin = require(config, &table, "final_goal")?;
    let red = require(config, &table, "red_circle")?;
    let sep = Formula::Predicate(table.get("separation").expect("separation"));
    Ok(Formula::all([
        Formula::eventually(w, mid),
        Formula::eventually(w, fin),
        Formula::always(w, Formula::not(red)),
        Formula::always(w, sep),
    ]))
}

/// Reach the goal, avoid the unsafe column and the opponent, obey zone altitude rules.
pub fn drone_spec(config: &GameConfig) -> ScenarioResult<Formula> {
    let table = predicate_library(config)?;
    let w = task_window(config)?;
    let goal = require(config, &table, "goal")?;
    let unsafe_ = require(config, &table, "unsafe")?;
    let z1 = require(config, &table, "zone1")?;
    let z2 = require(config, &table, "zone2")?;
    let sep = Formula::Predicate(table.get("separation").expect("separation"));
    let alt1 = Formula::Predicate(table.get("alt_zone1").expect("alt_zone1"));
    let alt2 = Formula::Predicate(table.get("alt_zone2").expect("alt_zone2"));
    Ok(Formula::all([
        Formula::eventually(w, goal),
        Formula::always(w, Formula::and(Formula::not(unsafe_), sep)),
        Formula::always(w, Formula::implies(z1, alt1)),
        Formula::always(w, Formula::implies(z2, alt2)),
    ]))
}

/// Start states as `(ego, opponent)` agent states at rest.
pub fn initial_conditions(config: &GameConfig) -> ScenarioResult<Vec<(Vec<f64>, Vec<f64>)>> {
    let ic = &config.initial_conditions;
    let dynamics = config.dynamics();
    if ic.ego.is_empty() || ic.opponent.is_empty() {
        return Err(ScenarioError::InitialConditions("need at least one ego and one opponent position".into()));
    }
    let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = match ic.pairing {
        Pairing::Positional => {
            if ic.ego.len() != ic.opponent.len() {
                return Err(ScenarioError::InitialConditions(format!(
                    "positional pairing needs equal counts, got {} ego and {} opponent",
                    ic.ego.len(),
                    ic.opponent.len()
                )));
            }
            ic.ego.iter().zip(&ic.opponent).collect()
        }
        Pairing::Cross => ic.ego.iter().flat_map(|e| ic.opponent.iter().map(move |o| (e, o))).collect(),
    };
    pairs
        .into_iter()
        .map(|(e, o)| Ok((dynamics.state_at(e)?, dynamics.state_at(o)?)))
        .collect()
}

/// Zero-sum terminal reward `(ego, opponent)`: zero before `T`, `(rho, -rho)` at `T`.
pub fn terminal_reward(trace: &Trace, formula: &Formula, t: usize, steps: usize) -> ScenarioResult<(f64, f64)> {
    if t < steps {
        return Ok((0.0, 0.0));
    }
    let rho = robustness(formula, trace, 0)?;
    Ok((rho, -rho))
}

/// A validated game ready for rollouts.
#[derive(Clone, Debug)]
pub struct Game {
    pub config: GameConfig,
    pub dynamics: Dynamics,
    pub layout: JointLayout,
    pub predicates: PredicateTable,
    pub formula: Formula,
    /// Joint start states.
    pub initial_states: Vec<Vec<f64>>,
}

impl Game {
    pub fn new(config: GameConfig) -> ScenarioResult<Self> {
        let dynamics = config.dynamics();
        dynamics.validate()?;
        let layout = JointLayout::symmetric(dynamics.state_dim());
        let predicates = predicate_library(&config)?;
        let formula = match &config.scenario.formula {
            Some(text) => parse_formula(text, &predicates)?,
            None => match config.scenario.id {
                ScenarioId::Vehicles => vehicle_spec(&config)?,
                ScenarioId::Drones => drone_spec(&config)?,
            },
        };
        formula.check_dimension(layout.dim())?;
        let h = horizon(&formula);
        if h > config.scenario.horizon {
            return Err(ScenarioError::HorizonTooLong { horizon: h, steps: config.scenario.horizon });
        }
        if !(config.scenario.d_min >= 0.0) {
            return Err(ScenarioError::Config("scenario.d_min must be non-negative".into()));
        }
        let o = &config.optimization;
        if o.hidden == 0 || !(o.learning_rate > 0.0) || !(o.tau_start > 0.0) || !(o.tau_end > 0.0) || !(o.gamma > 0.0 && o.gamma <= 1.0) {
            return Err(ScenarioError::Config("optimization: hidden, learning_rate and temperatures must be positive, gamma in (0, 1]".into()));
        }
        let initial_states = initial_conditions(&config)?.into_iter().map(|(e, o)| layout.join(&e, &o)).collect();
        Ok(Self { config, dynamics, layout, predicates, formula, initial_states })
    }

    pub fn from_scenario(id: ScenarioId) -> ScenarioResult<Self> {
        Self::new(GameConfig::defaults(id))
    }

    /// Episode length `T`.
    pub fn steps(&self) -> usize {
        self.config.scenario.horizon
    }

    pub fn policy_shape(&self) -> PolicyShape {
        PolicyShape { obs_dim: self.layout.dim(), hidden: self.config.optimization.hidden, act_dim: self.dynamics.action_dim() }
    }

    pub fn action_bounds(&self) -> Vec<f64> {
        self.dynamics.action_bounds()
    }

    pub fn num_initial_conditions(&self) -> usize {
        self.initial_states.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vehicle_trace(ego: &[(f64, f64)], opp: (f64, f64)) -> Trace {
        Trace::new(ego.iter().map(|&(x, y)| vec![x, y, 0.0, 0.0, 0.0, opp.0, opp.1, 0.0, 0.0, 0.0]).collect(), 0.1).unwrap()
    }

    #[test]
    fn vehicle_spec_shape() {
        let cfg = GameConfig::defaults(ScenarioId::Vehicles);
        let f = vehicle_spec(&cfg).unwrap();
        assert_eq!(horizon(&f), 49);
        assert_eq!(
            f.to_string(),
            "((F[0,49](in_intermediate_goal) & F[0,49](in_final_goal)) & G[0,49](!(in_red_circle))) & G[0,49](separation)"
        );
    }

    #[test]
    fn red_circle_violation_is_negative() {
        let game = Game::from_scenario(ScenarioId::Vehicles).unwrap();
        let mut path = vec![(0.0, 0.8); 20];
        path.extend(vec![(0.9, 0.9); 20]);
        path.extend(vec![(0.3, 0.3); 10]);
        path.push((0.9, 0.9));
        let t = vehicle_trace(&path, (-1.0, 1.0));
        assert!(robustness(&game.formula, &t, 0).unwrap() < 0.0);
    }

    #[test]
    fn witness_trajectory_satisfies() {
        let game = Game::from_scenario(ScenarioId::Vehicles).unwrap();
        let mut path = vec![(-0.3, 0.8); 5];
        path.extend(vec![(0.0, 0.8); 20]);
        path.extend(vec![(0.9, 0.9); 26]);
        let t = vehicle_trace(&path, (-1.0, -1.0));
        // margins: goals reached at their centres (0.25), red circle clearance |(0,0.8)-(0.3,0.3)| - 0.3,
        // separation at least |(-0.3,0.8)-(-1,-1)|^2 - 0.09
        let clearance = (0.3f64.powi(2) + 0.5f64.powi(2)).sqrt() - 0.3;
        let sep = 0.7f64.powi(2) + 1.8f64.powi(2) - 0.09;
        let expect = 0.25f64.min(clearance).min(sep);
        let rho = robustness(&game.formula, &t, 0).unwrap();
        assert!((rho - expect).abs() < 1e-12, "{rho} vs {expect}");
    }

    #[test]
    fn drone_zone_altitude_rule() {
        let game = Game::from_scenario(ScenarioId::Drones).unwrap();
        let state = |x: f64, y: f64, z: f64| vec![0.0, 0.0, 0.0, x, y, z, 0.0, 0.0, 0.0, -1.0, 1.0, 1.0];
        let mut states = vec![state(0.9, 0.9, 1.0); 51];
        states[10] = state(0.9, -0.5, 4.0);
        let t = Trace::new(states, 0.2).unwrap();
        assert!(robustness(&game.formula, &t, 0).unwrap() < 0.0);
    }

    #[test]
    fn zone1_rule_vacuous_outside_zone() {
        let game = Game::from_scenario(ScenarioId::Drones).unwrap();
        let z1 = Formula::always(Interval::new(0, 2).unwrap(), Formula::implies(
            Formula::Predicate(game.predicates.get("in_zone1").unwrap()),
            Formula::Predicate(game.predicates.get("alt_zone1").unwrap()),
        ));
        let ys = [-0.5, -0.2, -0.9];
        let states: Vec<Vec<f64>> = ys.iter().map(|&y| vec![0.0, 0.0, 0.0, 0.0, y, 9.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).collect();
        let t = Trace::new(states, 0.2).unwrap();
        // never in zone 1, altitude 9 violates the band by 4: the margin is min over steps of max(0.2 - y, -4)
        let expect = ys.iter().map(|y| (0.2 - y).max(-4.0)).fold(f64::INFINITY, f64::min);
        assert!((robustness(&z1, &t, 0).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn default_initial_conditions() {
        let v = initial_conditions(&GameConfig::defaults(ScenarioId::Vehicles)).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v[0], (vec![-1.0, -1.0, 0.0, 0.0, 0.0], vec![-0.5, -0.5, 0.0, 0.0, 0.0]));
        let d = initial_conditions(&GameConfig::defaults(ScenarioId::Drones)).unwrap();
        assert_eq!(d[0].0, vec![0.0, 0.0, 0.0, -1.0, -1.0, 1.4]);
        assert_eq!(d[4].1, vec![0.0, 0.0, 0.0, -0.5, -0.9, 1.4]);
        let mut cross = GameConfig::defaults(ScenarioId::Drones);
        cross.initial_conditions.pairing = Pairing::Cross;
        assert_eq!(initial_conditions(&cross).unwrap().len(), 25);
    }

    #[test]
    fn terminal_reward_zero_sum() {
        let game = Game::from_scenario(ScenarioId::Vehicles).unwrap();
        let t = vehicle_trace(&vec![(0.0, 0.0); 51], (0.5, 0.5));
        assert_eq!(terminal_reward(&t, &game.formula, 10, 50).unwrap(), (0.0, 0.0));
        let (e, o) = terminal_reward(&t, &game.formula, 50, 50).unwrap();
        assert_eq!(e + o, 0.0);
        assert_eq!(e, robustness(&game.formula, &t, 0).unwrap());
        let short = vehicle_trace(&[(0.0, 0.0); 3], (0.5, 0.5));
        assert!(terminal_reward(&short, &game.formula, 50, 50).is_err());
    }

    #[test]
    fn region_signed_distance() {
        let d = disc(0.0, 0.0, 1.0).membership("d", &[0, 1]).unwrap();
        assert!((d.eval(&[3.0, 4.0]) + 4.0).abs() < 1e-15);
        let b = Region::Box { min: vec![0.0, 0.0], max: vec![1.0, 1.0] }.membership("b", &[0, 1]).unwrap();
        assert!((b.eval(&[0.5, 0.25]) - 0.25).abs() < 1e-15);
        assert!((b.eval(&[4.0, 5.0]) + 5.0).abs() < 1e-15);
        assert!(Region::Box { min: vec![1.0], max: vec![0.0] }.validate("x", 2).is_err());
        assert!(disc(0.0, 0.0, 0.0).validate("x", 2).is_err());
    }

    #[test]
    fn missing_region_and_long_formula() {
        let mut cfg = GameConfig::defaults(ScenarioId::Vehicles);
        cfg.regions.remove("red_circle");
        assert!(matches!(Game::new(cfg), Err(ScenarioError::MissingRegion(r)) if r == "red_circle"));
        let mut cfg = GameConfig::defaults(ScenarioId::Vehicles);
        cfg.scenario.formula = Some("F[0,60](in_final_goal)".into());
        assert!(matches!(Game::new(cfg), Err(ScenarioError::HorizonTooLong { horizon: 60, steps: 50 })));
    }

    #[test]
    fn toml_merge_and_overrides() {
        let cfg = GameConfig::from_toml_str(
            "[scenario]\nid = \"drones\"\nd_min = 0.5\n[regions.goal]\nkind = \"box\"\nmin = [0.0, 0.0]\nmax = [1.0, 1.0]\n[optimization]\nepochs = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario.d_min, 0.5);
        assert_eq!(cfg.scenario.horizon, 50);
        assert_eq!(cfg.optimization.epochs, 7);
        assert_eq!(cfg.optimization.opponent_samples, 15);
        assert_eq!(cfg.regions["goal"], Region::Box { min: vec![0.0, 0.0], max: vec![1.0, 1.0] });
        assert!(cfg.regions.contains_key("unsafe"));
        let o = cfg.apply_override("optimization.learning_rate=0.01").unwrap();
        assert_eq!(o.optimization.learning_rate, 0.01);
        let o = o.apply_override("initial_conditions.pairing=cross").unwrap();
        assert_eq!(o.initial_conditions.pairing, Pairing::Cross);
        assert!(cfg.apply_override("optimization.bogus=1").is_err());
        assert!(GameConfig::from_toml_str("[scenario]\nid = \"boats\"").is_err());
        let back = GameConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }
}
