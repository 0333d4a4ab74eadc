//! Robust control synthesis for signal temporal logic tasks in two-player
//! zero-sum games, by fictitious self-play with gradient-based best responses.

pub mod autodiff;
pub mod dynamics;
pub mod fsp;
pub mod io;
pub mod optim;
pub mod policy;
pub mod rollout;
pub mod scenarios;
pub mod stl;

pub use autodiff::{Tape, Tensor};
pub use dynamics::{Dynamics, JointLayout, Side};
pub use fsp::{run_fsp, BrBudget, Checkpoint, FspError, FspOptions, FspState, ZeroSumLedger};
pub use policy::{MixturePolicy, PolicyParams, PolicyShape};
pub use rollout::Episode;
pub use scenarios::{Game, GameConfig, ScenarioId};
pub use stl::{parse_formula, robustness, Formula, PredicateTable, Trace};
