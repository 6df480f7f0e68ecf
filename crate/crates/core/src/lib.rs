//! Dynamic CPU-core allocation as a finite Markov decision process.
//!
//! Cloud processes see their peak per-core load move between discrete
//! levels when cores are added or removed; how likely a core change
//! actually shifts the level depends on how parallelizable the process is.
//! This crate models that control problem as a small discounted MDP and
//! provides:
//!
//! * [`model`] — the MDP representation: states, per-state allowed actions,
//!   transition/reward tensors, validation, and seeded sampling;
//! * [`solver`] — value iteration plus two independent oracles (exact
//!   policy evaluation by linear solve, brute-force policy enumeration);
//! * [`scenarios`] — builders for the bundled SDR/SDN process families and
//!   their parameterized generalizations;
//! * [`simulator`] — seeded trajectory simulation, Monte Carlo aggregation
//!   against a random-action baseline, and energy conversion;
//! * [`doc`] — on-disk document forms of models and solve results.
//!
//! All numeric code is generic over the [`Scalar`] type (`f32` or `f64`);
//! the `*64`/`*32` aliases below pin the common instantiations. `f64` is
//! the working precision of the bundled scenarios and the CLI.

pub mod doc;
pub mod model;
pub mod scalar;
pub mod scenarios;
pub mod simulator;
pub mod solver;

pub use model::{
    Action, MdpModel, ModelError, Policy, StateId, ValidationReport, ValueVector, Violation,
};
pub use scalar::Scalar;
pub use scenarios::{ProcessKind, RewardRules, ScenarioSpec};
pub use simulator::{Agent, AggregateStats, EnergyModel, SimError, TrajectoryStats};
pub use solver::{QTable, SolveResult, SolverError};

pub type Model64 = MdpModel<f64>;
pub type Model32 = MdpModel<f32>;
pub type Values64 = ValueVector<f64>;
pub type Values32 = ValueVector<f32>;
pub type Solve64 = SolveResult<f64>;
pub type Solve32 = SolveResult<f32>;
