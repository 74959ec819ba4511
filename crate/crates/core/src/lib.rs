//! Exact Bayesian social learning on trees via the dynamic cavity method.
//!
//! Agents on a graph receive i.i.d. noisy signals about a hidden state and
//! vote repeatedly, each round observing their neighbors' previous votes.
//! [`cavity`] computes decision rules and error probabilities exactly on
//! (almost-)trees, [`oracle`] is the brute-force reference, [`bounds`] holds
//! the majority-dynamics recursions and [`sim`] is a Monte Carlo replay.

pub mod bounds;
pub mod cavity;
pub mod error;
pub mod model;
pub mod num;
pub mod oracle;
pub mod sim;
pub mod trees;
pub mod verify;

pub use error::{Error, Result};
pub use model::{
    ActionKernel, CustomRule, Decider, ModelConfig, TieBreakRule, Trajectory, UpdateRule,
    UtilityTable,
};
pub use num::Real;
pub use trees::{DegreeDistribution, TreeGraph};

pub type SignalModel = model::SignalModel<f64>;
pub type SignalModel32 = model::SignalModel<f32>;
pub type Engine = cavity::CavityEngine<f64>;
pub type Engine32 = cavity::CavityEngine<f32>;
