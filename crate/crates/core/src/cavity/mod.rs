//! The dynamic cavity method: exact decision rules and error probabilities
//! on trees, configuration-model limits, hub-augmented graphs and graphs
//! with randomly inactive edges.

mod engine;
pub mod hubs;
pub mod io;
mod tables;
mod topology;

pub use engine::{
    CavityEngine, EngineConfig, ErrorEstimate, StepStats, COUPLING_TOLERANCE, DEFAULT_TABLE_BUDGET,
    DRIFT_REPORT, UNRELIABLE_BELOW,
};
pub use hubs::{posterior_with_hubs, DEFAULT_HUB_CAP};
pub use tables::{CavityTable, DecisionTable, Outcomes, Scope, MIXED};
pub use topology::{Alternative, MessageClass, NodeClass, Topology};
