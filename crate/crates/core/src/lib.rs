//! Simulation core for hub-based robot collectives making repeated
//! best-of-n site choices under a human operator.
//!
//! The crate is synchronous and deterministic: one seed, one config and one
//! stream of operator inputs always produce the same event log.

pub mod api;
pub mod batch;
pub mod command;
pub mod error;
pub mod eventlog;
pub mod events;
pub mod geom;
pub mod ids;
pub mod metrics;
pub mod params;
pub mod policy;
pub mod probe;
pub mod replay;
pub mod scenario;
pub mod sim;
pub mod trial;
pub mod wire;

pub use error::{Error, Result};
pub use ids::{CollectiveId, TargetId};
pub use params::DynamicsParams;
pub use scenario::{Difficulty, TrialComponentConfig};
pub use sim::{ModelKind, SimState};
