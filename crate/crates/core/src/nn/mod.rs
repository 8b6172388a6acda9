//! Minimal differentiable layer engine.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod params;
pub mod weights;

pub use adam::{AdamConfig, AdamState};
pub use graph::{GradSession, Graph, Op};
pub use ops::{BridgeKind, Mode};
pub use params::{Param, ParamStore};
