//! Downlink multi-user MIMO rate analysis for co-located and distributed
//! antenna layouts under maximum-ratio and zero-forcing precoding.

pub mod channel;
pub mod error;
pub mod geometry;
pub mod montecarlo;
pub mod mrt;
pub mod special;
pub mod zfbf;

pub use error::{Error, Result};
pub use geometry::{CellPoint, Layout, NeighborStats, ScenarioLayout};
pub use montecarlo::{Method, RateEstimate, Scheme, SimulationPlan};
pub use special::QuadratureSpec;

/// Library version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
