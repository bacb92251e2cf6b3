//! Hybrid analog-digital training-beam design for compressive mmWave MIMO
//! channel estimation, plus the estimation and Monte-Carlo tooling used to
//! evaluate the designs.

pub mod channel;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod hybrid_inf;
pub mod hybrid_low;
pub mod linalg;
pub mod manifold;
pub mod metrics;
pub mod sensing;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
pub use sensing::{HybridSensingMatrix, PhaseSet, Side, TrainingBeams, UnconstrainedSensing};
