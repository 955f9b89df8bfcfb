//! Simulation and certified region estimation for multi-agent coordination
//! under Lyapunov-like barrier controllers.

pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod graph;
pub mod oracle;
pub mod poly;
pub mod scenario;
pub mod sdp;

pub use error::{Error, Result};
