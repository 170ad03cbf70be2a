//! Exponential-penalty approximation of controlled sweeping processes over
//! smooth sublevel sets: simulation, catching-up oracle, convergence sweeps,
//! optimal control by direct transcription, and maximum-principle checks.

pub mod control;
pub mod convergence;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod model;
pub mod nc;
pub mod ocp;
pub mod oracle;
pub mod par;
pub mod scenario;
pub mod sets;
pub mod stiff;
pub mod workflow;

pub use error::{Error, Result};
