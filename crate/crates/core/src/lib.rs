//! Two-stage distributionally robust capacity planning for green
//! manufacturing under climate-driven demand and renewable supply.

pub mod ccg;
pub mod climate;
pub mod codec;
pub mod eval;
pub mod family;
pub mod instance;
pub mod recourse;
pub mod solverbridge;
pub mod spbaseline;
pub mod warmstart;
pub mod wesp;

/// Scalar type used by the solver-facing modules.
pub type Scalar = f64;
