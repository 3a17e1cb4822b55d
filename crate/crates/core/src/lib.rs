//! Receding-horizon control with runtime relaxed-Lyapunov certificates.
//!
//! The [`solver`] module provides finite-horizon optimal control (exact for
//! linear-quadratic plants), [`certificate`] the suboptimality arithmetic,
//! [`scheduler`] the four update-scheduling algorithms and [`sweep`] the
//! grid experiments built on them.

// `!(x <= tol)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod config;
pub mod error;
pub mod model;
pub mod reference;
pub mod scheduler;
pub mod solver;
pub mod sweep;

pub use certificate::{Certificate, SlackAccumulator};
pub use error::{Error, Result};
pub use model::{Control, LinearQuadratic, State, SystemModel};
pub use scheduler::{
    run, AlgorithmConfig, ClosedLoop, ClosedLoopTrace, ControlHorizon, RunStatus, UpdateSchedule,
    Variant,
};
pub use solver::{FiniteHorizonSolver, GainConvention, LqSolver, OpenLoopSolution};
pub use sweep::{InitialSet, SweepReport};
