//! Finite-volume simulator for a chemotaxis–Navier–Stokes system with
//! indirect nutrient consumption, and diagnostics for its long-time
//! behaviour.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod grid;
pub mod harness;
pub mod linsolve;
pub mod model;
pub mod oracle;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Grid, MacField, ScalarField};
pub use model::{InitialData, ModelParams};
pub use solver::{Solver, StepReport, SystemState};
