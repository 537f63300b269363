//! Numerical companion to the regularized chemotaxis-Stokes system with
//! porous-medium diffusion: the exponent bootstrap algebra, the ε-family of
//! regularized coefficients, a positivity-preserving finite-volume solver and
//! the functionals used to monitor its trajectories.

// `!(x > 0.0)` is the idiom used throughout to reject NaN together with
// out-of-range values; axis loops index several parallel arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::excessive_precision)]

pub mod diagnostics;
pub mod error;
pub mod exponents;
pub mod grid;
pub mod linalg;
pub mod par;
pub mod regularization;
pub mod solver;

pub use diagnostics::{CheckReport, DiagnosticsConfig, DiagnosticsRecord, Running};
pub use error::{Error, Result};
pub use exponents::{BootstrapLadder, ExponentParams, LadderKind, Termination};
pub use grid::Grid;
pub use regularization::RegularizationFamily;
pub use solver::{
    run, run_in_memory, DtPolicy, FieldState, Manifest, ModelParams, Potential, RunOutput, SimConfig,
    Simulation, StepReport,
};
