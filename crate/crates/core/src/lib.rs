//! Co-simulation of a jump-diffusion process and a random field driven by the
//! same Wiener and Poisson noise, with pathwise verification of the
//! generalized Itô–Wentzell formula.
//!
//! - [`noise`]: Wiener increments, marked Poisson events, Brownian-bridge
//!   refinement, integration against the intensity measure.
//! - [`scenario`]: coefficient systems, the scenario catalog and conversion
//!   between centered and non-centered representations.
//! - [`sde`]: Euler integration of the process with exact jump times.
//! - [`field`]: lazy pointwise evaluation of the field and its derivatives.
//! - [`wentzell`]: right-hand-side assembly, residual reports, convergence
//!   studies.
//! - [`cli`]: config parsing and batch commands.

pub mod cli;
pub mod error;
pub mod field;
pub mod noise;
pub mod scenario;
pub mod sde;
mod sum;
pub mod wentzell;

pub use error::{Error, Result};
pub use field::{FieldJet, FieldRealization};
pub use noise::{
    path_seed, refine, sample_jumps, sample_wiener, IntensitySpec, JumpEvent, MarkDistribution,
    MarkedJumpStream, TimeGrid, WienerPath,
};
pub use scenario::{
    catalog, catalog_entries, validate_derivatives, FieldCoefficients, Params, ProcessCoefficients,
    Representation, ScenarioSpec,
};
pub use sde::{integrate_process, JumpRecord, ProcessPath};
pub use wentzell::{
    convergence_study, rhs_jump, rhs_step, verify_batch, verify_on_noise, verify_path, CenteredMode,
    ConvergenceTable, JumpAmplitudeArgument, ResidualReport, TermBreakdown, VerifyOptions,
};
