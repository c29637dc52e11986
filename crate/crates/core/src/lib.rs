#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod functionals;
pub mod grid;
pub mod inequalities;
pub mod nonlinear;
pub mod oracle;
pub mod state;
pub mod stepper;
pub mod stokes;

pub use error::{Error, Result};
pub use grid::{build_grid, CylGrid, Parity, RadialScheme, ScalarField};
pub use oracle::{FullField, OracleScheme};
pub use state::{ModePressure, ModeState, ModeVelocity, Params, WavenumberConvention};
pub use stepper::{Scheme, StepConfig};
