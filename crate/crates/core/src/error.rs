use thiserror::Error;

use crate::dsl::{CatalogError, DriverError, EvalError, ParseError};
use crate::envelope::EnvelopeError;
use crate::lab::LabError;
use crate::lattice::LatticeError;
use crate::solver::SolverError;

/// Any error from the library, prefixed with the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("driver-dsl: {0}")]
    Parse(#[from] ParseError),
    #[error("driver-dsl: {0}")]
    Eval(#[from] EvalError),
    #[error("driver-dsl: {0}")]
    Driver(#[from] DriverError),
    #[error("driver-dsl: {0}")]
    Catalog(#[from] CatalogError),
    #[error("envelope: {0}")]
    Envelope(#[from] EnvelopeError),
    #[error("lattice: {0}")]
    Lattice(#[from] LatticeError),
    #[error("bsde-solver: {0}")]
    Solver(#[from] SolverError),
    #[error("dependence-lab: {0}")]
    Lab(#[from] LabError),
}
