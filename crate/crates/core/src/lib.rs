//! Numerical laboratory for one-dimensional BSDEs
//!
//! ```text
//! y_t = xi + int_t^T g(s, y_s, z_s) ds - int_t^T z_s dW_s
//! ```
//!
//! with drivers `g` that are continuous but not necessarily Lipschitz.
//!
//! * [`dsl`]: expressions for drivers and terminal values, plus a catalog.
//! * [`envelope`]: the `m`-Lipschitz inf/sup-convolution envelopes of a driver.
//! * [`lattice`]: the Bernoulli random-walk model of Brownian motion.
//! * [`solver`]: backward induction, Picard iteration and the monotone
//!   envelope scheme for minimal/maximal solutions.
//! * [`lab`]: sup-distances, dependence curves, uniqueness gaps and the
//!   closed-form counterexample with `g = 3|y|^(2/3)`.

pub mod dsl;
pub mod envelope;
pub mod lab;
pub mod lattice;
pub mod solver;

mod error;

pub use dsl::{catalog_lookup, parse, Driver, DriverFamily, Expr};
pub use envelope::{EnvelopeDriver, EnvelopeKind};
pub use error::Error;
pub use lab::{DependenceReport, Selector, Verdict};
pub use lattice::{AdaptedField, Lattice};
pub use solver::{Scheme, SolutionField, TerminalValue};
