//! Expression language for drivers `g(t, y, z)` and terminal values `xi(w)`,
//! plus the catalog of named drivers.

mod catalog;
mod driver;
mod expr;
mod parser;

pub use catalog::{catalog_lookup, is_catalog_name, lookup_spec, CatalogEntry, CatalogError, Params};
pub use driver::{
    audit_growth, audit_lipschitz, Assumptions, AuditBox, Driver, DriverError, DriverFamily,
};
pub use expr::{Bindings, BinaryOp, EvalError, Expr, UnaryOp, Var};
pub use parser::{parse, ParseError, ParseErrorKind};

/// Parse and evaluate in one go.
pub fn evaluate(e: &Expr, env: &Bindings) -> Result<f64, EvalError> {
    e.evaluate(env)
}
