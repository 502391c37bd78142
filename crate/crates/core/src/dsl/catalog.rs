//! Built-in named drivers and driver families.
//!
//! | name             | g                          | A          | K          |
//! |------------------|----------------------------|------------|------------|
//! | `zero`           | 0                          | 0          | 0          |
//! | `constant(c)`    | c                          | \|c\|      | 0          |
//! | `linear(a,b)`    | a y + b z                  | max(\|a\|,\|b\|) | max(\|a\|,\|b\|) |
//! | `remark33`       | 3 \|y\|^(2/3)              | 3          | none       |
//! | `abs_power(c,p)` | c \|y\|^p, 0 < p <= 1      | \|c\|      | \|c\| if p = 1 |
//!
//! Families (parameter `lam`, domain `[0, 1]`, `lam0 = 0`):
//! `linear_lambda` (`lam y`), `remark33_shift` (`3|y|^(2/3) + lam`),
//! `remark33_abs` (`3|y|^(2/3) + lam |y|`).

use std::collections::BTreeMap;

use thiserror::Error;

use super::driver::{Driver, DriverError, DriverFamily};
use super::expr::{BinaryOp, Expr, UnaryOp, Var};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum CatalogError {
    #[error("unknown catalog entry `{0}`")]
    UnknownName(String),
    #[error("catalog entry `{name}` needs parameter `{param}`")]
    MissingParameter { name: String, param: &'static str },
    #[error("catalog entry `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error(transparent)]
    Driver(#[from] DriverError),
}

#[derive(Clone, Debug)]
pub enum CatalogEntry {
    Driver(Driver),
    Family(DriverFamily),
}

impl CatalogEntry {
    pub fn into_driver(self) -> Option<Driver> {
        match self {
            CatalogEntry::Driver(d) => Some(d),
            CatalogEntry::Family(_) => None,
        }
    }

    pub fn into_family(self) -> Option<DriverFamily> {
        match self {
            CatalogEntry::Family(f) => Some(f),
            CatalogEntry::Driver(_) => None,
        }
    }
}

pub type Params = BTreeMap<String, f64>;

const NAMES: &[&str] = &[
    "zero",
    "constant",
    "linear",
    "remark33",
    "abs_power",
    "linear_lambda",
    "remark33_shift",
    "remark33_abs",
];

/// Positional parameter order, used when a spec is written `linear(2,-1)`.
fn positional(name: &str) -> &'static [&'static str] {
    match name {
        "constant" => &["c"],
        "linear" => &["a", "b"],
        "abs_power" => &["c", "p"],
        _ => &[],
    }
}

pub fn is_catalog_name(name: &str) -> bool {
    NAMES.contains(&name)
}

fn param(name: &str, params: &Params, key: &'static str) -> Result<f64, CatalogError> {
    params
        .get(key)
        .copied()
        .ok_or_else(|| CatalogError::MissingParameter {
            name: name.to_string(),
            param: key,
        })
}

fn remark33_expr() -> Expr {
    Expr::binary(
        BinaryOp::Mul,
        Expr::num(3.0),
        Expr::binary(
            BinaryOp::PowAbs,
            Expr::var(Var::Y),
            Expr::binary(BinaryOp::Div, Expr::num(2.0), Expr::num(3.0)),
        ),
    )
}

fn scaled(c: f64, v: Var) -> Expr {
    Expr::binary(BinaryOp::Mul, Expr::num(c), Expr::var(v))
}

pub fn catalog_lookup(name: &str, params: &Params) -> Result<CatalogEntry, CatalogError> {
    let entry = match name {
        "zero" => CatalogEntry::Driver(Driver::from_expr(
            "zero",
            Expr::num(0.0),
            Some(0.0),
            Some(0.0),
        )?),
        "constant" => {
            let c = param(name, params, "c")?;
            CatalogEntry::Driver(Driver::from_expr(
                format!("constant({c})"),
                Expr::num(c),
                Some(c.abs()),
                Some(0.0),
            )?)
        }
        "linear" => {
            let a = param(name, params, "a")?;
            let b = param(name, params, "b")?;
            let k = a.abs().max(b.abs());
            let expr = Expr::binary(BinaryOp::Add, scaled(a, Var::Y), scaled(b, Var::Z));
            CatalogEntry::Driver(Driver::from_expr(
                format!("linear({a},{b})"),
                expr,
                Some(k),
                Some(k),
            )?)
        }
        "remark33" => CatalogEntry::Driver(Driver::from_expr(
            "remark33",
            remark33_expr(),
            Some(3.0),
            None,
        )?),
        "abs_power" => {
            let c = param(name, params, "c")?;
            let p = param(name, params, "p")?;
            if !(p > 0.0 && p <= 1.0) {
                return Err(CatalogError::InvalidParameter {
                    name: name.to_string(),
                    reason: format!("exponent p = {p} must lie in (0, 1]"),
                });
            }
            let expr = Expr::binary(
                BinaryOp::Mul,
                Expr::num(c),
                Expr::binary(BinaryOp::PowAbs, Expr::var(Var::Y), Expr::num(p)),
            );
            let k = (p == 1.0).then_some(c.abs());
            CatalogEntry::Driver(Driver::from_expr(
                format!("abs_power({c},{p})"),
                expr,
                Some(c.abs()),
                k,
            )?)
        }
        "linear_lambda" => CatalogEntry::Family(DriverFamily::new(
            "linear_lambda",
            Expr::binary(BinaryOp::Mul, Expr::var(Var::Lam), Expr::var(Var::Y)),
            (0.0, 1.0),
            0.0,
            1.0,
            Some(1.0),
            None,
        )?),
        "remark33_shift" => CatalogEntry::Family(DriverFamily::new(
            "remark33_shift",
            Expr::binary(BinaryOp::Add, remark33_expr(), Expr::var(Var::Lam)),
            (0.0, 1.0),
            0.0,
            4.0,
            None,
            Some(1.0),
        )?),
        "remark33_abs" => CatalogEntry::Family(DriverFamily::new(
            "remark33_abs",
            Expr::binary(
                BinaryOp::Add,
                remark33_expr(),
                Expr::binary(
                    BinaryOp::Mul,
                    Expr::var(Var::Lam),
                    Expr::unary(UnaryOp::Abs, Expr::var(Var::Y)),
                ),
            ),
            (0.0, 1.0),
            0.0,
            4.0,
            None,
            None,
        )?),
        other => return Err(CatalogError::UnknownName(other.to_string())),
    };
    Ok(entry)
}

/// Parse `name`, `name(v1, v2)` or `name(k=v, ...)` into a lookup. Returns
/// `None` when the head is not a catalog name, so the caller can fall back
/// to reading the text as an expression.
pub fn lookup_spec(spec: &str) -> Option<Result<CatalogEntry, CatalogError>> {
    let spec = spec.trim();
    let (head, rest) = match spec.find('(') {
        Some(i) => (spec[..i].trim(), Some(&spec[i..])),
        None => (spec, None),
    };
    if !is_catalog_name(head) {
        return None;
    }
    let mut params = Params::new();
    if let Some(rest) = rest {
        let inner = match rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
            Some(inner) => inner,
            None => {
                return Some(Err(CatalogError::InvalidParameter {
                    name: head.to_string(),
                    reason: format!("malformed parameter list `{rest}`"),
                }))
            }
        };
        let order = positional(head);
        for (i, item) in inner.split(',').map(str::trim).filter(|s| !s.is_empty()).enumerate() {
            let (key, value) = match item.split_once('=') {
                Some((k, v)) => (k.trim().to_string(), v.trim()),
                None => match order.get(i) {
                    Some(k) => (k.to_string(), item),
                    None => {
                        return Some(Err(CatalogError::InvalidParameter {
                            name: head.to_string(),
                            reason: format!("too many parameters in `{spec}`"),
                        }))
                    }
                },
            };
            match value.parse::<f64>() {
                Ok(v) => {
                    params.insert(key, v);
                }
                Err(_) => {
                    return Some(Err(CatalogError::InvalidParameter {
                        name: head.to_string(),
                        reason: format!("`{value}` is not a number"),
                    }))
                }
            }
        }
    }
    Some(catalog_lookup(head, &params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kv: &[(&str, f64)]) -> Params {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn remark33_entry() {
        let d = catalog_lookup("remark33", &Params::new())
            .unwrap()
            .into_driver()
            .unwrap();
        assert_eq!(d.growth(), 3.0);
        assert_eq!(d.lipschitz(), None);
        assert_eq!(d.expr().unwrap().to_string(), "(3 * powabs(y, (2 / 3)))");
        approx::assert_abs_diff_eq!(d.eval(0.0, 8.0, 0.0).unwrap(), 12.0, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(d.eval(0.0, -8.0, 0.0).unwrap(), 12.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_entries() {
        let zero = catalog_lookup("linear", &params(&[("a", 0.0), ("b", 0.0)]))
            .unwrap()
            .into_driver()
            .unwrap();
        assert_eq!(zero.lipschitz(), Some(0.0));
        assert_eq!(zero.eval(0.3, 7.0, -2.0), Ok(0.0));

        let d = catalog_lookup("linear", &params(&[("a", 2.0), ("b", -1.0)]))
            .unwrap()
            .into_driver()
            .unwrap();
        assert_eq!(d.lipschitz(), Some(2.0));
        assert_eq!(d.eval(0.0, 1.0, 1.0), Ok(1.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            catalog_lookup("nope", &Params::new()),
            Err(CatalogError::UnknownName(_))
        ));
        assert!(matches!(
            catalog_lookup("linear", &params(&[("a", 1.0)])),
            Err(CatalogError::MissingParameter { param: "b", .. })
        ));
        assert!(matches!(
            catalog_lookup("abs_power", &params(&[("c", 1.0), ("p", 2.0)])),
            Err(CatalogError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn spec_strings() {
        let d = lookup_spec("linear(2,-1)").unwrap().unwrap().into_driver().unwrap();
        assert_eq!(d.lipschitz(), Some(2.0));
        let d = lookup_spec("linear(b=3, a=1)").unwrap().unwrap().into_driver().unwrap();
        assert_eq!(d.eval(0.0, 1.0, 1.0), Ok(4.0));
        assert!(lookup_spec("remark33").unwrap().is_ok());
        assert!(lookup_spec("3*y").is_none());
        assert!(lookup_spec("linear(1,2,3)").unwrap().is_err());
    }
}
