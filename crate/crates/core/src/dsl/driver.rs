use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::expr::{Bindings, EvalError, Expr, Var};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DriverError {
    #[error("variable `{var}` is not allowed in {context}")]
    ForeignVariable { var: &'static str, context: &'static str },
    #[error("linear-growth constant must be a nonnegative real, got {0}")]
    BadGrowth(f64),
    #[error("Lipschitz constant must be a nonnegative real, got {0}")]
    BadLipschitz(f64),
    #[error("driver `{0}` depends on (y, z); a linear-growth constant must be declared")]
    MissingGrowth(String),
    #[error("parameter {lam} outside family domain [{lo}, {hi}]")]
    OutsideDomain { lam: f64, lo: f64, hi: f64 },
    #[error("empty or reversed family domain [{0}, {1}]")]
    BadDomain(f64, f64),
}

/// Declared standing assumptions on a driver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Assumptions {
    /// `|g| <= A(1 + |y| + |z|)`
    pub linear_growth: bool,
    /// `g(., y, z)` square integrable in time for each `(y, z)`.
    pub square_integrable: bool,
    /// `g(t, ., .)` continuous.
    pub continuous: bool,
}

impl Default for Assumptions {
    fn default() -> Self {
        Assumptions {
            linear_growth: true,
            square_integrable: true,
            continuous: true,
        }
    }
}

type NativeFn = Arc<dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Body {
    Expr(Expr),
    Native {
        f: NativeFn,
        z_dim: usize,
        uses_y: bool,
        uses_z: bool,
    },
}

/// A deterministic generator `g(t, y, z)` with its declared constants.
#[derive(Clone)]
pub struct Driver {
    name: String,
    body: Body,
    growth: f64,
    lipschitz: Option<f64>,
    assumptions: Assumptions,
}

impl fmt::Debug for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Driver")
            .field("name", &self.name)
            .field("expr", &self.expr().map(|e| e.to_string()))
            .field("growth", &self.growth)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

fn check_constant(v: f64, err: fn(f64) -> DriverError) -> Result<f64, DriverError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(err(v))
    }
}

fn check_vars(expr: &Expr, allowed: &[Var], context: &'static str) -> Result<(), DriverError> {
    match expr.free_vars().into_iter().find(|v| !allowed.contains(v)) {
        Some(v) => Err(DriverError::ForeignVariable {
            var: v.name(),
            context,
        }),
        None => Ok(()),
    }
}

impl Driver {
    /// Build a driver from an expression in `t, y, z`.
    ///
    /// When `growth` is omitted it is only inferred for expressions without
    /// free variables (`A = |c|`). When `lipschitz` is omitted and the
    /// expression does not mention `y` or `z`, `K = 0` is recorded.
    pub fn from_expr(
        name: impl Into<String>,
        expr: Expr,
        growth: Option<f64>,
        lipschitz: Option<f64>,
    ) -> Result<Driver, DriverError> {
        let name = name.into();
        check_vars(&expr, &[Var::T, Var::Y, Var::Z], "a driver")?;
        let growth = match growth {
            Some(a) => check_constant(a, DriverError::BadGrowth)?,
            None if expr.free_vars().is_empty() => expr
                .evaluate(&Bindings::default())
                .map(f64::abs)
                .map_err(|_| DriverError::MissingGrowth(name.clone()))?,
            None => return Err(DriverError::MissingGrowth(name)),
        };
        let lipschitz = match lipschitz {
            Some(k) => Some(check_constant(k, DriverError::BadLipschitz)?),
            None if !expr.mentions(Var::Y) && !expr.mentions(Var::Z) => Some(0.0),
            None => None,
        };
        Ok(Driver {
            name,
            body: Body::Expr(expr),
            growth,
            lipschitz,
            assumptions: Assumptions::default(),
        })
    }

    /// A driver given by native code, with `z` of dimension `z_dim`.
    pub fn native<F>(
        name: impl Into<String>,
        z_dim: usize,
        growth: f64,
        lipschitz: Option<f64>,
        f: F,
    ) -> Result<Driver, DriverError>
    where
        F: Fn(f64, f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        let growth = check_constant(growth, DriverError::BadGrowth)?;
        let lipschitz = lipschitz
            .map(|k| check_constant(k, DriverError::BadLipschitz))
            .transpose()?;
        Ok(Driver {
            name: name.into(),
            body: Body::Native {
                f: Arc::new(f),
                z_dim,
                uses_y: true,
                uses_z: z_dim > 0,
            },
            growth,
            lipschitz,
            assumptions: Assumptions::default(),
        })
    }

    /// Declare that a native driver ignores `y` and/or `z`, so envelopes can
    /// search over fewer coordinates.
    pub fn with_dependence(mut self, y: bool, z: bool) -> Self {
        if let Body::Native { uses_y, uses_z, .. } = &mut self.body {
            *uses_y = y;
            *uses_z = z;
        }
        self
    }

    pub fn with_assumptions(mut self, assumptions: Assumptions) -> Self {
        self.assumptions = assumptions;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn expr(&self) -> Option<&Expr> {
        match &self.body {
            Body::Expr(e) => Some(e),
            Body::Native { .. } => None,
        }
    }

    /// Linear-growth constant `A`.
    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn assumptions(&self) -> Assumptions {
        self.assumptions
    }

    pub fn z_dim(&self) -> usize {
        match &self.body {
            Body::Expr(_) => 1,
            Body::Native { z_dim, .. } => *z_dim,
        }
    }

    pub fn depends_on_y(&self) -> bool {
        match &self.body {
            Body::Expr(e) => e.mentions(Var::Y),
            Body::Native { uses_y, .. } => *uses_y,
        }
    }

    pub fn depends_on_z(&self) -> bool {
        match &self.body {
            Body::Expr(e) => e.mentions(Var::Z),
            Body::Native { uses_z, .. } => *uses_z,
        }
    }

    pub fn eval(&self, t: f64, y: f64, z: f64) -> Result<f64, EvalError> {
        self.eval_vec(t, y, &[z])
    }

    pub fn eval_vec(&self, t: f64, y: f64, z: &[f64]) -> Result<f64, EvalError> {
        match &self.body {
            Body::Expr(e) => {
                let z = z.first().copied().unwrap_or(0.0);
                e.evaluate(&Bindings::driver(t, y, z))
            }
            Body::Native { f, .. } => {
                let v = f(t, y, z);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(EvalError::NonFinite("native driver"))
                }
            }
        }
    }
}

/// A driver indexed by a real parameter `lam` ranging over an interval.
#[derive(Clone, Debug)]
pub struct DriverFamily {
    name: String,
    expr: Expr,
    domain: (f64, f64),
    lam0: f64,
    growth: f64,
    lipschitz: Option<f64>,
    modulus: Option<f64>,
}

impl DriverFamily {
    /// `modulus`, when given, is a constant `L` with
    /// `sup_{y,z} |g^lam - g^lam0| <= L |lam - lam0|`.
    pub fn new(
        name: impl Into<String>,
        expr: Expr,
        domain: (f64, f64),
        lam0: f64,
        growth: f64,
        lipschitz: Option<f64>,
        modulus: Option<f64>,
    ) -> Result<DriverFamily, DriverError> {
        check_vars(&expr, &[Var::T, Var::Y, Var::Z, Var::Lam], "a driver family")?;
        if !(domain.0 <= domain.1) {
            return Err(DriverError::BadDomain(domain.0, domain.1));
        }
        let family = DriverFamily {
            name: name.into(),
            expr,
            domain,
            lam0,
            growth: check_constant(growth, DriverError::BadGrowth)?,
            lipschitz: lipschitz
                .map(|k| check_constant(k, DriverError::BadLipschitz))
                .transpose()?,
            modulus: modulus
                .map(|l| check_constant(l, DriverError::BadLipschitz))
                .transpose()?,
        };
        family.check_domain(lam0)?;
        Ok(family)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn lam0(&self) -> f64 {
        self.lam0
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn modulus(&self) -> Option<f64> {
        self.modulus
    }

    pub fn check_domain(&self, lam: f64) -> Result<(), DriverError> {
        let (lo, hi) = self.domain;
        if lam >= lo && lam <= hi {
            Ok(())
        } else {
            Err(DriverError::OutsideDomain { lam, lo, hi })
        }
    }

    /// The fixed-`lam` driver; shares the family's `A` and `K`.
    pub fn slice(&self, lam: f64) -> Result<Driver, DriverError> {
        self.check_domain(lam)?;
        let expr = self.expr.substitute(Var::Lam, lam);
        let name = format!("{}[lam={}]", self.name, lam);
        Driver::from_expr(name, expr, Some(self.growth), self.lipschitz)
    }
}

/// Sampling box for the audits.
#[derive(Clone, Copy, Debug)]
pub struct AuditBox {
    pub horizon: f64,
    pub y_max: f64,
    pub z_max: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for AuditBox {
    fn default() -> Self {
        AuditBox {
            horizon: 1.0,
            y_max: 50.0,
            z_max: 50.0,
            samples: 10_000,
            seed: 0,
        }
    }
}

/// Largest excess of `|g|` over `A(1 + |y| + |z|)` seen on the box; `<= 0`
/// means no violation.
pub fn audit_growth(driver: &Driver, bx: &AuditBox) -> Result<f64, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(bx.seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..bx.samples {
        let t = rng.gen_range(0.0..=bx.horizon);
        let y = rng.gen_range(-bx.y_max..=bx.y_max);
        let z = rng.gen_range(-bx.z_max..=bx.z_max);
        let g = driver.eval(t, y, z)?;
        worst = worst.max(g.abs() - driver.growth() * (1.0 + y.abs() + z.abs()));
    }
    Ok(worst)
}

/// Largest excess of `|g(t,y1,z1) - g(t,y2,z2)|` over the declared
/// `K(|y1-y2| + |z1-z2|)`; `None` when no Lipschitz constant is declared.
pub fn audit_lipschitz(driver: &Driver, bx: &AuditBox) -> Result<Option<f64>, EvalError> {
    let Some(k) = driver.lipschitz() else {
        return Ok(None);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(bx.seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..bx.samples {
        let t = rng.gen_range(0.0..=bx.horizon);
        let (y1, y2) = (
            rng.gen_range(-bx.y_max..=bx.y_max),
            rng.gen_range(-bx.y_max..=bx.y_max),
        );
        let (z1, z2) = (
            rng.gen_range(-bx.z_max..=bx.z_max),
            rng.gen_range(-bx.z_max..=bx.z_max),
        );
        let gap = (driver.eval(t, y1, z1)? - driver.eval(t, y2, z2)?).abs();
        worst = worst.max(gap - k * ((y1 - y2).abs() + (z1 - z2).abs()));
    }
    Ok(Some(worst))
}
