//! Backward induction on the Bernoulli lattice.
//!
//! At node `(k, j)` with children `y-`, `y+`:
//!
//! ```text
//! z(k,j) = (y+ - y-) / (2 sqrt(dt))
//! explicit: y(k,j) = E + g(t_k, E, z) dt            E = (y- + y+) / 2
//! implicit: y(k,j) = E + g(t_k, y(k,j), z) dt       (fixed point)
//! ```
//!
//! The explicit scheme requires `K dt <= 1/2` and the implicit one
//! `K dt < 1`, where `K` is the driver's Lipschitz constant (`m` for an
//! envelope driver).

use rayon::prelude::*;
use thiserror::Error;

use crate::dsl::{parse, Bindings, Driver, EvalError, Expr, ParseError, Var};
use crate::envelope::{EnvelopeDriver, EnvelopeError, EnvelopeKind};
use crate::lattice::{cond_expect, martingale_coeff, AdaptedField, Lattice, LatticeError};

pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITERS: usize = 200;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SolverError {
    #[error("driver `{0}` has no declared Lipschitz constant")]
    MissingLipschitz(String),
    #[error("{scheme} scheme needs K*dt {bound}, got K*dt = {value}")]
    StepTooLarge {
        scheme: Scheme,
        value: f64,
        bound: &'static str,
    },
    #[error("implicit step did not converge at node ({k}, {j}) after {FIXED_POINT_MAX_ITERS} iterations")]
    NoConvergence { k: usize, j: usize },
    #[error("non-finite value at node ({k}, {j})")]
    NonFinite { k: usize, j: usize },
    #[error("invalid m schedule: {0}")]
    Schedule(String),
    #[error("terminal value may only use `w` (and `lam` before substitution), found `{0}`")]
    TerminalVariable(&'static str),
    #[error("terminal value: {0}")]
    TerminalParse(ParseError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Explicit,
    Implicit,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Explicit => "explicit",
            Scheme::Implicit => "implicit",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "explicit" => Ok(Scheme::Explicit),
            "implicit" => Ok(Scheme::Implicit),
            other => Err(format!("unknown scheme `{other}` (explicit | implicit)")),
        }
    }
}

/// Terminal condition `xi = f(W_T)`.
#[derive(Clone, Debug, PartialEq)]
pub enum TerminalValue {
    Constant(f64),
    Expr(Expr),
}

impl TerminalValue {
    pub fn constant(c: f64) -> Self {
        TerminalValue::Constant(c)
    }

    /// `W_T` itself.
    pub fn brownian() -> Self {
        TerminalValue::Expr(Expr::var(Var::W))
    }

    pub fn from_expr(expr: Expr) -> Result<Self, SolverError> {
        if let Some(v) = expr
            .free_vars()
            .into_iter()
            .find(|v| !matches!(v, Var::W | Var::Lam))
        {
            return Err(SolverError::TerminalVariable(v.name()));
        }
        if expr.free_vars().is_empty() {
            if let Ok(c) = expr.evaluate(&Bindings::default()) {
                return Ok(TerminalValue::Constant(c));
            }
        }
        Ok(TerminalValue::Expr(expr))
    }

    pub fn parse(source: &str) -> Result<Self, SolverError> {
        Self::from_expr(parse(source).map_err(SolverError::TerminalParse)?)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TerminalValue::Constant(_))
    }

    /// Fix the family parameter.
    pub fn with_lam(&self, lam: f64) -> Self {
        match self {
            TerminalValue::Constant(_) => self.clone(),
            TerminalValue::Expr(e) => Self::from_expr(e.substitute(Var::Lam, lam))
                .expect("substitution cannot introduce variables"),
        }
    }

    pub fn eval(&self, w: f64) -> Result<f64, EvalError> {
        match self {
            TerminalValue::Constant(c) => Ok(*c),
            TerminalValue::Expr(e) => e.evaluate(&Bindings::terminal(w)),
        }
    }

    /// Values on the terminal slice.
    pub fn values(&self, lattice: &Lattice) -> Result<Vec<f64>, EvalError> {
        let n = lattice.steps();
        (0..=n).map(|j| self.eval(lattice.w(n, j))).collect()
    }
}

impl std::fmt::Display for TerminalValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TerminalValue::Constant(c) => write!(f, "{c}"),
            TerminalValue::Expr(e) => write!(f, "{e}"),
        }
    }
}

/// Anything the backward induction can use as a generator.
pub trait Generator: Sync {
    fn value(&self, t: f64, y: f64, z: f64) -> Result<f64, SolverError>;
    fn lipschitz(&self) -> Option<f64>;
    fn label(&self) -> String;
    fn envelope(&self) -> Option<(EnvelopeKind, f64)> {
        None
    }
}

impl Generator for Driver {
    fn value(&self, t: f64, y: f64, z: f64) -> Result<f64, SolverError> {
        Ok(self.eval(t, y, z)?)
    }

    fn lipschitz(&self) -> Option<f64> {
        Driver::lipschitz(self)
    }

    fn label(&self) -> String {
        self.name().to_string()
    }
}

impl Generator for EnvelopeDriver {
    fn value(&self, t: f64, y: f64, z: f64) -> Result<f64, SolverError> {
        Ok(self.eval(t, y, z)?)
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.m())
    }

    fn label(&self) -> String {
        self.name()
    }

    fn envelope(&self) -> Option<(EnvelopeKind, f64)> {
        Some((self.kind(), self.m()))
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SolveMeta {
    pub driver: String,
    pub scheme: Scheme,
    pub m: Option<f64>,
    pub kind: Option<EnvelopeKind>,
}

/// `(y, z)` on the lattice: `y` on steps `0..=N`, `z` on `0..N`.
#[derive(Clone, Debug)]
pub struct SolutionField {
    pub y: AdaptedField,
    pub z: AdaptedField,
    pub lattice: Lattice,
    pub meta: SolveMeta,
}

impl SolutionField {
    /// `y(0, root)`.
    pub fn y0(&self) -> f64 {
        self.y.get(0, 0)
    }
}

fn check_step(scheme: Scheme, k: f64, dt: f64) -> Result<(), SolverError> {
    let value = k * dt;
    let ok = match scheme {
        Scheme::Explicit => value <= 0.5,
        Scheme::Implicit => value < 1.0,
    };
    if ok {
        Ok(())
    } else {
        Err(SolverError::StepTooLarge {
            scheme,
            value,
            bound: match scheme {
                Scheme::Explicit => "<= 1/2",
                Scheme::Implicit => "< 1",
            },
        })
    }
}

/// Backward induction with an arbitrary generator. Checks the step
/// condition against the generator's Lipschitz constant.
pub fn solve_with(
    lattice: &Lattice,
    gen: &dyn Generator,
    xi: &TerminalValue,
    scheme: Scheme,
) -> Result<SolutionField, SolverError> {
    let k = gen
        .lipschitz()
        .ok_or_else(|| SolverError::MissingLipschitz(gen.label()))?;
    check_step(scheme, k, lattice.dt())?;

    let n = lattice.steps();
    let dt = lattice.dt();
    let sqrt_dt = lattice.sqrt_dt();
    let mut y = AdaptedField::zeros(n);
    let mut z = AdaptedField::zeros(n.saturating_sub(1));
    y.slice_mut(n).copy_from_slice(&xi.values(lattice)?);
    if let Some((j, _)) = y.slice(n).iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(SolverError::NonFinite { k: n, j });
    }

    for k in (0..n).rev() {
        let t = lattice.time(k);
        let next = y.slice(k + 1).to_vec();
        for j in 0..=k {
            let (down, up) = (next[j], next[j + 1]);
            let e = cond_expect(down, up);
            let zk = martingale_coeff(down, up, sqrt_dt);
            let yk = match scheme {
                Scheme::Explicit => e + gen.value(t, e, zk)? * dt,
                Scheme::Implicit => implicit_step(gen, t, e, zk, dt, k, j)?,
            };
            if !yk.is_finite() {
                return Err(SolverError::NonFinite { k, j });
            }
            y.slice_mut(k)[j] = yk;
            z.slice_mut(k)[j] = zk;
        }
    }

    let (m, kind) = match gen.envelope() {
        Some((kind, m)) => (Some(m), Some(kind)),
        None => (None, None),
    };
    Ok(SolutionField {
        y,
        z,
        lattice: *lattice,
        meta: SolveMeta {
            driver: gen.label(),
            scheme,
            m,
            kind,
        },
    })
}

fn implicit_step(
    gen: &dyn Generator,
    t: f64,
    e: f64,
    z: f64,
    dt: f64,
    k: usize,
    j: usize,
) -> Result<f64, SolverError> {
    let mut y = e;
    for _ in 0..FIXED_POINT_MAX_ITERS {
        let next = e + gen.value(t, y, z)? * dt;
        if !next.is_finite() {
            return Err(SolverError::NonFinite { k, j });
        }
        if (next - y).abs() <= FIXED_POINT_TOL * y.abs().max(1.0) {
            return Ok(next);
        }
        y = next;
    }
    Err(SolverError::NoConvergence { k, j })
}

/// Unique solution for a driver with declared Lipschitz constant.
pub fn solve_lipschitz(
    lattice: &Lattice,
    driver: &Driver,
    xi: &TerminalValue,
    scheme: Scheme,
) -> Result<SolutionField, SolverError> {
    solve_with(lattice, driver, xi, scheme)
}

/// Solution driven by `lower_m` or `upper_m` of `base`, with the envelope
/// grid step tied to `dt`.
pub fn solve_envelope(
    lattice: &Lattice,
    base: &Driver,
    m: f64,
    kind: EnvelopeKind,
    xi: &TerminalValue,
    scheme: Scheme,
) -> Result<SolutionField, SolverError> {
    let env = EnvelopeDriver::new(base.clone(), m, kind, lattice.dt())?;
    solve_with(lattice, &env, xi, scheme)
}

#[derive(Clone, Debug)]
pub struct PicardOutcome {
    pub field: SolutionField,
    /// Sup-norm gap between consecutive iterates, one entry per sweep.
    pub gaps: Vec<f64>,
}

/// Successive substitution: sweep `n+1` evaluates the driver at the
/// previous iterate and solves the resulting linear backward recursion.
/// The fixed point is the implicit-scheme solution.
pub fn picard_iterate(
    lattice: &Lattice,
    driver: &Driver,
    xi: &TerminalValue,
    iters: usize,
) -> Result<PicardOutcome, SolverError> {
    if driver.lipschitz().is_none() {
        return Err(SolverError::MissingLipschitz(driver.name().to_string()));
    }
    let n = lattice.steps();
    let dt = lattice.dt();
    let sqrt_dt = lattice.sqrt_dt();
    let terminal = xi.values(lattice)?;
    let mut y = AdaptedField::zeros(n);
    let mut z = AdaptedField::zeros(n.saturating_sub(1));
    let mut gaps = Vec::with_capacity(iters);

    for _ in 0..iters {
        let mut y_next = AdaptedField::zeros(n);
        let mut z_next = AdaptedField::zeros(n.saturating_sub(1));
        y_next.slice_mut(n).copy_from_slice(&terminal);
        for k in (0..n).rev() {
            let t = lattice.time(k);
            for j in 0..=k {
                let (down, up) = (y_next.get(k + 1, j), y_next.get(k + 1, j + 1));
                let g = driver.eval(t, y.get(k, j), z.get(k, j))?;
                let v = cond_expect(down, up) + g * dt;
                if !v.is_finite() {
                    return Err(SolverError::NonFinite { k, j });
                }
                y_next.slice_mut(k)[j] = v;
                z_next.slice_mut(k)[j] = martingale_coeff(down, up, sqrt_dt);
            }
        }
        gaps.push(sup_gap(&y, &y_next).max(sup_gap(&z, &z_next)));
        y = y_next;
        z = z_next;
    }

    Ok(PicardOutcome {
        field: SolutionField {
            y,
            z,
            lattice: *lattice,
            meta: SolveMeta {
                driver: driver.name().to_string(),
                scheme: Scheme::Implicit,
                m: None,
                kind: None,
            },
        },
        gaps,
    })
}

/// `max |a - b|` over all nodes of two fields of equal shape.
pub fn sup_gap(a: &AdaptedField, b: &AdaptedField) -> f64 {
    a.slices()
        .zip(b.slices())
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// `{A+1, 2(A+1), 4(A+1), 8(A+1)}`.
pub fn default_schedule(growth: f64) -> Vec<f64> {
    let base = growth + 1.0;
    vec![base, 2.0 * base, 4.0 * base, 8.0 * base]
}

/// Smallest power of two `N` with `max_m * T / N <= 1/2`.
pub fn steps_for(horizon: f64, max_m: f64) -> usize {
    let mut n = 1usize;
    while max_m * horizon / n as f64 > 0.5 {
        n *= 2;
    }
    n
}

fn check_schedule(lattice: &Lattice, base: &Driver, schedule: &[f64]) -> Result<(), SolverError> {
    if schedule.is_empty() {
        return Err(SolverError::Schedule("empty".into()));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SolverError::Schedule("must be strictly increasing".into()));
    }
    if let Some(&m) = schedule.iter().find(|&&m| !(m > base.growth())) {
        return Err(SolverError::Schedule(format!(
            "m = {m} does not exceed A = {}",
            base.growth()
        )));
    }
    let last = schedule[schedule.len() - 1];
    if last * lattice.dt() > 0.5 {
        return Err(SolverError::Schedule(format!(
            "m*dt = {} > 0.5 for m = {last}",
            last * lattice.dt()
        )));
    }
    Ok(())
}

fn extremal(
    lattice: &Lattice,
    base: &Driver,
    xi: &TerminalValue,
    schedule: &[f64],
    kind: EnvelopeKind,
    scheme: Scheme,
) -> Result<Vec<SolutionField>, SolverError> {
    check_schedule(lattice, base, schedule)?;
    schedule
        .par_iter()
        .map(|&m| solve_envelope(lattice, base, m, kind, xi, scheme))
        .collect()
}

/// Solutions driven by `lower_m` for each `m` of the schedule; the last one
/// approximates the minimal solution.
pub fn minimal_solution(
    lattice: &Lattice,
    base: &Driver,
    xi: &TerminalValue,
    schedule: &[f64],
    scheme: Scheme,
) -> Result<Vec<SolutionField>, SolverError> {
    extremal(lattice, base, xi, schedule, EnvelopeKind::Lower, scheme)
}

/// Mirror of [`minimal_solution`] with `upper_m`.
pub fn maximal_solution(
    lattice: &Lattice,
    base: &Driver,
    xi: &TerminalValue,
    schedule: &[f64],
    scheme: Scheme,
) -> Result<Vec<SolutionField>, SolverError> {
    extremal(lattice, base, xi, schedule, EnvelopeKind::Upper, scheme)
}

/// Empirical `O(dt)` error proxy: `(sup |y_explicit - y_implicit|)^2`,
/// squared so it is comparable with sup-distances.
pub fn scheme_error(
    lattice: &Lattice,
    gen: &dyn Generator,
    xi: &TerminalValue,
) -> Result<f64, SolverError> {
    let explicit = solve_with(lattice, gen, xi, Scheme::Explicit)?;
    let implicit = solve_with(lattice, gen, xi, Scheme::Implicit)?;
    Ok(sup_gap(&explicit.y, &implicit.y).powi(2))
}
