//! Turn a config into resolved library objects, collecting every problem
//! found along the way.

use std::fmt;

use bsdelab_core::dsl::{lookup_spec, parse, Var};
use bsdelab_core::solver::{default_schedule, steps_for};
use bsdelab_core::{Driver, DriverFamily, Lattice, Scheme, TerminalValue};
use serde::Serialize;

use crate::config::{Command, ExperimentConfig, Grid};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Default lattice size for a counterexample curve.
pub const COUNTEREXAMPLE_STEPS: usize = 256;
/// Default envelope grid step for `envelope`.
pub const ENVELOPE_H: f64 = 1e-3;
/// Smallest lattice picked for a Lipschitz solve without `N`.
pub const MIN_LIPSCHITZ_STEPS: usize = 64;

pub fn default_ns() -> Vec<u64> {
    (0..=10).map(|i| 1u64 << i).collect()
}

#[derive(Clone, Debug)]
pub struct Plan {
    pub lattice: Lattice,
    pub driver: Option<Driver>,
    pub family: Option<DriverFamily>,
    pub terminal: Option<TerminalValue>,
    pub schedule: Vec<f64>,
    pub xi_seq: Vec<TerminalValue>,
    pub lambdas: Vec<f64>,
    pub ns: Vec<u64>,
    pub grid: Grid,
    pub h: Option<f64>,
}

impl Plan {
    pub fn max_m(&self) -> Option<f64> {
        self.schedule.last().copied()
    }
}

pub fn resolve_driver(
    source: &str,
    growth: Option<f64>,
    lipschitz: Option<f64>,
) -> Result<Driver, String> {
    if let Some(entry) = lookup_spec(source) {
        return entry
            .map_err(|e| e.to_string())?
            .into_driver()
            .ok_or_else(|| format!("`{source}` is a driver family, not a driver"));
    }
    let expr = parse(source).map_err(|e| e.to_string())?;
    Driver::from_expr(source.trim(), expr, growth, lipschitz).map_err(|e| match e {
        bsdelab_core::dsl::DriverError::MissingGrowth(_) => {
            "declare a linear-growth constant A for this expression".to_string()
        }
        other => other.to_string(),
    })
}

pub fn resolve_family(
    source: &str,
    growth: Option<f64>,
    lipschitz: Option<f64>,
    lam0: Option<f64>,
    domain: Option<[f64; 2]>,
) -> Result<DriverFamily, String> {
    if let Some(entry) = lookup_spec(source) {
        return entry
            .map_err(|e| e.to_string())?
            .into_family()
            .ok_or_else(|| format!("`{source}` is a driver, not a family"));
    }
    let expr = parse(source).map_err(|e| e.to_string())?;
    let growth = growth.ok_or("declare a linear-growth constant A for this family")?;
    let [lo, hi] = domain.unwrap_or([0.0, 1.0]);
    DriverFamily::new(
        source.trim(),
        expr,
        (lo, hi),
        lam0.unwrap_or(lo),
        growth,
        lipschitz,
        None,
    )
    .map_err(|e| e.to_string())
}

fn resolve_terminal(source: &str, allow_lam: bool) -> Result<TerminalValue, String> {
    let tv = TerminalValue::parse(source).map_err(|e| e.to_string())?;
    if let TerminalValue::Expr(e) = &tv {
        if !allow_lam && e.mentions(Var::Lam) {
            return Err("`lam` is only allowed with a family perturbation".into());
        }
    }
    Ok(tv)
}

fn check_schedule(schedule: &[f64], growth: f64, out: &mut Vec<Diagnostic>) {
    if schedule.is_empty() {
        out.push(Diagnostic::new("m_schedule", "must not be empty"));
        return;
    }
    if schedule.windows(2).any(|w| !(w[1] > w[0])) {
        out.push(Diagnostic::new("m_schedule", "must be strictly increasing"));
    }
    if let Some(m) = schedule.iter().find(|&&m| !(m > growth)) {
        out.push(Diagnostic::new(
            "m_schedule",
            format!("m = {m:?} must exceed A = {growth:?}"),
        ));
    }
}

/// Resolve everything `run` needs, or report every problem found.
pub fn plan(config: &ExperimentConfig) -> Result<Plan, Vec<Diagnostic>> {
    let mut out = Vec::new();
    let cmd = config.command;

    let horizon = config.horizon;
    if !(horizon.is_finite() && horizon > 0.0) {
        out.push(Diagnostic::new("T", format!("must be positive, got {horizon:?}")));
    }
    if config.steps == Some(0) {
        out.push(Diagnostic::new("N", "must be at least 1"));
    }
    if !(config.threshold > 0.0) {
        out.push(Diagnostic::new("threshold", "must be positive"));
    }
    if config.sampling.sample_count == 0 {
        out.push(Diagnostic::new("sampling.sample_count", "must be at least 1"));
    }
    if let Some(h) = config.h {
        if !(h.is_finite() && h > 0.0) {
            out.push(Diagnostic::new("h", format!("must be positive, got {h:?}")));
        }
    }
    for (name, v) in [("A", config.growth), ("K", config.lipschitz)] {
        if let Some(v) = v {
            if !(v.is_finite() && v >= 0.0) {
                out.push(Diagnostic::new(name, format!("must be nonnegative, got {v:?}")));
            }
        }
    }

    let perturbation = config.perturbation.clone().unwrap_or(crate::config::Perturbation {
        xi: Vec::new(),
        family: None,
        lambdas: Vec::new(),
        lam0: None,
        lam_domain: None,
    });
    let family_mode = cmd == Command::Dependence && perturbation.family.is_some();

    let mut driver = None;
    let mut family = None;
    if cmd != Command::Counterexample {
        if family_mode {
            match resolve_family(
                perturbation.family.as_deref().unwrap_or_default(),
                config.growth,
                config.lipschitz,
                perturbation.lam0,
                perturbation.lam_domain,
            ) {
                Ok(f) => family = Some(f),
                Err(e) => out.push(Diagnostic::new("perturbation.family", e)),
            }
        } else {
            match resolve_driver(&config.driver, config.growth, config.lipschitz) {
                Ok(d) => driver = Some(d),
                Err(e) => out.push(Diagnostic::new("driver", e)),
            }
        }
    }

    let mut terminal = None;
    if matches!(cmd, Command::Solve | Command::Uniqueness | Command::Dependence) {
        match resolve_terminal(&config.terminal, family_mode) {
            Ok(t) => terminal = Some(t),
            Err(e) => out.push(Diagnostic::new("terminal", e)),
        }
    }

    let mut xi_seq = Vec::new();
    let mut lambdas = Vec::new();
    if cmd == Command::Dependence {
        if family_mode {
            if !perturbation.xi.is_empty() {
                out.push(Diagnostic::new(
                    "perturbation",
                    "give either xi or family + lambdas, not both",
                ));
            }
            if perturbation.lambdas.is_empty() {
                out.push(Diagnostic::new("perturbation.lambdas", "must not be empty"));
            }
            if let Some(f) = &family {
                for &lam in &perturbation.lambdas {
                    if let Err(e) = f.check_domain(lam) {
                        out.push(Diagnostic::new("perturbation.lambdas", e.to_string()));
                    }
                }
            }
            lambdas = perturbation.lambdas.clone();
        } else if perturbation.xi.is_empty() {
            out.push(Diagnostic::new(
                "perturbation",
                "needs a list of xi values or a family with lambdas",
            ));
        } else {
            for (i, src) in perturbation.xi.iter().enumerate() {
                match resolve_terminal(src, false) {
                    Ok(t) => xi_seq.push(t),
                    Err(e) => out.push(Diagnostic::new(format!("perturbation.xi[{i}]"), e)),
                }
            }
        }
    }

    let growth = driver
        .as_ref()
        .map(Driver::growth)
        .or(family.as_ref().map(DriverFamily::growth));
    let lipschitz_solve =
        cmd == Command::Solve && config.m_schedule.is_none() && driver.as_ref().is_some_and(|d| d.lipschitz().is_some());
    let needs_schedule = matches!(
        cmd,
        Command::Solve | Command::Envelope | Command::Dependence | Command::Uniqueness
    ) && !lipschitz_solve;

    let mut schedule = Vec::new();
    if needs_schedule {
        if let Some(a) = growth {
            schedule = config.m_schedule.clone().unwrap_or_else(|| default_schedule(a));
            check_schedule(&schedule, a, &mut out);
        } else if let Some(s) = &config.m_schedule {
            schedule = s.clone();
        }
    }

    let steps = match (config.steps, cmd) {
        (Some(n), _) => n,
        (None, Command::Counterexample) => COUNTEREXAMPLE_STEPS,
        (None, _) if lipschitz_solve => {
            let k = driver.as_ref().and_then(Driver::lipschitz).unwrap_or(0.0);
            steps_for(horizon.max(0.0), k).max(MIN_LIPSCHITZ_STEPS)
        }
        (None, _) => match schedule.last() {
            Some(&m) if m.is_finite() && horizon.is_finite() => steps_for(horizon.max(0.0), m),
            _ => MIN_LIPSCHITZ_STEPS,
        },
    };

    if steps > 0 && horizon.is_finite() && horizon > 0.0 {
        let dt = horizon / steps as f64;
        if needs_schedule && cmd != Command::Envelope {
            if let Some(&m) = schedule.last() {
                let r = m * dt;
                if r > 0.5 {
                    out.push(Diagnostic::new("m_schedule", format!("m·dt = {r:?} > 0.5")));
                }
            }
        }
        if lipschitz_solve {
            let k = driver.as_ref().and_then(Driver::lipschitz).unwrap_or(0.0);
            let r = k * dt;
            match config.scheme {
                Scheme::Explicit if r > 0.5 => {
                    out.push(Diagnostic::new("N", format!("K·dt = {r:?} > 0.5")))
                }
                Scheme::Implicit if r >= 1.0 => {
                    out.push(Diagnostic::new("N", format!("K·dt = {r:?} >= 1")))
                }
                _ => {}
            }
        }
    }

    let grid = config.grid.clone().unwrap_or_default();
    if cmd == Command::Envelope {
        if !(grid.y_step > 0.0) {
            out.push(Diagnostic::new("grid.y_step", "must be positive"));
        }
        if !(grid.y_max >= grid.y_min) {
            out.push(Diagnostic::new("grid.y_max", "must not be below grid.y_min"));
        }
        if grid.z.is_empty() {
            out.push(Diagnostic::new("grid.z", "must not be empty"));
        }
        if !(grid.t >= 0.0 && grid.t <= horizon) {
            out.push(Diagnostic::new("grid.t", format!("must lie in [0, {horizon:?}]")));
        }
    }

    let ns = if config.ns.is_empty() {
        default_ns()
    } else {
        config.ns.clone()
    };
    if cmd == Command::Counterexample && ns.contains(&0) {
        out.push(Diagnostic::new("ns", "indices must be at least 1"));
    }

    if !out.is_empty() {
        return Err(out);
    }
    let lattice = Lattice::new(horizon, steps).map_err(|e| vec![Diagnostic::new("N", e.to_string())])?;
    Ok(Plan {
        lattice,
        driver,
        family,
        terminal,
        schedule,
        xi_seq,
        lambdas,
        ns,
        grid,
        h: config.h,
    })
}

/// Every problem `run` would stop on; empty when the config is runnable.
pub fn validate(config: &ExperimentConfig) -> Vec<Diagnostic> {
    plan(config).err().unwrap_or_default()
}
