//! Continuous-dependence experiments.
//!
//! The central quantity is the lattice analogue of `E[sup_t |y1_t - y2_t|^2]`:
//! for each path the largest squared gap over steps `0..=N`, averaged over
//! paths. It is computed exactly by walking the tree when `N` is small,
//! from a seeded path sample otherwise, and without any path work when the
//! gap is deterministic (constant on every time slice).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::dsl::{Driver, DriverError, DriverFamily, EvalError};
use crate::envelope::EnvelopeKind;
use crate::lattice::{AdaptedField, Lattice, LatticeError, MAX_ENUM_STEPS};
use crate::solver::{
    scheme_error, solve_envelope, solve_lipschitz, Scheme, SolutionField, SolverError,
    TerminalValue,
};
use crate::EnvelopeDriver;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum LabError {
    #[error("fields live on different lattices")]
    MismatchedLattice,
    #[error("t = {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("counterexample index must be >= 1")]
    BadIndex,
    #[error("m*dt = {0} > 0.5")]
    IndexTooLarge(f64),
    #[error("sampling needs a positive sample count")]
    NoSamples,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Which extremal solution stands in for "any solution".
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Min,
    Max,
}

impl Selector {
    pub fn kind(self) -> EnvelopeKind {
        match self {
            Selector::Min => EnvelopeKind::Lower,
            Selector::Max => EnvelopeKind::Upper,
        }
    }
}

impl std::str::FromStr for Selector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "min" => Ok(Selector::Min),
            "max" => Ok(Selector::Max),
            other => Err(format!("unknown selector `{other}` (min | max)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    Converges,
    DivergesTo(f64),
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Converges => f.write_str("converges"),
            Verdict::DivergesTo(v) => write!(f, "diverges-to: {v}"),
            Verdict::Inconclusive => f.write_str("inconclusive"),
        }
    }
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Relative spread allowed among the last three distances of a plateau.
pub const PLATEAU_SPREAD: f64 = 0.05;
/// A plateau must sit this many scheme errors above zero.
pub const PLATEAU_MARGIN: f64 = 10.0;

/// `converges`: the last distance is below the first and below `threshold`.
/// `diverges-to`: the last three agree within 5% and exceed ten scheme
/// errors. Anything else is inconclusive.
pub fn classify(distances: &[f64], threshold: f64, scheme_error: f64) -> Verdict {
    let (Some(&first), Some(&last)) = (distances.first(), distances.last()) else {
        return Verdict::Inconclusive;
    };
    if distances.len() >= 2 && last < first && last < threshold {
        return Verdict::Converges;
    }
    if distances.len() >= 3 {
        let tail = &distances[distances.len() - 3..];
        let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().copied().fold(0.0, f64::max);
        if lo > PLATEAU_MARGIN * scheme_error && lo > 0.0 && hi <= lo * (1.0 + PLATEAU_SPREAD) {
            return Verdict::DivergesTo(last);
        }
    }
    Verdict::Inconclusive
}

#[derive(Clone, Debug, PartialEq)]
pub struct DependenceReport {
    pub labels: Vec<String>,
    pub perturbations: Vec<f64>,
    pub distances: Vec<f64>,
    pub verdict: Verdict,
    /// distance / perturbation (or / the a priori right-hand side); `None`
    /// when the denominator vanishes.
    pub ratios: Vec<Option<f64>>,
    /// For parameter curves: `E|dxi|^2 + E int |dg|^2 dt` along the base solution.
    pub rhs: Vec<f64>,
    pub scheme_error: f64,
    pub threshold: f64,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    perturbations: &'a [f64],
    distances: &'a [f64],
    verdict: Verdict,
    ratios: &'a [Option<f64>],
}

impl Serialize for DependenceReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ReportJson {
            perturbations: &self.perturbations,
            distances: &self.distances,
            verdict: self.verdict,
            ratios: &self.ratios,
        }
        .serialize(s)
    }
}

impl DependenceReport {
    fn assemble(
        labels: Vec<String>,
        perturbations: Vec<f64>,
        distances: Vec<f64>,
        denominators: &[f64],
        rhs: Vec<f64>,
        scheme_error: f64,
        threshold: f64,
    ) -> Self {
        let ratios = distances
            .iter()
            .zip(denominators)
            .map(|(d, p)| (*p > 0.0).then(|| d / p))
            .collect();
        DependenceReport {
            verdict: classify(&distances, threshold, scheme_error),
            labels,
            perturbations,
            distances,
            ratios,
            rhs,
            scheme_error,
            threshold,
        }
    }

    /// Distances never increase along the sequence.
    pub fn is_monotone_decreasing(&self) -> bool {
        self.distances.windows(2).all(|w| w[1] <= w[0])
    }

    /// Largest finite ratio, an empirical a priori constant.
    pub fn fitted_constant(&self) -> Option<f64> {
        self.ratios.iter().flatten().copied().reduce(f64::max)
    }
}

/// How path expectations are taken.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Sampling {
    pub max_enum_steps: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            max_enum_steps: MAX_ENUM_STEPS,
            samples: 20_000,
            seed: 0,
        }
    }
}

/// Knobs shared by the curve experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabSettings {
    /// Envelope index used for every point of a curve.
    pub m: f64,
    pub scheme: Scheme,
    pub sampling: Sampling,
    /// Largest final distance still called convergence.
    pub threshold: f64,
}

impl LabSettings {
    pub fn new(m: f64) -> Self {
        LabSettings {
            m,
            scheme: Scheme::Explicit,
            sampling: Sampling::default(),
            threshold: 1e-2,
        }
    }
}

/// `E[max_k |a - b|^2]` along lattice paths.
pub fn sup_distance(
    a: &SolutionField,
    b: &SolutionField,
    sampling: &Sampling,
) -> Result<f64, LabError> {
    if a.lattice != b.lattice {
        return Err(LabError::MismatchedLattice);
    }
    sup_distance_fields(&a.lattice, &a.y, &b.y, sampling)
}

pub fn sup_distance_fields(
    lattice: &Lattice,
    a: &AdaptedField,
    b: &AdaptedField,
    sampling: &Sampling,
) -> Result<f64, LabError> {
    let n = lattice.steps();
    if a.last_step() != n || b.last_step() != n {
        return Err(LabError::MismatchedLattice);
    }
    let gap = AdaptedField::from_fn(n, |k, j| (a.get(k, j) - b.get(k, j)).powi(2));
    if gap.is_deterministic() {
        return Ok(gap.slices().map(|s| s[0]).fold(0.0, f64::max));
    }
    if n <= sampling.max_enum_steps {
        return Ok(expected_running_max(&gap, 0, 0, 0.0));
    }
    if sampling.samples == 0 {
        return Err(LabError::NoSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut total = 0.0;
    for _ in 0..sampling.samples {
        let mut j = 0;
        let mut running = gap.get(0, 0);
        for k in 1..=n {
            j += rng.gen::<bool>() as usize;
            running = running.max(gap.get(k, j));
        }
        total += running;
    }
    Ok(total / sampling.samples as f64)
}

fn expected_running_max(gap: &AdaptedField, k: usize, j: usize, running: f64) -> f64 {
    let running = running.max(gap.get(k, j));
    if k == gap.last_step() {
        return running;
    }
    0.5 * expected_running_max(gap, k + 1, j, running)
        + 0.5 * expected_running_max(gap, k + 1, j + 1, running)
}

/// `E|xi1 - xi2|^2` under the terminal binomial law.
pub fn terminal_l2(
    lattice: &Lattice,
    xi1: &TerminalValue,
    xi2: &TerminalValue,
) -> Result<f64, LabError> {
    let a = xi1.values(lattice)?;
    let b = xi2.values(lattice)?;
    let w = lattice.weights(lattice.steps());
    Ok(a.iter()
        .zip(&b)
        .zip(&w)
        .map(|((x, y), p)| p * (x - y).powi(2))
        .sum())
}

fn check_index(lattice: &Lattice, m: f64) -> Result<(), LabError> {
    let r = m * lattice.dt();
    if r > 0.5 {
        Err(LabError::IndexTooLarge(r))
    } else {
        Ok(())
    }
}

/// Perturb the terminal value only, keeping the driver.
pub fn xi_dependence_curve(
    lattice: &Lattice,
    driver: &Driver,
    xi: &TerminalValue,
    xi_seq: &[TerminalValue],
    selector: Selector,
    settings: &LabSettings,
) -> Result<DependenceReport, LabError> {
    check_index(lattice, settings.m)?;
    let kind = selector.kind();
    let base = solve_envelope(lattice, driver, settings.m, kind, xi, settings.scheme)?;
    let env = EnvelopeDriver::new(driver.clone(), settings.m, kind, lattice.dt())
        .map_err(SolverError::from)?;
    let err = scheme_error(lattice, &env, xi)?;

    let points: Vec<(f64, f64)> = xi_seq
        .par_iter()
        .map(|xin| -> Result<(f64, f64), LabError> {
            let sol = solve_envelope(lattice, driver, settings.m, kind, xin, settings.scheme)?;
            Ok((
                terminal_l2(lattice, xin, xi)?,
                sup_distance(&sol, &base, &settings.sampling)?,
            ))
        })
        .collect::<Result<_, _>>()?;
    let (perturbations, distances): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
    let labels = xi_seq.iter().map(|x| x.to_string()).collect();
    Ok(DependenceReport::assemble(
        labels,
        perturbations.clone(),
        distances,
        &perturbations,
        Vec::new(),
        err,
        settings.threshold,
    ))
}

/// `E int_0^T |g1(t, y, z) - g2(t, y, z)|^2 dt` along `field`, left-point
/// quadrature in time.
pub fn driver_gap_integral(
    field: &SolutionField,
    g1: &Driver,
    g2: &Driver,
) -> Result<f64, LabError> {
    let l = &field.lattice;
    let mut total = 0.0;
    for k in 0..l.steps() {
        let t = l.time(k);
        let w = l.weights(k);
        for (j, p) in w.iter().enumerate() {
            let (y, z) = (field.y.get(k, j), field.z.get(k, j));
            total += p * (g1.eval(t, y, z)? - g2.eval(t, y, z)?).powi(2) * l.dt();
        }
    }
    Ok(total)
}

/// Perturb the driver parameter and the terminal value together.
/// Perturbations are `lam - lam0`; ratios are distance over the a priori
/// right-hand side `E|dxi|^2 + E int |g^lam - g^lam0|^2 dt` evaluated along
/// the base solution.
pub fn lambda_dependence_curve(
    lattice: &Lattice,
    family: &DriverFamily,
    xi_family: &TerminalValue,
    lams: &[f64],
    selector: Selector,
    settings: &LabSettings,
) -> Result<DependenceReport, LabError> {
    check_index(lattice, settings.m)?;
    for &lam in lams {
        family.check_domain(lam)?;
    }
    let kind = selector.kind();
    let lam0 = family.lam0();
    let g0 = family.slice(lam0)?;
    let xi0 = xi_family.with_lam(lam0);
    let base = solve_envelope(lattice, &g0, settings.m, kind, &xi0, settings.scheme)?;
    let env = EnvelopeDriver::new(g0.clone(), settings.m, kind, lattice.dt())
        .map_err(SolverError::from)?;
    let err = scheme_error(lattice, &env, &xi0)?;

    let points: Vec<(f64, f64)> = lams
        .par_iter()
        .map(|&lam| -> Result<(f64, f64), LabError> {
            let g = family.slice(lam)?;
            let xi = xi_family.with_lam(lam);
            let sol = solve_envelope(lattice, &g, settings.m, kind, &xi, settings.scheme)?;
            let rhs = terminal_l2(lattice, &xi, &xi0)? + driver_gap_integral(&base, &g, &g0)?;
            Ok((sup_distance(&sol, &base, &settings.sampling)?, rhs))
        })
        .collect::<Result<_, _>>()?;
    let (distances, rhs): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
    Ok(DependenceReport::assemble(
        lams.iter().map(|l| format!("lam={l}")).collect(),
        lams.iter().map(|l| l - lam0).collect(),
        distances,
        &rhs,
        rhs.clone(),
        err,
        settings.threshold,
    ))
}

/// Sup-distance between the `lower_m` and `upper_m` solutions at
/// `m = m_max`. Large values witness non-uniqueness.
pub fn uniqueness_gap(
    lattice: &Lattice,
    driver: &Driver,
    xi: &TerminalValue,
    m_max: f64,
    sampling: &Sampling,
) -> Result<f64, LabError> {
    check_index(lattice, m_max)?;
    let (lo, hi) = rayon::join(
        || solve_envelope(lattice, driver, m_max, EnvelopeKind::Lower, xi, Scheme::Explicit),
        || solve_envelope(lattice, driver, m_max, EnvelopeKind::Upper, xi, Scheme::Explicit),
    );
    sup_distance(&lo?, &hi?, sampling)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AprioriRatio {
    pub ratio: Option<f64>,
    pub distance: f64,
    pub terminal_l2: f64,
    pub note: Option<String>,
}

/// `sup-distance / E|xi1 - xi2|^2` for each pair under a Lipschitz driver.
/// Pairs with identical terminal values are skipped with a note.
pub fn apriori_check(
    lattice: &Lattice,
    driver: &Driver,
    pairs: &[(TerminalValue, TerminalValue)],
    sampling: &Sampling,
) -> Result<Vec<AprioriRatio>, LabError> {
    pairs
        .par_iter()
        .map(|(a, b)| {
            let l2 = terminal_l2(lattice, a, b)?;
            if l2 == 0.0 {
                return Ok(AprioriRatio {
                    ratio: None,
                    distance: 0.0,
                    terminal_l2: 0.0,
                    note: Some("identical terminal values, ratio undefined".into()),
                });
            }
            let sa = solve_lipschitz(lattice, driver, a, Scheme::Explicit)?;
            let sb = solve_lipschitz(lattice, driver, b, Scheme::Explicit)?;
            let d = sup_distance(&sa, &sb, sampling)?;
            Ok(AprioriRatio {
                ratio: Some(d / l2),
                distance: d,
                terminal_l2: l2,
                note: None,
            })
        })
        .collect()
}

/// Closed-form solutions for `g = 3|y|^(2/3)`: with `xi = 1/n` the unique
/// solution `(T - t + n^(-1/3))^3`, and with `xi = 0` the minimal solution
/// `0` and maximal solution `(T - t)^3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CounterexamplePoint {
    pub y_n: f64,
    pub y_min: f64,
    pub y_max: f64,
}

pub fn counterexample_oracle(horizon: f64, n: u64, t: f64) -> Result<CounterexamplePoint, LabError> {
    if n == 0 {
        return Err(LabError::BadIndex);
    }
    if !(0.0..=horizon).contains(&t) {
        return Err(LabError::TimeOutOfRange { t, horizon });
    }
    let s = horizon - t;
    Ok(CounterexamplePoint {
        y_n: (s + (n as f64).powf(-1.0 / 3.0)).powi(3),
        y_min: 0.0,
        y_max: s.powi(3),
    })
}

/// Dependence curve of the closed-form solutions with `xi_n = 1/n` against
/// the selected extremal solution for `xi = 0`, maximised over the times
/// `t_k = kT/steps`. Everything is deterministic, so the scheme error is 0.
pub fn counterexample_curve(
    horizon: f64,
    ns: &[u64],
    selector: Selector,
    steps: usize,
    threshold: f64,
) -> Result<DependenceReport, LabError> {
    let lattice = Lattice::new(horizon, steps)?;
    let mut distances = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut d: f64 = 0.0;
        for k in 0..=steps {
            let p = counterexample_oracle(horizon, n, lattice.time(k))?;
            let base = match selector {
                Selector::Min => p.y_min,
                Selector::Max => p.y_max,
            };
            d = d.max((p.y_n - base).powi(2));
        }
        distances.push(d);
    }
    let perturbations: Vec<f64> = ns.iter().map(|&n| (n as f64).powi(-2)).collect();
    Ok(DependenceReport::assemble(
        ns.iter().map(|n| format!("n={n}")).collect(),
        perturbations.clone(),
        distances,
        &perturbations,
        Vec::new(),
        0.0,
        threshold,
    ))
}
