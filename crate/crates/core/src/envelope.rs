//! Lipschitz envelopes of a continuous driver.
//!
//! ```text
//! lower_m(t,y,z) = inf_{u,v} g(t,u,v) + m(|y-u| + |z-v|)
//! upper_m(t,y,z) = sup_{u,v} g(t,u,v) - m(|y-u| + |z-v|)
//! ```
//!
//! For `m > A` (the linear-growth constant) a candidate farther than
//! `R = 2A(1+|y|+|z|)/(m-A)` from `(y, z)` cannot beat the centre, so both
//! extrema are taken over that ball. The ball is scanned on a grid of step
//! `h` that contains the centre, then each coordinate of the best grid point
//! is polished by golden-section search on the two adjacent cells. Every
//! evaluated candidate is admissible, so the computed lower envelope never
//! undershoots the true infimum and never exceeds `g(t,y,z)`; the upper
//! envelope is the mirror image.
//!
//! `z` may have up to three components; coordinates the driver does not
//! depend on are not searched, since the penalty alone is minimised at the
//! centre along them.

use dashmap::DashMap;
use thiserror::Error;

use crate::dsl::{Driver, DriverError, DriverFamily, EvalError};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EnvelopeError {
    #[error("envelope index m = {m} must exceed the growth constant A = {growth}")]
    IndexTooSmall { m: f64, growth: f64 },
    #[error("grid step must be positive, got {0}")]
    BadStep(f64),
    #[error("z has {found} components, driver expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("z of dimension {0} is not supported (at most 3)")]
    DimensionTooLarge(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Driver(#[from] DriverError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeKind {
    Lower,
    Upper,
}

impl EnvelopeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvelopeKind::Lower => "lower",
            EnvelopeKind::Upper => "upper",
        }
    }

    fn sign(self) -> f64 {
        match self {
            EnvelopeKind::Lower => 1.0,
            EnvelopeKind::Upper => -1.0,
        }
    }
}

pub const MAX_Z_DIM: usize = 3;

/// Grid points per half-axis before the step is coarsened, indexed by the
/// number of searched coordinates.
const AXIS_CAP: [usize; 4] = [1 << 14, 128, 24, 10];

const GOLDEN_ITERS: usize = 40;

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_index(growth: f64, m: f64) -> Result<(), EnvelopeError> {
    if m.is_finite() && m > growth {
        Ok(())
    } else {
        Err(EnvelopeError::IndexTooSmall { m, growth })
    }
}

/// Radius of the ball outside which no candidate improves on the centre.
pub fn search_radius(growth: f64, m: f64, y: f64, z: &[f64]) -> Result<f64, EnvelopeError> {
    check_index(growth, m)?;
    Ok(2.0 * growth * (1.0 + y.abs() + norm(z)) / (m - growth))
}

/// `inf g(t,u,v) + m(|y-u| + |z-v|)`, grid step `h`.
pub fn lower_envelope(
    base: &Driver,
    m: f64,
    t: f64,
    y: f64,
    z: &[f64],
    h: f64,
) -> Result<f64, EnvelopeError> {
    envelope(base, EnvelopeKind::Lower, m, t, y, z, h)
}

/// `sup g(t,u,v) - m(|y-u| + |z-v|)`, grid step `h`.
pub fn upper_envelope(
    base: &Driver,
    m: f64,
    t: f64,
    y: f64,
    z: &[f64],
    h: f64,
) -> Result<f64, EnvelopeError> {
    envelope(base, EnvelopeKind::Upper, m, t, y, z, h)
}

pub fn envelope(
    base: &Driver,
    kind: EnvelopeKind,
    m: f64,
    t: f64,
    y: f64,
    z: &[f64],
    h: f64,
) -> Result<f64, EnvelopeError> {
    check_index(base.growth(), m)?;
    if !(h.is_finite() && h > 0.0) {
        return Err(EnvelopeError::BadStep(h));
    }
    if z.len() > MAX_Z_DIM {
        return Err(EnvelopeError::DimensionTooLarge(z.len()));
    }
    if z.len() != base.z_dim() {
        return Err(EnvelopeError::DimensionMismatch {
            expected: base.z_dim(),
            found: z.len(),
        });
    }
    Search::new(base, kind, m, t, y, z).run(h)
}

/// Minimises `s*g(u,v) + m*dist` where `s = +1` (lower) or `-1` (upper).
struct Search<'a> {
    base: &'a Driver,
    sign: f64,
    m: f64,
    t: f64,
    y: f64,
    z: &'a [f64],
    search_y: bool,
    search_z: bool,
}

impl<'a> Search<'a> {
    fn new(base: &'a Driver, kind: EnvelopeKind, m: f64, t: f64, y: f64, z: &'a [f64]) -> Self {
        Search {
            base,
            sign: kind.sign(),
            m,
            t,
            y,
            z,
            search_y: base.depends_on_y(),
            search_z: base.depends_on_z() && !z.is_empty(),
        }
    }

    /// Point layout: `[u, v_1, .., v_d]`.
    fn objective(&self, point: &[f64]) -> Result<f64, EvalError> {
        let (u, v) = (point[0], &point[1..]);
        let dz: f64 = v
            .iter()
            .zip(self.z)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let g = self.base.eval_vec(self.t, u, v)?;
        Ok(self.sign * g + self.m * ((self.y - u).abs() + dz))
    }

    fn run(&self, h: f64) -> Result<f64, EnvelopeError> {
        let mut centre = Vec::with_capacity(1 + self.z.len());
        centre.push(self.y);
        centre.extend_from_slice(self.z);
        let centre_value = self.objective(&centre)?;

        let axes: Vec<usize> = (0..centre.len())
            .filter(|&i| if i == 0 { self.search_y } else { self.search_z })
            .collect();
        if axes.is_empty() {
            return Ok(self.sign * centre_value);
        }

        // Tightened form of `search_radius`: uses the actual centre value
        // instead of its growth bound, so the ball is never larger.
        let a = self.base.growth();
        let scale = 1.0 + self.y.abs() + norm(self.z);
        let radius = ((centre_value + a * scale) / (self.m - a)).max(0.0);
        let cap = AXIS_CAP[axes.len() - 1];
        let step = h.max(radius / cap as f64);
        let reach = (radius / step).floor() as i64;

        let mut best = centre.clone();
        let mut best_value = centre_value;
        let mut offsets = vec![0i64; axes.len()];
        let mut point = centre.clone();
        self.scan(
            &axes,
            0,
            reach,
            radius,
            step,
            &mut offsets,
            &mut point,
            &mut best,
            &mut best_value,
        )?;

        for &axis in &axes {
            let at = best[axis];
            for (lo, hi) in [(at - step, at), (at, at + step)] {
                let mut probe = best.clone();
                let (x, v) = golden_section(lo, hi, |x| {
                    probe[axis] = x;
                    self.objective(&probe)
                })?;
                if v < best_value {
                    best_value = v;
                    best[axis] = x;
                }
            }
        }
        Ok(self.sign * best_value)
    }

    #[allow(clippy::too_many_arguments)]
    fn scan(
        &self,
        axes: &[usize],
        depth: usize,
        reach: i64,
        radius: f64,
        step: f64,
        offsets: &mut Vec<i64>,
        point: &mut Vec<f64>,
        best: &mut Vec<f64>,
        best_value: &mut f64,
    ) -> Result<(), EvalError> {
        if depth == axes.len() {
            let v = self.objective(point)?;
            if v < *best_value {
                *best_value = v;
                best.copy_from_slice(point);
            }
            return Ok(());
        }
        let axis = axes[depth];
        let origin = if axis == 0 { self.y } else { self.z[axis - 1] };
        for i in -reach..=reach {
            offsets[depth] = i;
            if ball_distance(axes, &offsets[..=depth], step) > radius * (1.0 + 1e-12) {
                continue;
            }
            point[axis] = origin + i as f64 * step;
            self.scan(
                axes,
                depth + 1,
                reach,
                radius,
                step,
                offsets,
                point,
                best,
                best_value,
            )?;
        }
        point[axis] = origin;
        offsets[depth] = 0;
        Ok(())
    }
}

/// Distance in the penalty norm `|du| + |dv|_2` of a partial grid offset.
fn ball_distance(axes: &[usize], offsets: &[i64], step: f64) -> f64 {
    let mut du = 0.0;
    let mut dv2 = 0.0;
    for (&axis, &o) in axes.iter().zip(offsets) {
        let d = o as f64 * step;
        if axis == 0 {
            du = d.abs();
        } else {
            dv2 += d * d;
        }
    }
    du + dv2.sqrt()
}

fn golden_section(
    mut lo: f64,
    mut hi: f64,
    mut f: impl FnMut(f64) -> Result<f64, EvalError>,
) -> Result<(f64, f64), EvalError> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// A Lipschitz driver `lower_m` or `upper_m` built from a base driver.
///
/// Scalar evaluations are memoised on the exact bit patterns of `(t, y, z)`.
pub struct EnvelopeDriver {
    base: Driver,
    m: f64,
    kind: EnvelopeKind,
    h: f64,
    memo: DashMap<(u64, u64, u64), f64>,
}

impl std::fmt::Debug for EnvelopeDriver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnvelopeDriver")
            .field("base", &self.base.name())
            .field("m", &self.m)
            .field("kind", &self.kind)
            .field("h", &self.h)
            .finish()
    }
}

impl EnvelopeDriver {
    pub fn new(base: Driver, m: f64, kind: EnvelopeKind, h: f64) -> Result<Self, EnvelopeError> {
        check_index(base.growth(), m)?;
        if !(h.is_finite() && h > 0.0) {
            return Err(EnvelopeError::BadStep(h));
        }
        if base.z_dim() > MAX_Z_DIM {
            return Err(EnvelopeError::DimensionTooLarge(base.z_dim()));
        }
        Ok(EnvelopeDriver {
            base,
            m,
            kind,
            h,
            memo: DashMap::new(),
        })
    }

    pub fn base(&self) -> &Driver {
        &self.base
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn kind(&self) -> EnvelopeKind {
        self.kind
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// Always `m`.
    pub fn lipschitz(&self) -> f64 {
        self.m
    }

    pub fn growth(&self) -> f64 {
        self.base.growth()
    }

    pub fn name(&self) -> String {
        format!("{}_{}[m={}]", self.kind.as_str(), self.base.name(), self.m)
    }

    pub fn eval(&self, t: f64, y: f64, z: f64) -> Result<f64, EnvelopeError> {
        let key = (t.to_bits(), y.to_bits(), z.to_bits());
        if let Some(v) = self.memo.get(&key) {
            return Ok(*v);
        }
        let v = envelope(&self.base, self.kind, self.m, t, y, &[z], self.h)?;
        self.memo.insert(key, v);
        Ok(v)
    }

    pub fn eval_vec(&self, t: f64, y: f64, z: &[f64]) -> Result<f64, EnvelopeError> {
        envelope(&self.base, self.kind, self.m, t, y, z, self.h)
    }

    pub fn cached(&self) -> usize {
        self.memo.len()
    }
}

/// Envelopes of every slice of a driver family at a common index `m`.
#[derive(Clone, Debug)]
pub struct EnvelopeFamily {
    base: DriverFamily,
    m: f64,
    kind: EnvelopeKind,
    h: f64,
}

pub fn envelope_family(
    base: DriverFamily,
    m: f64,
    kind: EnvelopeKind,
    h: f64,
) -> Result<EnvelopeFamily, EnvelopeError> {
    check_index(base.growth(), m)?;
    if !(h.is_finite() && h > 0.0) {
        return Err(EnvelopeError::BadStep(h));
    }
    Ok(EnvelopeFamily { base, m, kind, h })
}

impl EnvelopeFamily {
    pub fn family(&self) -> &DriverFamily {
        &self.base
    }

    pub fn at(&self, lam: f64) -> Result<EnvelopeDriver, EnvelopeError> {
        EnvelopeDriver::new(self.base.slice(lam)?, self.m, self.kind, self.h)
    }
}
