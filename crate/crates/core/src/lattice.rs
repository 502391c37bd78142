//! Recombining Bernoulli random walk on `[0, T]`.
//!
//! Node `(k, j)` sits at step `k` and level `j in 0..=k` with position
//! `w(k, j) = (2j - k) sqrt(dt)`. The up-child of `(k, j)` is `(k+1, j+1)`
//! and the down-child is `(k+1, j)`; each has probability 1/2, so
//! conditional expectations and martingale coefficients are exact two-point
//! formulas.

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum LatticeError {
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("number of steps must be at least 1")]
    NoSteps,
    #[error("node ({k}, {j}) is missing a child value")]
    MissingChild { k: usize, j: usize },
    #[error("path enumeration needs N <= {max}, lattice has N = {steps}; sample instead")]
    TooManyPaths { steps: usize, max: usize },
}

/// Default cap on exact path enumeration.
pub const MAX_ENUM_STEPS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    horizon: f64,
    steps: usize,
    dt: f64,
    sqrt_dt: f64,
}

impl Lattice {
    pub fn new(horizon: f64, steps: usize) -> Result<Lattice, LatticeError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(LatticeError::BadHorizon(horizon));
        }
        if steps == 0 {
            return Err(LatticeError::NoSteps);
        }
        let dt = horizon / steps as f64;
        Ok(Lattice {
            horizon,
            steps,
            dt,
            sqrt_dt: dt.sqrt(),
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sqrt_dt(&self) -> f64 {
        self.sqrt_dt
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }

    pub fn w(&self, k: usize, j: usize) -> f64 {
        (2.0 * j as f64 - k as f64) * self.sqrt_dt
    }

    pub fn positions(&self, k: usize) -> Vec<f64> {
        (0..=k).map(|j| self.w(k, j)).collect()
    }

    /// Binomial node probabilities at step `k`.
    pub fn weights(&self, k: usize) -> Vec<f64> {
        let mut p = vec![1.0];
        for _ in 0..k {
            let mut next = vec![0.0; p.len() + 1];
            for (j, &v) in p.iter().enumerate() {
                next[j] += 0.5 * v;
                next[j + 1] += 0.5 * v;
            }
            p = next;
        }
        p
    }

    /// `E[f(k+1, .) | node (k, j)]`, where `next` holds the step-`k+1` slice.
    pub fn cond_expect(&self, next: &[f64], j: usize) -> Result<f64, LatticeError> {
        let (down, up) = children(next, j)?;
        Ok(cond_expect(down, up))
    }

    /// The `z` with `f(k+1, .) = E[f] + z * dW` on both branches.
    pub fn martingale_coeff(&self, next: &[f64], j: usize) -> Result<f64, LatticeError> {
        let (down, up) = children(next, j)?;
        Ok(martingale_coeff(down, up, self.sqrt_dt))
    }

    /// Every `+/-` path with its probability `2^-N`. Only for `N <= max_steps`.
    pub fn enumerate_paths(&self, max_steps: usize) -> Result<Paths, LatticeError> {
        if self.steps > max_steps || self.steps >= 64 {
            return Err(LatticeError::TooManyPaths {
                steps: self.steps,
                max: max_steps,
            });
        }
        Ok(Paths {
            steps: self.steps,
            next: 0,
            end: 1u64 << self.steps,
        })
    }
}

fn children(next: &[f64], j: usize) -> Result<(f64, f64), LatticeError> {
    match (next.get(j), next.get(j + 1)) {
        (Some(&d), Some(&u)) => Ok((d, u)),
        _ => Err(LatticeError::MissingChild {
            k: next.len().saturating_sub(2),
            j,
        }),
    }
}

#[inline]
pub(crate) fn cond_expect(down: f64, up: f64) -> f64 {
    0.5 * down + 0.5 * up
}

#[inline]
pub(crate) fn martingale_coeff(down: f64, up: f64, sqrt_dt: f64) -> f64 {
    (up - down) / (2.0 * sqrt_dt)
}

/// One lattice path: `ups[k]` is true when step `k -> k+1` goes up.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub ups: Vec<bool>,
    /// Level `j` at each step `0..=N`.
    pub levels: Vec<usize>,
    pub probability: f64,
}

pub struct Paths {
    steps: usize,
    next: u64,
    end: u64,
}

impl Iterator for Paths {
    type Item = Path;

    fn next(&mut self) -> Option<Path> {
        if self.next >= self.end {
            return None;
        }
        let bits = self.next;
        self.next += 1;
        let ups: Vec<bool> = (0..self.steps).map(|k| bits >> k & 1 == 1).collect();
        let mut levels = Vec::with_capacity(self.steps + 1);
        let mut j = 0;
        levels.push(j);
        for &up in &ups {
            j += up as usize;
            levels.push(j);
        }
        Some(Path {
            ups,
            levels,
            probability: 0.5f64.powi(self.steps as i32),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.next) as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Paths {}

/// A process sampled on every node of steps `0..=last`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedField {
    slices: Vec<Vec<f64>>,
}

impl AdaptedField {
    /// Zero-filled field on steps `0..=last`.
    pub fn zeros(last: usize) -> AdaptedField {
        AdaptedField {
            slices: (0..=last).map(|k| vec![0.0; k + 1]).collect(),
        }
    }

    pub fn from_fn(last: usize, mut f: impl FnMut(usize, usize) -> f64) -> AdaptedField {
        AdaptedField {
            slices: (0..=last).map(|k| (0..=k).map(|j| f(k, j)).collect()).collect(),
        }
    }

    pub fn last_step(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.slices[k][j]
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.slices[k]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.slices[k]
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.slices.iter().map(Vec::as_slice)
    }

    /// `max |f|` over all nodes.
    pub fn sup_norm(&self) -> f64 {
        self.slices
            .iter()
            .flatten()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// True when every slice is constant, i.e. the process is deterministic.
    pub fn is_deterministic(&self) -> bool {
        self.slices
            .iter()
            .all(|s| s.iter().all(|&v| v == s[0]))
    }
}
