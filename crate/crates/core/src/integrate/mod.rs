//! Fixed-step time grids, sampled trajectories, and integrators.
//!
//! Everything here is deliberately fixed-step: reproducibility of noise
//! paths and of Monte Carlo reductions takes priority over adaptive error
//! control, and the path-wise couplings (the same Wiener increments feeding
//! both a nonlinear solve and its linearization) only make sense when every
//! consumer sees the identical node set.

mod ode;
mod sde;
mod wiener;

pub use ode::{master_ode_solve, ode_solve};
pub use sde::{em_sde_solve, em_two_noise_solve, master_sde_solve};
pub use wiener::WienerPath;

use crate::error::{Error, Result};

/// Uniform grid of `steps + 1` nodes on `[t0, t1]`.
///
/// Node times are canonical: `node_time(k) = t0 + k·dt` for interior nodes
/// and exactly `t1` at the last node, so a grid rebuilt from its first and
/// last node times reproduces every node bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if !t0.is_finite() || !t1.is_finite() || t1 <= t0 {
            return Err(Error::InvalidParameter(format!(
                "time span [{t0}, {t1}] must be finite with t1 > t0"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("grid needs at least one step".into()));
        }
        Ok(TimeGrid { t0, t1, steps })
    }

    /// Builds the grid from a target step size; `steps` is rounded to the
    /// nearest integer count covering `[t0, t1]`.
    pub fn from_step(t0: f64, t1: f64, dt: f64) -> Result<Self> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::InvalidParameter(format!("step size {dt} must be positive")));
        }
        let steps = ((t1 - t0) / dt).round() as i64;
        if steps < 1 {
            return Err(Error::InvalidParameter(format!(
                "step size {dt} too large for span [{t0}, {t1}]"
            )));
        }
        Self::new(t0, t1, steps as usize)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n_nodes(&self) -> usize {
        self.steps + 1
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    /// Time of node `k` (`0 ≤ k ≤ steps`).
    #[inline]
    pub fn node_time(&self, k: usize) -> f64 {
        debug_assert!(k <= self.steps, "node {k} out of range");
        if k == self.steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    /// Maps a time back to its node index; the time must lie on the grid.
    pub fn node_index(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * (1.0 + t.abs());
        if t < self.t0 - tol || t > self.t1 + tol {
            return Err(Error::TimeOutOfRange {
                t,
                t0: self.t0,
                t1: self.t1,
            });
        }
        let k = (((t - self.t0) / self.dt()).round() as i64).clamp(0, self.steps as i64) as usize;
        if (self.node_time(k) - t).abs() > tol {
            return Err(Error::NotANode { t, dt: self.dt() });
        }
        Ok(k)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.node_time(k))
    }
}

/// States of a `d`-dimensional process sampled at every node of a grid.
///
/// A trajectory that leaves the representable range is kept as computed:
/// the first node holding a non-finite component is recorded and every node
/// after it is `NaN`, so consumers can report where the blow-up happened
/// instead of silently clamping it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    /// Node-major storage, `n_nodes × dim`.
    data: Vec<f64>,
    first_nonfinite: Option<usize>,
}

impl Trajectory {
    pub(crate) fn from_raw(grid: TimeGrid, dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.n_nodes() * dim);
        let first_nonfinite = data
            .chunks_exact(dim)
            .position(|s| s.iter().any(|v| !v.is_finite()));
        Trajectory {
            grid,
            dim,
            data,
            first_nonfinite,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// State at node `k`.
    #[inline]
    pub fn state(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.grid.steps())
    }

    /// Index of the first node with a non-finite component, if any.
    pub fn first_nonfinite(&self) -> Option<usize> {
        self.first_nonfinite
    }

    pub fn is_fully_finite(&self) -> bool {
        self.first_nonfinite.is_none()
    }

    /// True if the trajectory has blown up at or before node `k`.
    pub fn diverged_by(&self, k: usize) -> bool {
        matches!(self.first_nonfinite, Some(n) if n <= k)
    }

    /// All node states in grid order.
    pub fn states(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }
}

/// Shared driver: advances node states produced by `step`, watching for the
/// first non-finite node and padding the remainder with `NaN` once found.
pub(crate) fn drive<F>(grid: &TimeGrid, dim: usize, x0: &[f64], mut step: F) -> Result<Trajectory>
where
    F: FnMut(usize, &[f64], &mut [f64]),
{
    if x0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "initial state must be finite".into(),
        ));
    }
    let n_nodes = grid.n_nodes();
    let mut data = Vec::with_capacity(n_nodes * dim);
    data.extend_from_slice(x0);
    let mut cur = x0.to_vec();
    let mut next = vec![0.0; dim];
    for k in 0..grid.steps() {
        step(k, &cur, &mut next);
        data.extend_from_slice(&next);
        if next.iter().any(|v| !v.is_finite()) {
            // keep the offending node as computed, pad the rest
            let remaining = (grid.steps() - (k + 1)) * dim;
            data.extend(std::iter::repeat_n(f64::NAN, remaining));
            break;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(Trajectory::from_raw(*grid, dim, data))
}
