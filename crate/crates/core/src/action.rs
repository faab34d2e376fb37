//! Path-space action numerics: the quadratic rate functional
//! `I(φ) = ½∫‖φ̇ − b(φ,t)‖² dt` on discrete paths, transition costs by
//! direct minimization over paths with pinned endpoints, and the
//! quasipotential as the minimum cost over a ladder of transition times.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrate::{TimeGrid, Trajectory};
use crate::linalg::SquareMatrix;
use crate::polyfield::PolyVectorField;

/// Piecewise-linear path given by its values at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    grid: TimeGrid,
    dim: usize,
    /// Node-major knot storage, `n_nodes × dim`.
    knots: Vec<f64>,
}

impl DiscretePath {
    pub fn from_knots(grid: TimeGrid, dim: usize, knots: Vec<f64>) -> Result<Self> {
        if knots.len() != grid.n_nodes() * dim {
            return Err(Error::DimensionMismatch {
                expected: grid.n_nodes() * dim,
                got: knots.len(),
            });
        }
        Ok(DiscretePath { grid, dim, knots })
    }

    /// Linear interpolation between `from` (first node) and `to` (last node).
    pub fn straight_line(grid: TimeGrid, from: &[f64], to: &[f64]) -> Result<Self> {
        let dim = from.len();
        if to.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: to.len(),
            });
        }
        let n = grid.n_nodes();
        let mut knots = Vec::with_capacity(n * dim);
        for k in 0..n {
            let s = k as f64 / grid.steps() as f64;
            for i in 0..dim {
                knots.push(from[i] + s * (to[i] - from[i]));
            }
        }
        Ok(DiscretePath { grid, dim, knots })
    }

    /// Copies a solver trajectory into a path (e.g. to score the flow).
    pub fn from_trajectory(tr: &Trajectory) -> Self {
        let mut knots = Vec::with_capacity(tr.grid().n_nodes() * tr.dim());
        for s in tr.states() {
            knots.extend_from_slice(s);
        }
        DiscretePath {
            grid: *tr.grid(),
            dim: tr.dim(),
            knots,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn knot(&self, k: usize) -> &[f64] {
        &self.knots[k * self.dim..(k + 1) * self.dim]
    }

    /// Writes `t,phi_1..phi_d` rows with 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "t")?;
        for c in 1..=self.dim {
            write!(w, ",phi_{c}")?;
        }
        writeln!(w)?;
        for k in 0..self.grid.n_nodes() {
            write!(w, "{:.16e}", self.grid.node_time(k))?;
            for v in self.knot(k) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Discretized rate functional with midpoint evaluation of the drift:
///
/// `I(φ) = (dt/2) Σ_k ‖(φ_{k+1} − φ_k)/dt − b((φ_k+φ_{k+1})/2, t̂_k)‖²`,
///
/// non-negative, and zero (to discretization error) exactly on solutions
/// of the flow.
pub fn rate_functional(path: &DiscretePath, field: &PolyVectorField) -> Result<f64> {
    let dim = field.dimension();
    if path.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: path.dim(),
        });
    }
    let grid = path.grid();
    let dt = grid.dt();
    let mut mid = vec![0.0; dim];
    let mut b = vec![0.0; dim];
    let mut acc = 0.0;
    for k in 0..grid.steps() {
        let a = path.knot(k);
        let c = path.knot(k + 1);
        for i in 0..dim {
            mid[i] = 0.5 * (a[i] + c[i]);
        }
        let t_mid = 0.5 * (grid.node_time(k) + grid.node_time(k + 1));
        field.eval_into(&mid, t_mid, &mut b);
        for i in 0..dim {
            let v = (c[i] - a[i]) / dt - b[i];
            acc += v * v;
        }
    }
    Ok(0.5 * dt * acc)
}

/// Exact gradient of [`rate_functional`] with respect to every knot.
///
/// With `v_k = (φ_{k+1} − φ_k)/dt − b(m_k, t̂_k)` the chain rule gives, for
/// an interior knot `j`,
///
/// `∂I/∂φ_j = (v_{j−1} − v_j) − (dt/2)(J(m_{j−1})ᵀ v_{j−1} + J(m_j)ᵀ v_j)`.
///
/// Endpoint entries are zeroed: endpoints are pinned in every optimization
/// this gradient serves.
pub fn rate_gradient(path: &DiscretePath, field: &PolyVectorField) -> Result<Vec<f64>> {
    let dim = field.dimension();
    if path.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: path.dim(),
        });
    }
    let grid = path.grid();
    let dt = grid.dt();
    let n_nodes = grid.n_nodes();
    let steps = grid.steps();

    // v_k and Jᵀv_k per interval
    let mut v = vec![0.0; steps * dim];
    let mut jtv = vec![0.0; steps * dim];
    let mut mid = vec![0.0; dim];
    let mut b = vec![0.0; dim];
    let mut jac = SquareMatrix::zeros(dim);
    for k in 0..steps {
        let a = path.knot(k);
        let c = path.knot(k + 1);
        for i in 0..dim {
            mid[i] = 0.5 * (a[i] + c[i]);
        }
        let t_mid = 0.5 * (grid.node_time(k) + grid.node_time(k + 1));
        field.eval_into(&mid, t_mid, &mut b);
        field.jacobian_into(&mid, t_mid, &mut jac);
        for i in 0..dim {
            v[k * dim + i] = (c[i] - a[i]) / dt - b[i];
        }
        // Jᵀ v: accumulate columns
        for i in 0..dim {
            let mut acc = 0.0;
            for r in 0..dim {
                acc += jac.get(r, i) * v[k * dim + r];
            }
            jtv[k * dim + i] = acc;
        }
    }

    let mut grad = vec![0.0; n_nodes * dim];
    for j in 1..steps {
        for i in 0..dim {
            let prev = v[(j - 1) * dim + i];
            let cur = v[j * dim + i];
            let jt = jtv[(j - 1) * dim + i] + jtv[j * dim + i];
            grad[j * dim + i] = (prev - cur) - 0.5 * dt * jt;
        }
    }
    Ok(grad)
}

/// Knobs of the path optimizer.
#[derive(Debug, Clone, Copy)]
pub struct CostOptions {
    /// Gradient-descent iteration cap.
    pub max_iter: usize,
    /// Stop once the max-norm of the gradient falls below this.
    pub grad_tol: f64,
}

impl Default for CostOptions {
    fn default() -> Self {
        CostOptions {
            max_iter: 20_000,
            grad_tol: 1e-8,
        }
    }
}

/// Result of a transition-cost minimization.
#[derive(Debug, Clone)]
pub struct CostResult {
    /// Best objective value found.
    pub value: f64,
    /// The minimizing path (endpoints exactly as requested).
    pub path: DiscretePath,
    /// True if the gradient tolerance was reached.
    pub converged: bool,
    pub iterations: usize,
    /// Objective after every accepted step (non-increasing by construction).
    pub objective_history: Vec<f64>,
}

/// Minimizes the rate functional over paths from `x` to `y` in time `t`:
/// gradient descent with a backtracking (and re-growing) line search from
/// the straight-line initialization, endpoints pinned throughout. Returns
/// the best path found, flagged `converged: false` when the iteration cap
/// is hit or the line search stalls first.
pub fn minimize_cost(
    x: &[f64],
    y: &[f64],
    t: f64,
    field: &PolyVectorField,
    knots: usize,
    options: &CostOptions,
) -> Result<CostResult> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "transition time {t} must be positive"
        )));
    }
    if knots < 8 {
        return Err(Error::InvalidParameter(format!(
            "need at least 8 knots, got {knots}"
        )));
    }
    let dim = field.dimension();
    if x.len() != dim || y.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: if x.len() != dim { x.len() } else { y.len() },
        });
    }
    let grid = TimeGrid::new(0.0, t, knots - 1)?;
    let mut path = DiscretePath::straight_line(grid, x, y)?;
    let mut value = rate_functional(&path, field)?;
    let mut history = vec![value];

    let interior = (grid.n_nodes() - 2) * dim;
    let mut alpha = 0.1;
    let mut converged = false;
    let mut iterations = 0;

    let mut trial = path.clone();
    for iter in 0..options.max_iter {
        iterations = iter + 1;
        let grad = rate_gradient(&path, field)?;
        let g_max = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if g_max <= options.grad_tol {
            converged = true;
            iterations = iter;
            break;
        }
        let g_norm_sq: f64 = grad.iter().map(|g| g * g).sum();

        // line search: try a grown step first, then back off
        alpha *= 2.0;
        let mut accepted = false;
        while alpha * g_max > 1e-18 {
            let span = dim..dim + interior;
            for ((dst, &src), &g) in trial.knots[span.clone()]
                .iter_mut()
                .zip(&path.knots[span.clone()])
                .zip(&grad[span])
            {
                *dst = src - alpha * g;
            }
            let trial_value = rate_functional(&trial, field)?;
            if trial_value.is_finite() && trial_value <= value - 1e-4 * alpha * g_norm_sq {
                std::mem::swap(&mut path, &mut trial);
                value = trial_value;
                history.push(value);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break; // stalled: descent direction exhausted at fp resolution
        }
    }

    Ok(CostResult {
        value,
        path,
        converged,
        iterations,
        objective_history: history,
    })
}

/// Result of a quasipotential search over transition times.
#[derive(Debug, Clone)]
pub struct QuasipotentialResult {
    /// Minimum transition cost over the candidate times.
    pub value: f64,
    /// The minimizing transition time.
    pub best_t: f64,
    pub path: DiscretePath,
    /// Convergence flag of the winning minimization.
    pub converged: bool,
    /// `(t, value, converged)` per candidate, in input order.
    pub table: Vec<(f64, f64, bool)>,
}

/// Approximates the quasipotential `V(x, y) = inf_{t>0} inf_φ I(φ)` by
/// minimizing over each candidate transition time and taking the best.
/// Candidates are independent and run in parallel; the result is
/// deterministic (ties broken toward the smaller `t`).
pub fn quasipotential(
    x: &[f64],
    y: &[f64],
    field: &PolyVectorField,
    t_candidates: &[f64],
    knots: usize,
    options: &CostOptions,
) -> Result<QuasipotentialResult> {
    if t_candidates.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one candidate transition time".into(),
        ));
    }
    let runs: Vec<Result<CostResult>> = t_candidates
        .par_iter()
        .map(|&t| minimize_cost(x, y, t, field, knots, options))
        .collect();

    let mut best: Option<(f64, CostResult)> = None;
    let mut table = Vec::with_capacity(t_candidates.len());
    for (&t, run) in t_candidates.iter().zip(runs) {
        let run = run?;
        table.push((t, run.value, run.converged));
        let better = match &best {
            None => true,
            Some((_, b)) => run.value < b.value,
        };
        if better {
            best = Some((t, run));
        }
    }
    let (best_t, run) = best.expect("non-empty candidates");
    Ok(QuasipotentialResult {
        value: run.value,
        best_t,
        path: run.path,
        converged: run.converged,
        table,
    })
}
