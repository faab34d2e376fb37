//! Euler–Maruyama integrators driven by explicit Wiener paths.
//!
//! The noise realization is always an input, never drawn inside the
//! stepper: that is what lets a nonlinear solve and its linear companion
//! system consume the *same* increments, and what makes every run
//! reproducible from a recorded path file.

use crate::error::{Error, Result};
use crate::integrate::{drive, TimeGrid, Trajectory, WienerPath};
use crate::linalg::SquareMatrix;
use crate::polyfield::{PolyDiffusionMatrix, PolyVectorField};

/// Per-step Wiener increments for an integration grid.
///
/// When the integration grid equals the path's own grid, stored node
/// differences are used verbatim (bit-reproducible); otherwise increments
/// come from piecewise-linear interpolation at the grid's node times.
struct IncrementSource<'a> {
    wiener: &'a WienerPath,
    grid: TimeGrid,
    same_grid: bool,
    prev: Vec<f64>,
    next: Vec<f64>,
}

impl<'a> IncrementSource<'a> {
    fn new(wiener: &'a WienerPath, grid: &TimeGrid, dim: usize) -> Result<Self> {
        if wiener.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: wiener.dim(),
            });
        }
        let wg = wiener.grid();
        let tol = 1e-9 * (1.0 + grid.t1().abs());
        if wg.t0() > grid.t0() + tol || wg.t1() < grid.t1() - tol {
            return Err(Error::GridMismatch(format!(
                "noise path spans [{}, {}] but integration needs [{}, {}]",
                wg.t0(),
                wg.t1(),
                grid.t0(),
                grid.t1()
            )));
        }
        let same_grid = wg == grid;
        let mut prev = vec![0.0; dim];
        if !same_grid {
            wiener.value_at_into(grid.t0(), &mut prev)?;
        }
        Ok(IncrementSource {
            wiener,
            grid: *grid,
            same_grid,
            prev,
            next: vec![0.0; dim],
        })
    }

    /// Writes `W(t_{k+1}) − W(t_k)` into `out`; must be called with
    /// consecutive `k` starting from 0.
    fn get(&mut self, k: usize, out: &mut [f64]) {
        if self.same_grid {
            self.wiener.increment_into(k, out);
        } else {
            self.wiener
                .value_at_into(self.grid.node_time(k + 1), &mut self.next)
                .expect("span checked at construction");
            for ((o, &n), &p) in out.iter_mut().zip(&self.next).zip(&self.prev) {
                *o = n - p;
            }
            std::mem::swap(&mut self.prev, &mut self.next);
        }
    }
}

fn check_square(dim: usize, m: &PolyDiffusionMatrix) -> Result<()> {
    if m.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: m.dim(),
        });
    }
    Ok(())
}

/// Euler–Maruyama for `dX = b(X, t) dt + C(X, t) dW` along a given path:
/// `X_{k+1} = X_k + b(X_k, t_k) Δt + C(X_k, t_k) ΔW_k`.
pub fn em_sde_solve(
    field: &PolyVectorField,
    diffusion: &PolyDiffusionMatrix,
    grid: &TimeGrid,
    x0: &[f64],
    wiener: &WienerPath,
) -> Result<Trajectory> {
    let dim = field.dimension();
    check_square(dim, diffusion)?;
    let mut inc = IncrementSource::new(wiener, grid, dim)?;
    let dt = grid.dt();
    let mut b = vec![0.0; dim];
    let mut dw = vec![0.0; dim];
    let mut cdw = vec![0.0; dim];
    let mut c = SquareMatrix::zeros(dim);
    drive(grid, dim, x0, move |k, x, next| {
        let t = grid.node_time(k);
        field.eval_into(x, t, &mut b);
        diffusion.eval_into(x, t, &mut c);
        inc.get(k, &mut dw);
        c.matvec_into(&dw, &mut cdw);
        for i in 0..dim {
            next[i] = x[i] + dt * b[i] + cdw[i];
        }
    })
}

/// Euler–Maruyama for a drift forced by two independent Wiener paths:
/// `dX = b(X, t) dt + C₁(X, t) dW⁽¹⁾ + C₂(X, t) dW⁽²⁾`.
pub fn em_two_noise_solve(
    field: &PolyVectorField,
    diffusion_1: &PolyDiffusionMatrix,
    diffusion_2: &PolyDiffusionMatrix,
    grid: &TimeGrid,
    x0: &[f64],
    wiener_1: &WienerPath,
    wiener_2: &WienerPath,
) -> Result<Trajectory> {
    let dim = field.dimension();
    check_square(dim, diffusion_1)?;
    check_square(dim, diffusion_2)?;
    let mut inc1 = IncrementSource::new(wiener_1, grid, dim)?;
    let mut inc2 = IncrementSource::new(wiener_2, grid, dim)?;
    let dt = grid.dt();
    let mut b = vec![0.0; dim];
    let mut dw = vec![0.0; dim];
    let mut c1dw = vec![0.0; dim];
    let mut c2dw = vec![0.0; dim];
    let mut c = SquareMatrix::zeros(dim);
    drive(grid, dim, x0, move |k, x, next| {
        let t = grid.node_time(k);
        field.eval_into(x, t, &mut b);
        diffusion_1.eval_into(x, t, &mut c);
        inc1.get(k, &mut dw);
        c.matvec_into(&dw, &mut c1dw);
        diffusion_2.eval_into(x, t, &mut c);
        inc2.get(k, &mut dw);
        c.matvec_into(&dw, &mut c2dw);
        for i in 0..dim {
            next[i] = x[i] + dt * b[i] + c1dw[i] + c2dw[i];
        }
    })
}

/// Euler–Maruyama for the stochastic companion system of the deviation
/// `u = X − λ` around a fixed linearization point `λ`:
///
/// `du = (J[b](λ,t)·u + b(λ,t)) dt + Σ_j (Ĵ_j[C](λ,t)·u) dW_j + C(λ,t) dW`.
///
/// The multiplicative sum (first-order expansion of `C(X) dW` about `λ`)
/// vanishes identically for state-independent diffusion, reducing the
/// system to the linear drift companion with additive noise.
pub fn master_sde_solve(
    field: &PolyVectorField,
    diffusion: &PolyDiffusionMatrix,
    grid: &TimeGrid,
    lambda: &[f64],
    u0: &[f64],
    wiener: &WienerPath,
) -> Result<Trajectory> {
    let dim = field.dimension();
    check_square(dim, diffusion)?;
    field.eval(lambda, grid.t0())?; // validates λ length
    let mut inc = IncrementSource::new(wiener, grid, dim)?;
    let state_dependent = !diffusion.is_state_independent();
    let dt = grid.dt();
    let mut b = vec![0.0; dim];
    let mut dw = vec![0.0; dim];
    let mut ju = vec![0.0; dim];
    let mut cdw = vec![0.0; dim];
    let mut gu = vec![0.0; dim];
    let mut jac = SquareMatrix::zeros(dim);
    let mut c = SquareMatrix::zeros(dim);
    let mut ghat = SquareMatrix::zeros(dim);
    drive(grid, dim, u0, move |k, u, next| {
        let t = grid.node_time(k);
        field.jacobian_into(lambda, t, &mut jac);
        field.eval_into(lambda, t, &mut b);
        diffusion.eval_into(lambda, t, &mut c);
        inc.get(k, &mut dw);
        jac.matvec_into(u, &mut ju);
        c.matvec_into(&dw, &mut cdw);
        for i in 0..dim {
            next[i] = u[i] + dt * (ju[i] + b[i]) + cdw[i];
        }
        if state_dependent {
            for (j, &dw_j) in dw.iter().enumerate() {
                diffusion.generalized_jacobian_into(lambda, t, j, &mut ghat);
                ghat.matvec_into(u, &mut gu);
                for (n, &g) in next.iter_mut().zip(&gu) {
                    *n += g * dw_j;
                }
            }
        }
    })
}
