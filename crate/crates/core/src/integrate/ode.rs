//! Deterministic integrators: classical fourth-order Runge–Kutta for the
//! drift flow `ẋ = b(x, t)` and for the linear companion system
//! `u̇ = J[b](λ, t)·u + b(λ, t)` with the linearization point held fixed.

use crate::error::Result;
use crate::integrate::{drive, TimeGrid, Trajectory};
use crate::linalg::SquareMatrix;
use crate::polyfield::PolyVectorField;

/// Fourth-order Runge–Kutta over the grid for a right-hand side given as
/// `f(t, x, out)`.
fn rk4<F>(grid: &TimeGrid, dim: usize, x0: &[f64], mut f: F) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dt = grid.dt();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut xs = vec![0.0; dim];
    drive(grid, dim, x0, move |k, x, next| {
        let t = grid.node_time(k);
        f(t, x, &mut k1);
        for i in 0..dim {
            xs[i] = x[i] + 0.5 * dt * k1[i];
        }
        f(t + 0.5 * dt, &xs, &mut k2);
        for i in 0..dim {
            xs[i] = x[i] + 0.5 * dt * k2[i];
        }
        f(t + 0.5 * dt, &xs, &mut k3);
        for i in 0..dim {
            xs[i] = x[i] + dt * k3[i];
        }
        f(t + dt, &xs, &mut k4);
        for i in 0..dim {
            next[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    })
}

/// Integrates the drift flow `ẋ = b(x, t)`, `x(t0) = x0`.
///
/// A trajectory that blows up in finite time is returned as computed, with
/// the first non-finite node recorded (see [`Trajectory::first_nonfinite`]).
pub fn ode_solve(field: &PolyVectorField, grid: &TimeGrid, x0: &[f64]) -> Result<Trajectory> {
    // x0 length is validated against the field dimension by the driver
    rk4(grid, field.dimension(), x0, |t, x, out| {
        field.eval_into(x, t, out)
    })
}

/// Integrates the linear companion system
/// `u̇ = J[b](λ, t)·u + b(λ, t)`, `u(t0) = u0`,
/// with the linearization point `λ` held constant over the whole span.
/// Time dependence of the field still enters through `J` and `b`.
pub fn master_ode_solve(
    field: &PolyVectorField,
    grid: &TimeGrid,
    lambda: &[f64],
    u0: &[f64],
) -> Result<Trajectory> {
    let dim = field.dimension();
    field.eval(lambda, grid.t0())?; // validates λ length
    let mut jac = SquareMatrix::zeros(dim);
    let mut b = vec![0.0; dim];
    rk4(grid, dim, u0, move |t, u, out| {
        field.jacobian_into(lambda, t, &mut jac);
        field.eval_into(lambda, t, &mut b);
        jac.matvec_into(u, out);
        for i in 0..dim {
            out[i] += b[i];
        }
    })
}
