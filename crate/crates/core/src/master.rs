//! Residuals of the linear companion system and quasiclassical paths.
//!
//! For a drift `b` linearized at a point `λ`, the companion system
//! `u̇ = J[b](λ,t)·u + b(λ,t)`, `u(0) = x0 − λ` measures how far the true
//! dynamics drifts away from `λ`. A *quasiclassical path* assigns to each
//! target time `t` the value `λ(t)` at which that terminal deviation
//! vanishes: `‖u(t, λ)‖ = 0`, with `λ` held constant over `[0, t]`.
//!
//! For the two scalar model families (cubic potential with quadratic drift,
//! double-well potential with cubic drift, both optionally forced by
//! `A·sin(Ωt) + B·cos(Θt)`) the residual has a closed form built from three
//! convolution kernels against `e^{κ(t−τ)}`. Everything else goes through
//! the generic ODE/SDE route.

use crate::error::{Error, Result};
use crate::integrate::{master_ode_solve, master_sde_solve, TimeGrid, Trajectory, WienerPath};
use crate::linalg::{distance, norm, SquareMatrix};
use crate::polyfield::{MultiIndex, PolyDiffusionMatrix, PolyVectorField, TimeCoefficient};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Scalar model with drift `b(x,t) = a·x² − b·x + A sin(Ωt) + B cos(Θt)`
/// (gradient of a cubic potential, plus periodic forcing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicParams {
    pub a: f64,
    pub b: f64,
    /// Amplitude `A` of the `sin(Ωt)` forcing.
    pub amp_sin: f64,
    /// Angular frequency `Ω` of the sine forcing.
    pub omega: f64,
    /// Amplitude `B` of the `cos(Θt)` forcing.
    pub amp_cos: f64,
    /// Angular frequency `Θ` of the cosine forcing.
    pub theta: f64,
    pub x0: f64,
}

impl CubicParams {
    /// Unforced model with stiffness coefficients `a, b > 0`.
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() || a <= 0.0 || b <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "cubic model needs a > 0 and b > 0, got a={a}, b={b}"
            )));
        }
        Ok(CubicParams {
            a,
            b,
            amp_sin: 0.0,
            omega: 0.0,
            amp_cos: 0.0,
            theta: 0.0,
            x0: 0.0,
        })
    }

    pub fn with_sin(mut self, amp: f64, omega: f64) -> Self {
        self.amp_sin = amp;
        self.omega = omega;
        self
    }

    pub fn with_cos(mut self, amp: f64, theta: f64) -> Self {
        self.amp_cos = amp;
        self.theta = theta;
        self
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    /// Drift linearization rate at `λ`: `κ = ∂b/∂x = 2aλ − b`.
    #[inline]
    pub fn kappa(&self, lambda: f64) -> f64 {
        2.0 * self.a * lambda - self.b
    }

    /// The drift as a symbolic field (for the generic solvers).
    pub fn field(&self) -> PolyVectorField {
        let mut forcing = TimeCoefficient::constant(0.0);
        if self.amp_sin != 0.0 {
            forcing = forcing.with_sin(self.amp_sin, self.omega);
        }
        if self.amp_cos != 0.0 {
            forcing = forcing.with_cos(self.amp_cos, self.theta);
        }
        PolyVectorField::from_terms(
            1,
            [
                (0, MultiIndex::new(vec![2]), TimeCoefficient::constant(self.a)),
                (0, MultiIndex::new(vec![1]), TimeCoefficient::constant(-self.b)),
                (0, MultiIndex::constant(1), forcing),
            ],
        )
        .expect("well-formed scalar drift")
    }
}

/// Scalar model with drift `b(x,t) = −a·x³ + b·x + c + A sin(Ωt) + B cos(Θt)`
/// (gradient of a tilted double-well potential, plus periodic forcing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleWellParams {
    pub a: f64,
    pub b: f64,
    /// Constant tilt of the potential.
    pub c: f64,
    pub amp_sin: f64,
    pub omega: f64,
    pub amp_cos: f64,
    pub theta: f64,
    pub x0: f64,
}

impl DoubleWellParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() || a <= 0.0 || b <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "double-well model needs a > 0 and b > 0, got a={a}, b={b}"
            )));
        }
        Ok(DoubleWellParams {
            a,
            b,
            c: 0.0,
            amp_sin: 0.0,
            omega: 0.0,
            amp_cos: 0.0,
            theta: 0.0,
            x0: 0.0,
        })
    }

    pub fn with_tilt(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_sin(mut self, amp: f64, omega: f64) -> Self {
        self.amp_sin = amp;
        self.omega = omega;
        self
    }

    pub fn with_cos(mut self, amp: f64, theta: f64) -> Self {
        self.amp_cos = amp;
        self.theta = theta;
        self
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    /// Drift linearization rate at `λ`: `κ = ∂b/∂x = b − 3aλ²`.
    ///
    /// The exponent form `−(3aλ² − b)` is used consistently; a variant with
    /// a spurious `λ` factor in the damping is *not* implemented (it is
    /// dimensionally inconsistent with the source term).
    #[inline]
    pub fn kappa(&self, lambda: f64) -> f64 {
        self.b - 3.0 * self.a * lambda * lambda
    }

    pub fn field(&self) -> PolyVectorField {
        let mut forcing = TimeCoefficient::constant(self.c);
        if self.amp_sin != 0.0 {
            forcing = forcing.with_sin(self.amp_sin, self.omega);
        }
        if self.amp_cos != 0.0 {
            forcing = forcing.with_cos(self.amp_cos, self.theta);
        }
        PolyVectorField::from_terms(
            1,
            [
                (0, MultiIndex::new(vec![3]), TimeCoefficient::constant(-self.a)),
                (0, MultiIndex::new(vec![1]), TimeCoefficient::constant(self.b)),
                (0, MultiIndex::constant(1), forcing),
            ],
        )
        .expect("well-formed scalar drift")
    }
}

// ---------------------------------------------------------------------------
// Convolution kernels against e^{κ(t−τ)} on [0, t]
// ---------------------------------------------------------------------------

/// `E(κ,t) = ∫₀ᵗ e^{κ(t−τ)} dτ = (e^{κt} − 1)/κ`, with the removable
/// singularity `E(0,t) = t` evaluated through `expm1` for stability.
#[inline]
fn growth_kernel(kappa: f64, t: f64) -> f64 {
    if kappa == 0.0 {
        t
    } else {
        (kappa * t).exp_m1() / kappa
    }
}

/// `S(κ,Ω,t) = ∫₀ᵗ e^{κ(t−τ)} sin(Ωτ) dτ
///           = (−κ sin Ωt − Ω cos Ωt + Ω e^{κt}) / (κ² + Ω²)`,
/// with `S = 0` when `Ω = 0` (the integrand vanishes identically).
#[inline]
fn sin_kernel(kappa: f64, omega: f64, t: f64) -> f64 {
    if omega == 0.0 {
        return 0.0;
    }
    let arg = omega * t;
    (-kappa * arg.sin() - omega * arg.cos() + omega * (kappa * t).exp())
        / (kappa * kappa + omega * omega)
}

/// `C(κ,Θ,t) = ∫₀ᵗ e^{κ(t−τ)} cos(Θτ) dτ
///           = (−κ cos Θt + Θ sin Θt + κ e^{κt}) / (κ² + Θ²)`,
/// reducing to `E(κ,t)` when `Θ = 0` (the integrand becomes `e^{κ(t−τ)}`).
#[inline]
fn cos_kernel(kappa: f64, theta: f64, t: f64) -> f64 {
    if theta == 0.0 {
        return growth_kernel(kappa, t);
    }
    let arg = theta * t;
    (-kappa * arg.cos() + theta * arg.sin() + kappa * (kappa * t).exp())
        / (kappa * kappa + theta * theta)
}

// ---------------------------------------------------------------------------
// Residuals
// ---------------------------------------------------------------------------

/// Closed-form companion residual for the cubic-potential model:
///
/// `u(t,λ) = (x0−λ)e^{κt} + (aλ²−bλ)E(κ,t) + A·S(κ,Ω,t) + B·C(κ,Θ,t)`
///
/// with `κ = 2aλ − b`. Total on finite inputs; for `κt ≳ 700` the value
/// overflows to `+∞`, which downstream solvers treat as "no root here".
pub fn residual_cubic_closed(p: &CubicParams, lambda: f64, t: f64) -> f64 {
    let kappa = p.kappa(lambda);
    let source = p.a * lambda * lambda - p.b * lambda;
    (p.x0 - lambda) * (kappa * t).exp()
        + source * growth_kernel(kappa, t)
        + p.amp_sin * sin_kernel(kappa, p.omega, t)
        + p.amp_cos * cos_kernel(kappa, p.theta, t)
}

/// Closed-form companion residual for the double-well model:
///
/// `u(t,λ) = (x0−λ)e^{κt} + (−aλ³+bλ+c)E(κ,t) + A·S(κ,Ω,t) + B·C(κ,Θ,t)`
///
/// with `κ = b − 3aλ²`.
pub fn residual_dwell_closed(p: &DoubleWellParams, lambda: f64, t: f64) -> f64 {
    let kappa = p.kappa(lambda);
    let source = -p.a * lambda * lambda * lambda + p.b * lambda + p.c;
    (p.x0 - lambda) * (kappa * t).exp()
        + source * growth_kernel(kappa, t)
        + p.amp_sin * sin_kernel(kappa, p.omega, t)
        + p.amp_cos * cos_kernel(kappa, p.theta, t)
}

/// Generic companion residual for an arbitrary polynomial drift: integrates
/// `u̇ = J[b](λ,t)u + b(λ,t)`, `u(0) = x0 − λ` over `[0, t]` with `steps`
/// Runge–Kutta steps and returns the terminal `u(t, λ)`.
///
/// `t = 0` returns `x0 − λ` exactly. The step count is a caller-side
/// accuracy knob; `steps ≈ t/10⁻⁴` reproduces the closed forms to ~1e-10.
pub fn residual_generic(
    field: &PolyVectorField,
    lambda: &[f64],
    t: f64,
    x0: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    if x0.len() != field.dimension() {
        return Err(Error::DimensionMismatch {
            expected: field.dimension(),
            got: x0.len(),
        });
    }
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "residual time {t} must be non-negative"
        )));
    }
    let u0: Vec<f64> = x0.iter().zip(lambda).map(|(x, l)| x - l).collect();
    if t == 0.0 {
        return Ok(u0);
    }
    let grid = TimeGrid::new(0.0, t, steps.max(1))?;
    let tr = master_ode_solve(field, &grid, lambda, &u0)?;
    if let Some(node) = tr.first_nonfinite() {
        return Err(Error::Divergence { node });
    }
    Ok(tr.final_state().to_vec())
}

/// Stochastic companion residual for the cubic model driven by a recorded
/// noise path of intensity `D`:
///
/// `u(t,λ) = u_det(t,λ) + √D·κ·∫₀ᵗ W(τ) e^{κ(t−τ)} dτ + √D·W(t)`
///
/// — the integrated-by-parts form of the stochastic convolution
/// `√D ∫₀ᵗ e^{κ(t−τ)} dW(τ)`, which avoids differentiating the path. The
/// integral is a trapezoid sum over the path's own nodes (the path is
/// piecewise linear by construction, so refining its grid is the accuracy
/// knob). With `D = 0` this equals [`residual_cubic_closed`] bit-for-bit.
pub fn residual_cubic_stochastic(
    p: &CubicParams,
    intensity: f64,
    wiener: &WienerPath,
    lambda: f64,
    t: f64,
) -> Result<f64> {
    let det = residual_cubic_closed(p, lambda, t);
    if intensity == 0.0 {
        return Ok(det);
    }
    if wiener.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: wiener.dim(),
        });
    }
    let wg = wiener.grid();
    if wg.t0().abs() > 1e-12 {
        return Err(Error::GridMismatch(format!(
            "noise path must start at t = 0, got t0 = {}",
            wg.t0()
        )));
    }
    let tol = 1e-9 * (1.0 + t.abs());
    if t < -tol || t > wg.t1() + tol {
        return Err(Error::TimeOutOfRange {
            t,
            t0: 0.0,
            t1: wg.t1(),
        });
    }
    let kappa = p.kappa(lambda);
    let sqrt_d = intensity.sqrt();
    let w_t = wiener.value_at(t.min(wg.t1()))?[0];

    // trapezoid over full path segments below t, plus the partial segment
    let f = |tau: f64, w: f64| w * (kappa * (t - tau)).exp();
    let mut integral = 0.0;
    let mut tau_prev = 0.0;
    let mut f_prev = 0.0; // W(0) = 0
    for k in 1..=wg.steps() {
        let tau = wg.node_time(k);
        if tau > t + tol {
            break;
        }
        let f_k = f(tau, wiener.node(k)[0]);
        integral += 0.5 * (f_prev + f_k) * (tau - tau_prev);
        tau_prev = tau;
        f_prev = f_k;
    }
    if t > tau_prev + tol {
        let f_t = f(t, w_t);
        integral += 0.5 * (f_prev + f_t) * (t - tau_prev);
    }

    Ok(det + sqrt_d * kappa * integral + sqrt_d * w_t)
}

/// Generic stochastic companion residual: integrates the companion SDE
/// (drift linearization plus diffusion linearization, driven by the given
/// path scaled to intensity `D`) over `[0, t]` and returns the terminal
/// deviation. Covers models without a closed form (e.g. the double-well).
pub fn residual_stochastic_generic(
    field: &PolyVectorField,
    diffusion: &PolyDiffusionMatrix,
    wiener: &WienerPath,
    lambda: &[f64],
    t: f64,
    x0: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    if x0.len() != field.dimension() {
        return Err(Error::DimensionMismatch {
            expected: field.dimension(),
            got: x0.len(),
        });
    }
    let u0: Vec<f64> = x0.iter().zip(lambda).map(|(x, l)| x - l).collect();
    if t == 0.0 {
        return Ok(u0);
    }
    let grid = TimeGrid::new(0.0, t, steps.max(1))?;
    let tr = master_sde_solve(field, diffusion, &grid, lambda, &u0, wiener)?;
    if let Some(node) = tr.first_nonfinite() {
        return Err(Error::Divergence { node });
    }
    Ok(tr.final_state().to_vec())
}

/// Adapts a scalar residual `f(λ, t)` to the vector signature expected by
/// [`solve_lambda_path`].
pub fn scalar_residual<F>(f: F) -> impl Fn(&[f64], f64) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> f64,
{
    move |lambda: &[f64], t: f64| Ok(vec![f(lambda[0], t)])
}

// ---------------------------------------------------------------------------
// Quasiclassical path solving
// ---------------------------------------------------------------------------

/// Knobs of the per-node root solve. The defaults are part of the library's
/// reproducibility contract: `tol = 1e-10`, `bracket_radius = 2.0`,
/// `max_iter = 50`.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Residual norm below which a node counts as converged.
    pub tol: f64,
    /// Half-width of the scalar fallback scan around the previous node.
    pub bracket_radius: f64,
    /// Newton iteration cap per node.
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            bracket_radius: 2.0,
            max_iter: 50,
        }
    }
}

/// Quasiclassical path: per grid node, the solved `λ(t_k)`, the certified
/// residual norm, and whether the node converged.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaPath {
    grid: TimeGrid,
    dim: usize,
    /// Node-major λ values, `n_nodes × dim`.
    lambdas: Vec<f64>,
    residual_norms: Vec<f64>,
    converged: Vec<bool>,
}

impl LambdaPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn lambda(&self, k: usize) -> &[f64] {
        &self.lambdas[k * self.dim..(k + 1) * self.dim]
    }

    pub fn residual_norm(&self, k: usize) -> f64 {
        self.residual_norms[k]
    }

    pub fn is_converged(&self, k: usize) -> bool {
        self.converged[k]
    }

    pub fn n_unconverged(&self) -> usize {
        self.converged.iter().filter(|&&c| !c).count()
    }

    pub fn all_converged(&self) -> bool {
        self.n_unconverged() == 0
    }

    /// Writes `t,lambda_1..lambda_d,residual_norm,converged` rows (converged
    /// as 1/0 for plotting tools), 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "t")?;
        for c in 1..=self.dim {
            write!(w, ",lambda_{c}")?;
        }
        writeln!(w, ",residual_norm,converged")?;
        for k in 0..self.grid.n_nodes() {
            write!(w, "{:.16e}", self.grid.node_time(k))?;
            for v in self.lambda(k) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(
                w,
                ",{:.16e},{}",
                self.residual_norms[k],
                if self.converged[k] { 1 } else { 0 }
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves `‖u(t_k, λ)‖ = 0` for `λ` at every node of a grid starting at
/// `t0 = 0`, warm-starting each node from the previous one.
///
/// Per node: damped Newton with a central finite-difference Jacobian in `λ`
/// (step `1e-6·(1+|λ_j|)`); on failure in one dimension, a sign-change scan
/// over `[λ_prev − r, λ_prev + r]` (400 intervals) with bisection refines
/// every bracketed root and the one nearest `λ_prev` wins, exact ties going
/// to the smaller value. Nodes where nothing converges keep the previous
/// `λ` and are flagged — never interpolated. `λ(0) = x0` always.
pub fn solve_lambda_path<F>(
    residual: F,
    x0: &[f64],
    grid: &TimeGrid,
    options: &SolveOptions,
) -> Result<LambdaPath>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    if grid.t0().abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "quasiclassical grid must start at t = 0, got t0 = {}",
            grid.t0()
        )));
    }
    let dim = x0.len();
    if dim == 0 {
        return Err(Error::InvalidParameter("x0 must be non-empty".into()));
    }
    let n_nodes = grid.n_nodes();
    let mut lambdas = Vec::with_capacity(n_nodes * dim);
    let mut residual_norms = Vec::with_capacity(n_nodes);
    let mut converged = Vec::with_capacity(n_nodes);

    // node 0 is pinned to x0 by the initial condition u(0) = x0 − λ
    lambdas.extend_from_slice(x0);
    let r0 = residual(x0, grid.node_time(0)).map(|u| norm(&u)).unwrap_or(f64::NAN);
    residual_norms.push(r0);
    converged.push(r0 <= options.tol);

    let mut prev = x0.to_vec();
    for k in 1..n_nodes {
        let t = grid.node_time(k);
        let (lam, rnorm, ok) = solve_node(&residual, &prev, t, dim, options);
        lambdas.extend_from_slice(&lam);
        residual_norms.push(rnorm);
        converged.push(ok);
        prev = lam;
    }

    Ok(LambdaPath {
        grid: *grid,
        dim,
        lambdas,
        residual_norms,
        converged,
    })
}

/// One node's root solve; returns (λ, certified residual norm, converged).
/// On failure returns the warm start flagged unconverged.
fn solve_node<F>(
    residual: &F,
    warm: &[f64],
    t: f64,
    dim: usize,
    options: &SolveOptions,
) -> (Vec<f64>, f64, bool)
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    let eval_norm = |lam: &[f64]| -> f64 {
        residual(lam, t)
            .map(|u| norm(&u))
            .unwrap_or(f64::INFINITY)
    };

    if let Some(root) = newton(residual, warm, t, dim, options) {
        let rn = eval_norm(&root);
        if rn <= options.tol {
            return (root, rn, true);
        }
    }

    if dim == 1 {
        if let Some(root) = bracket_scan(residual, warm[0], t, options) {
            let root = vec![root];
            let rn = eval_norm(&root);
            if rn <= options.tol {
                return (root, rn, true);
            }
        }
    }

    let rn = eval_norm(warm);
    (warm.to_vec(), rn, false)
}

/// Damped Newton with central finite-difference Jacobian; `None` when the
/// iteration stalls, hits a singular Jacobian, or runs out of iterations.
fn newton<F>(
    residual: &F,
    warm: &[f64],
    t: f64,
    dim: usize,
    options: &SolveOptions,
) -> Option<Vec<f64>>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    let eval = |lam: &[f64]| -> Option<Vec<f64>> {
        match residual(lam, t) {
            Ok(u) if u.len() == dim && u.iter().all(|v| v.is_finite()) => Some(u),
            _ => None,
        }
    };

    let mut lam = warm.to_vec();
    let mut u = eval(&lam)?;
    for _ in 0..options.max_iter {
        let unorm = norm(&u);
        if unorm <= options.tol {
            return Some(lam);
        }
        // central-difference Jacobian, one column per λ component
        let mut jac = SquareMatrix::zeros(dim);
        for j in 0..dim {
            let h = 1e-6 * (1.0 + lam[j].abs());
            let mut lp = lam.clone();
            let mut lm = lam.clone();
            lp[j] += h;
            lm[j] -= h;
            let up = eval(&lp)?;
            let um = eval(&lm)?;
            for i in 0..dim {
                jac.set(i, j, (up[i] - um[i]) / (2.0 * h));
            }
        }
        let rhs: Vec<f64> = u.iter().map(|v| -v).collect();
        let delta = jac.solve(&rhs)?;

        // backtracking damping: insist on residual decrease
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha >= 1e-6 {
            let trial: Vec<f64> = lam
                .iter()
                .zip(&delta)
                .map(|(l, d)| l + alpha * d)
                .collect();
            if let Some(ut) = eval(&trial) {
                if norm(&ut) < unorm {
                    lam = trial;
                    u = ut;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    // out of iterations; report the point anyway if it certifies
    if norm(&u) <= options.tol {
        Some(lam)
    } else {
        None
    }
}

/// Scalar fallback: scans `[center − r, center + r]` for sign changes,
/// bisects each bracket, and returns the root nearest `center` (exact ties
/// to the smaller value).
fn bracket_scan<F>(residual: &F, center: f64, t: f64, options: &SolveOptions) -> Option<f64>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    const INTERVALS: usize = 400;
    let eval = |lam: f64| -> f64 {
        residual(&[lam], t)
            .map(|u| u[0])
            .unwrap_or(f64::NAN)
    };

    let r = options.bracket_radius;
    let lo = center - r;
    let step = 2.0 * r / INTERVALS as f64;
    let mut roots: Vec<f64> = Vec::new();

    let mut prev_x = lo;
    let mut prev_f = eval(lo);
    if prev_f == 0.0 {
        roots.push(lo);
    }
    for i in 1..=INTERVALS {
        let x = lo + i as f64 * step;
        let fx = eval(x);
        if fx == 0.0 {
            roots.push(x);
        } else if prev_f.is_finite() && fx.is_finite() && prev_f * fx < 0.0 {
            if let Some(root) = bisect(&eval, prev_x, x, prev_f, options.tol) {
                roots.push(root);
            }
        }
        prev_x = x;
        prev_f = fx;
    }

    roots.into_iter().min_by(|a, b| {
        let (da, db) = ((a - center).abs(), (b - center).abs());
        da.partial_cmp(&db)
            .unwrap()
            .then(a.partial_cmp(b).unwrap())
    })
}

/// Bisection on a bracketing interval until the residual certifies or the
/// interval reaches floating-point resolution.
fn bisect<E>(eval: &E, mut lo: f64, mut hi: f64, mut f_lo: f64, tol: f64) -> Option<f64>
where
    E: Fn(f64) -> f64,
{
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = eval(mid);
        if !f_mid.is_finite() {
            return None;
        }
        if f_mid.abs() <= tol {
            return Some(mid);
        }
        if (hi - lo) <= f64::EPSILON * (1.0 + mid.abs()) {
            return Some(mid);
        }
        if f_lo * f_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Per-node gap `δ_k = ‖x(t_k) − λ(t_k)‖` between a classical trajectory
/// and a quasiclassical path on the same grid. Non-finite (blown-up)
/// trajectory nodes yield `NaN` entries, preserved for reporting.
pub fn delta_curve(classical: &Trajectory, lam: &LambdaPath) -> Result<Vec<f64>> {
    if classical.grid() != lam.grid() {
        return Err(Error::GridMismatch(
            "trajectory and quasiclassical path use different grids".into(),
        ));
    }
    if classical.dim() != lam.dim() {
        return Err(Error::DimensionMismatch {
            expected: lam.dim(),
            got: classical.dim(),
        });
    }
    Ok((0..classical.grid().n_nodes())
        .map(|k| distance(classical.state(k), lam.lambda(k)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::ode_solve;
    use crate::polyfield::PolyVectorField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn fig_cubic() -> CubicParams {
        CubicParams::new(1.0, 1.0).unwrap().with_sin(0.3, 5.0)
    }

    fn fig_dwell() -> DoubleWellParams {
        DoubleWellParams::new(1.0, 1.0).unwrap().with_sin(0.3, 5.0)
    }

    // -- kernels ----------------------------------------------------------

    #[test]
    fn growth_kernel_limit_and_value() {
        assert_eq!(growth_kernel(0.0, 2.5), 2.5);
        let (kappa, t) = (0.5f64, 2.0f64);
        let direct = ((kappa * t).exp() - 1.0) / kappa;
        assert!((growth_kernel(kappa, t) - direct).abs() < 1e-14);
    }

    /// Simpson quadrature oracle for the convolution kernels.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn trig_kernels_match_quadrature() {
        let cases = [(-1.3, 5.0, 1.7), (0.8, 2.0, 0.9), (0.0, 5.0, 3.0), (2.0, 0.5, 1.2)];
        for (kappa, freq, t) in cases {
            let s_direct = simpson(|tau| (kappa * (t - tau)).exp() * (freq * tau).sin(), 0.0, t, 4000);
            let c_direct = simpson(|tau| (kappa * (t - tau)).exp() * (freq * tau).cos(), 0.0, t, 4000);
            assert!(
                (sin_kernel(kappa, freq, t) - s_direct).abs() < 1e-9,
                "sin kernel κ={kappa} Ω={freq} t={t}"
            );
            assert!(
                (cos_kernel(kappa, freq, t) - c_direct).abs() < 1e-9,
                "cos kernel κ={kappa} Θ={freq} t={t}"
            );
        }
        // Θ = 0 makes the cosine forcing constant: kernel must equal E
        assert_eq!(cos_kernel(-0.7, 0.0, 2.0), growth_kernel(-0.7, 2.0));
        assert_eq!(sin_kernel(-0.7, 0.0, 2.0), 0.0);
    }

    // -- closed forms vs generic ODE oracle --------------------------------

    #[test]
    fn residuals_at_t0_give_initial_deviation() {
        let p = fig_cubic().with_x0(0.25);
        assert_eq!(residual_cubic_closed(&p, 0.1, 0.0), 0.15);
        let q = fig_dwell().with_x0(-0.1);
        assert_eq!(residual_dwell_closed(&q, 0.05, 0.0), -0.15000000000000002);
        // exact arithmetic: x0 − λ with no kernel contributions
        assert_eq!(residual_dwell_closed(&q, -0.1, 0.0), 0.0);
    }

    #[test]
    fn cubic_closed_matches_ode_at_catalog_point() {
        let p = fig_cubic(); // a=1, b=1, A=0.3, Ω=5, x0=0
        let closed = residual_cubic_closed(&p, 0.1, 1.0);
        let generic = residual_generic(&p.field(), &[0.1], 1.0, &[0.0], 10_000).unwrap()[0];
        assert!(
            (closed - generic).abs() < 1e-8,
            "closed {closed} vs generic {generic}"
        );
    }

    #[test]
    fn dwell_closed_matches_ode_at_catalog_point() {
        let p = fig_dwell(); // a=1, b=1, c=0, A=0.3, Ω=5, x0=0
        let closed = residual_dwell_closed(&p, 0.05, 1.0);
        let generic = residual_generic(&p.field(), &[0.05], 1.0, &[0.0], 10_000).unwrap()[0];
        assert!(
            (closed - generic).abs() < 1e-8,
            "closed {closed} vs generic {generic}"
        );
    }

    #[test]
    fn kappa_zero_branch_agrees_with_ode() {
        // λ = b/(2a) zeroes the linearization rate exactly
        let p = fig_cubic();
        let lambda = p.b / (2.0 * p.a);
        assert_eq!(p.kappa(lambda), 0.0);
        let closed = residual_cubic_closed(&p, lambda, 1.0);
        let generic = residual_generic(&p.field(), &[lambda], 1.0, &[0.0], 10_000).unwrap()[0];
        assert!((closed - generic).abs() < 1e-8);
    }

    #[test]
    fn kappa_continuity_across_zero() {
        let p = fig_cubic().with_x0(0.2);
        let t = 1.3;
        let lambda0 = p.b / (2.0 * p.a);
        let at_zero = residual_cubic_closed(&p, lambda0, t);
        for sign in [-1.0, 1.0] {
            // nudge λ so that κ = ±1e-12
            let lambda = (p.b + sign * 1e-12) / (2.0 * p.a);
            let near = residual_cubic_closed(&p, lambda, t);
            assert!(
                (near - at_zero).abs() < 1e-9,
                "κ = {:+e}: {near} vs {at_zero}",
                p.kappa(lambda)
            );
        }
    }

    #[test]
    fn closed_and_generic_agree_on_randomized_tuples() {
        let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_1001);
        let mut checked = 0;
        while checked < 200 {
            let cubic = rng.random_bool(0.5);
            let a = rng.random_range(0.3..2.0);
            let b = rng.random_range(0.3..2.0);
            let lambda = rng.random_range(-2.0..2.0);
            let t = rng.random_range(0.05..3.0);
            let x0 = rng.random_range(-1.0..1.0);
            let amp_sin = rng.random_range(-1.0..1.0);
            let omega = rng.random_range(0.5..8.0);
            let amp_cos = rng.random_range(-1.0..1.0);
            let theta = rng.random_range(0.5..8.0);

            let (kappa, closed, field) = if cubic {
                let p = CubicParams::new(a, b)
                    .unwrap()
                    .with_sin(amp_sin, omega)
                    .with_cos(amp_cos, theta)
                    .with_x0(x0);
                (p.kappa(lambda), residual_cubic_closed(&p, lambda, t), p.field())
            } else {
                let c = rng.random_range(-1.0..1.0);
                let p = DoubleWellParams::new(a, b)
                    .unwrap()
                    .with_tilt(c)
                    .with_sin(amp_sin, omega)
                    .with_cos(amp_cos, theta)
                    .with_x0(x0);
                (p.kappa(lambda), residual_dwell_closed(&p, lambda, t), p.field())
            };
            if (kappa * t).abs() > 20.0 {
                continue;
            }
            let generic = residual_generic(&field, &[lambda], t, &[x0], 4000).unwrap()[0];
            assert!(
                (closed - generic).abs() <= 1e-7 * (1.0 + generic.abs()),
                "closed {closed} vs generic {generic} (κt = {})",
                kappa * t
            );
            checked += 1;
        }
    }

    #[test]
    fn dwell_equilibria_have_zero_residual() {
        let p = DoubleWellParams::new(1.0, 1.0).unwrap();
        for eq in [-1.0, 0.0, 1.0] {
            let p = p.with_x0(eq);
            for t in [0.0, 0.5, 2.0, 10.0] {
                assert_eq!(residual_dwell_closed(&p, eq, t), 0.0, "λ = {eq}, t = {t}");
            }
        }
    }

    #[test]
    fn generic_residual_linear_drift_is_exact_linearization() {
        // b(x,t) = −x + 0.3 sin 5t: the companion system IS the dynamics,
        // so u(t, λ) = x_det(t) − λ for every λ
        let field = PolyVectorField::linear(&[vec![-1.0]], &[TimeCoefficient::sin(0.3, 5.0)]).unwrap();
        let grid = TimeGrid::new(0.0, 2.0, 20_000).unwrap();
        let x_det = ode_solve(&field, &grid, &[0.4]).unwrap();
        for lambda in [-0.5, 0.0, 0.7] {
            let u = residual_generic(&field, &[lambda], 2.0, &[0.4], 20_000).unwrap()[0];
            let expect = x_det.final_state()[0] - lambda;
            assert!((u - expect).abs() < 1e-10, "λ = {lambda}: {u} vs {expect}");
        }
    }

    // -- stochastic residual ------------------------------------------------

    #[test]
    fn stochastic_residual_with_noise_off_is_bitwise_deterministic() {
        let p = fig_cubic();
        let grid = TimeGrid::new(0.0, 2.0, 200).unwrap();
        let w = WienerPath::generate(&grid, 1, 99).unwrap();
        for (lambda, t) in [(0.1, 1.0), (-0.4, 0.35), (0.9, 2.0)] {
            let a = residual_cubic_stochastic(&p, 0.0, &w, lambda, t).unwrap();
            let b = residual_cubic_closed(&p, lambda, t);
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn stochastic_residual_at_t0_is_initial_deviation() {
        let p = fig_cubic().with_x0(0.3);
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let w = WienerPath::generate(&grid, 1, 5).unwrap();
        let u = residual_cubic_stochastic(&p, 1e-3, &w, 0.1, 0.0).unwrap();
        assert!((u - 0.2).abs() < 1e-15);
    }

    #[test]
    fn stochastic_residual_matches_em_oracle() {
        // EM on the companion SDE with the same path must land on the
        // integrated-by-parts closed form
        let p = fig_cubic();
        let d_noise = 1e-3;
        let grid = TimeGrid::new(0.0, 1.0, 10_000).unwrap();
        let w = WienerPath::generate(&grid, 1, 0xF1653).unwrap();
        let closed = residual_cubic_stochastic(&p, d_noise, &w, 0.1, 1.0).unwrap();

        let c = PolyDiffusionMatrix::scaled_identity(1, d_noise.sqrt());
        let em = master_sde_solve(&p.field(), &c, &grid, &[0.1], &[-0.1], &w).unwrap();
        let em_terminal = em.final_state()[0];
        assert!(
            (closed - em_terminal).abs() < 1e-3,
            "closed {closed} vs EM {em_terminal}"
        );
    }

    #[test]
    fn stochastic_residual_rejects_out_of_range_time() {
        let p = fig_cubic();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let w = WienerPath::generate(&grid, 1, 5).unwrap();
        assert!(matches!(
            residual_cubic_stochastic(&p, 1e-3, &w, 0.1, 1.5),
            Err(Error::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn generic_stochastic_residual_matches_cubic_closed_form() {
        let p = fig_cubic();
        let d_noise = 1e-3;
        let grid = TimeGrid::new(0.0, 1.0, 10_000).unwrap();
        let w = WienerPath::generate(&grid, 1, 0xAB).unwrap();
        let closed = residual_cubic_stochastic(&p, d_noise, &w, 0.2, 1.0).unwrap();
        let c = PolyDiffusionMatrix::scaled_identity(1, d_noise.sqrt());
        let generic =
            residual_stochastic_generic(&p.field(), &c, &w, &[0.2], 1.0, &[0.0], 10_000).unwrap();
        assert!((closed - generic[0]).abs() < 1e-3);
    }

    // -- quasiclassical path solving ---------------------------------------

    #[test]
    fn lambda_path_starts_at_x0() {
        let p = fig_cubic().with_x0(0.37);
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let lam = solve_lambda_path(
            scalar_residual(|l, t| residual_cubic_closed(&p, l, t)),
            &[0.37],
            &grid,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(lam.lambda(0), &[0.37]);
        assert!(lam.is_converged(0));
    }

    #[test]
    fn linear_drift_lambda_equals_classical_path() {
        let field =
            PolyVectorField::linear(&[vec![-1.0]], &[TimeCoefficient::sin(0.3, 5.0)]).unwrap();
        let grid = TimeGrid::new(0.0, 2.0, 100).unwrap();
        let x0 = [0.4];
        let steps_per_unit = 10_000f64;
        let residual = |lam: &[f64], t: f64| {
            let steps = ((t * steps_per_unit).ceil() as usize).max(1);
            residual_generic(&field, lam, t, &x0, steps)
        };
        let lam = solve_lambda_path(residual, &x0, &grid, &SolveOptions::default()).unwrap();
        assert!(lam.all_converged());

        let fine = TimeGrid::new(0.0, 2.0, 20_000).unwrap();
        let x_det = ode_solve(&field, &fine, &x0).unwrap();
        for k in 0..=100 {
            let t = grid.node_time(k);
            let oracle = x_det.state(fine.node_index(t).unwrap())[0];
            assert!(
                (lam.lambda(k)[0] - oracle).abs() < 1e-8,
                "node {k}: λ = {} vs x_det = {oracle}",
                lam.lambda(k)[0]
            );
        }
    }

    #[test]
    fn cubic_preset_path_fully_converges_with_certificates() {
        let p = fig_cubic();
        let grid = TimeGrid::new(0.0, 5.0, 500).unwrap();
        let opts = SolveOptions::default();
        let lam = solve_lambda_path(
            scalar_residual(|l, t| residual_cubic_closed(&p, l, t)),
            &[0.0],
            &grid,
            &opts,
        )
        .unwrap();
        assert!(lam.all_converged(), "{} unconverged", lam.n_unconverged());
        // independent recomputation of every certificate
        for k in 0..=500 {
            let r = residual_cubic_closed(&p, lam.lambda(k)[0], grid.node_time(k)).abs();
            assert!(r <= opts.tol, "node {k}: residual {r}");
            assert!((lam.residual_norm(k) - r).abs() <= 1e-15);
        }
    }

    #[test]
    fn equidistant_roots_tie_break_to_smaller() {
        // residual λ² − 1 has roots ±1, both at distance 1 from λ_prev = 0;
        // its derivative at 0 is 0, so Newton fails and the scan decides
        let grid = TimeGrid::new(0.0, 1.0, 1).unwrap();
        let lam = solve_lambda_path(
            scalar_residual(|l, _| l * l - 1.0),
            &[0.0],
            &grid,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(lam.is_converged(1));
        assert_eq!(lam.lambda(1)[0], -1.0);
    }

    #[test]
    fn rootless_residual_flags_everything_unconverged() {
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let lam = solve_lambda_path(
            scalar_residual(|_, _| 1.0),
            &[0.0],
            &grid,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(lam.n_unconverged(), 5); // including node 0
        for k in 0..=4 {
            assert_eq!(lam.lambda(k), &[0.0], "unconverged nodes keep λ_prev");
        }
    }

    #[test]
    fn lambda_path_csv_has_expected_shape() {
        let p = fig_cubic();
        let grid = TimeGrid::new(0.0, 1.0, 5).unwrap();
        let lam = solve_lambda_path(
            scalar_residual(|l, t| residual_cubic_closed(&p, l, t)),
            &[0.0],
            &grid,
            &SolveOptions::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lambda.csv");
        lam.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,lambda_1,residual_norm,converged");
        assert_eq!(lines.count(), 6);
        assert!(text.lines().skip(1).all(|l| l.ends_with(",1")));
    }

    // -- delta curve ---------------------------------------------------------

    #[test]
    fn delta_curve_zero_when_paths_coincide() {
        let field =
            PolyVectorField::linear(&[vec![-1.0]], &[TimeCoefficient::constant(0.0)]).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let tr = ode_solve(&field, &grid, &[1.0]).unwrap();
        // λ copied from the trajectory itself
        let lam = solve_lambda_path(
            |l: &[f64], t: f64| {
                let k = grid.node_index(t).unwrap();
                Ok(vec![tr.state(k)[0] - l[0]])
            },
            &[1.0],
            &grid,
            &SolveOptions::default(),
        )
        .unwrap();
        let delta = delta_curve(&tr, &lam).unwrap();
        assert!(delta.iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn delta_curve_rejects_mismatched_grids() {
        let field =
            PolyVectorField::linear(&[vec![-1.0]], &[TimeCoefficient::constant(0.0)]).unwrap();
        let g1 = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let g2 = TimeGrid::new(0.0, 1.0, 60).unwrap();
        let tr = ode_solve(&field, &g1, &[1.0]).unwrap();
        let lam = solve_lambda_path(
            scalar_residual(|l, _| -l),
            &[0.0],
            &g2,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(matches!(
            delta_curve(&tr, &lam),
            Err(Error::GridMismatch(_))
        ));
    }
}
