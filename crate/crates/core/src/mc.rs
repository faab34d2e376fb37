//! Monte Carlo estimation of expected deviations `E‖X_t^ε − λ‖` and
//! empirical checks of the residual bound over a decreasing ε-ladder.
//!
//! Reproducibility contract: per-path seeds are derived from
//! `(master_seed, path_index)` by a fixed 64-bit mixer, path simulations
//! run in parallel, and the reduction always happens in ascending
//! path-index order after all workers finish — identical inputs give
//! bit-identical estimates regardless of worker count.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrate::{em_sde_solve, em_two_noise_solve, TimeGrid, WienerPath};
use crate::linalg::{distance, norm};
use crate::master::residual_generic;
use crate::polyfield::{PolyDiffusionMatrix, PolyVectorField};

/// Mixes `(master_seed, path_index)` into an independent-looking per-path
/// seed: one additive step of the golden-ratio sequence followed by the
/// SplitMix64 finalizer (multiply–xorshift rounds).
pub fn path_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// One Monte Carlo estimate of `E‖X_t^ε − λ‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationEstimate {
    pub epsilon: f64,
    pub t: f64,
    /// Sample mean over non-diverged paths, ascending-index reduction.
    pub mean: f64,
    /// Sample standard deviation / √(valid paths); 0 when fewer than two
    /// valid paths or in the deterministic ε = 0 limit.
    pub stderr: f64,
    pub n_paths: usize,
    /// Paths whose trajectory went non-finite at or before `t`.
    pub n_diverged: usize,
}

/// ε-ladder sweep compared against the companion-residual bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Estimates ordered by decreasing ε, as given.
    pub ladder: Vec<DeviationEstimate>,
    /// `‖u(t, λ)‖` from the generic companion residual.
    pub bound: f64,
    /// Minimum mean over the ladder — the finite surrogate for the
    /// small-noise limit (the full table stays available for audit).
    pub min_mean: f64,
    /// `min_mean ≤ bound + 3·stderr` at the minimizing rung.
    pub bound_satisfied: bool,
}

impl SweepReport {
    /// Writes `epsilon,mean,stderr,n_paths,n_diverged,bound,bound_satisfied`
    /// rows (booleans as 1/0), 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "epsilon,mean,stderr,n_paths,n_diverged,bound,bound_satisfied")?;
        self.write_rows(&mut w)
    }

    /// Appends the data rows (no header) to an open writer; lets callers
    /// stack several probe blocks into one file.
    pub fn write_rows<W: Write>(&self, w: &mut W) -> Result<()> {
        for e in &self.ladder {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{},{},{:.16e},{}",
                e.epsilon,
                e.mean,
                e.stderr,
                e.n_paths,
                e.n_diverged,
                self.bound,
                if self.bound_satisfied { 1 } else { 0 }
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_probe_inputs(
    field: &PolyVectorField,
    x0: &[f64],
    lambda: &[f64],
    n_paths: usize,
) -> Result<()> {
    let dim = field.dimension();
    if x0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x0.len(),
        });
    }
    if lambda.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: lambda.len(),
        });
    }
    if n_paths < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 paths, got {n_paths}"
        )));
    }
    Ok(())
}

/// Ordered reduction of per-path deviations into a [`DeviationEstimate`].
fn reduce(
    values: Vec<Option<f64>>,
    epsilon: f64,
    t: f64,
) -> Result<DeviationEstimate> {
    let n_paths = values.len();
    let n_diverged = values.iter().filter(|v| v.is_none()).count();
    let n_valid = n_paths - n_diverged;
    if n_valid == 0 {
        return Err(Error::AllPathsDiverged { n_paths });
    }
    let mut sum = 0.0;
    for v in values.iter().flatten() {
        sum += v;
    }
    let mean = sum / n_valid as f64;
    let stderr = if n_valid >= 2 {
        let mut ss = 0.0;
        for v in values.iter().flatten() {
            ss += (v - mean) * (v - mean);
        }
        (ss / (n_valid - 1) as f64).sqrt() / (n_valid as f64).sqrt()
    } else {
        0.0
    };
    Ok(DeviationEstimate {
        epsilon,
        t,
        mean,
        stderr,
        n_paths,
        n_diverged,
    })
}

/// Estimates `E‖X_t^ε − λ‖` for `dX = b(X,s)ds + √ε dW`, `X(t0) = x0`,
/// over `n_paths` independent noise paths. Paths that blow up at or before
/// `t` are excluded from the mean and counted (the raw expectation is
/// infinite once blow-up has positive probability; the count keeps the
/// exclusion honest). `ε = 0` short-circuits to the single deterministic
/// Euler path: exact mean, zero stderr.
#[allow(clippy::too_many_arguments)]
pub fn expected_deviation(
    field: &PolyVectorField,
    x0: &[f64],
    epsilon: f64,
    lambda: &[f64],
    t: f64,
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
) -> Result<DeviationEstimate> {
    check_probe_inputs(field, x0, lambda, n_paths)?;
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "noise intensity {epsilon} must be non-negative"
        )));
    }
    let dim = field.dimension();
    let node = grid.node_index(t)?;
    let diffusion = PolyDiffusionMatrix::scaled_identity(dim, epsilon.sqrt());

    if epsilon == 0.0 {
        // all paths coincide: one zero-noise Euler integration
        let w = WienerPath::generate(grid, dim, path_seed(master_seed, 0))?;
        let tr = em_sde_solve(field, &diffusion, grid, x0, &w)?;
        if tr.diverged_by(node) {
            return Err(Error::AllPathsDiverged { n_paths });
        }
        return Ok(DeviationEstimate {
            epsilon,
            t,
            mean: distance(tr.state(node), lambda),
            stderr: 0.0,
            n_paths,
            n_diverged: 0,
        });
    }

    let values: Vec<Option<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let w = WienerPath::generate(grid, dim, path_seed(master_seed, i)).ok()?;
            let tr = em_sde_solve(field, &diffusion, grid, x0, &w).ok()?;
            if tr.diverged_by(node) {
                None
            } else {
                Some(distance(tr.state(node), lambda))
            }
        })
        .collect();
    reduce(values, epsilon, t)
}

/// Conditional variant: the `ω`-channel noise path (intensity `D`) is held
/// fixed across the whole ensemble while the `ϖ`-channel (intensity `ε`)
/// is resampled per path — estimating the inner expectation
/// `E_ϖ‖X_t^{ε}(ω,ϖ) − λ_ω‖` given one recorded `ω`.
#[allow(clippy::too_many_arguments)]
pub fn expected_deviation_conditional(
    field: &PolyVectorField,
    intensity: f64,
    wiener: &WienerPath,
    x0: &[f64],
    epsilon: f64,
    lambda_omega: &[f64],
    t: f64,
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
) -> Result<DeviationEstimate> {
    check_probe_inputs(field, x0, lambda_omega, n_paths)?;
    let dim = field.dimension();
    let node = grid.node_index(t)?;
    let c_omega = PolyDiffusionMatrix::scaled_identity(dim, intensity.sqrt());
    let c_eps = PolyDiffusionMatrix::scaled_identity(dim, epsilon.sqrt());

    if epsilon == 0.0 {
        let tr = em_two_noise_solve(field, &c_omega, &c_eps, grid, x0, wiener, wiener)?;
        if tr.diverged_by(node) {
            return Err(Error::AllPathsDiverged { n_paths });
        }
        return Ok(DeviationEstimate {
            epsilon,
            t,
            mean: distance(tr.state(node), lambda_omega),
            stderr: 0.0,
            n_paths,
            n_diverged: 0,
        });
    }

    let values: Vec<Option<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let w_eps = WienerPath::generate(grid, dim, path_seed(master_seed, i)).ok()?;
            let tr =
                em_two_noise_solve(field, &c_omega, &c_eps, grid, x0, wiener, &w_eps).ok()?;
            if tr.diverged_by(node) {
                None
            } else {
                Some(distance(tr.state(node), lambda_omega))
            }
        })
        .collect();
    reduce(values, epsilon, t)
}

/// Runs [`expected_deviation`] down a strictly decreasing ε-ladder and
/// compares the ladder minimum against the companion-residual bound
/// `‖u(t, λ)‖`. All rungs share the master seed (common random numbers),
/// so rung-to-rung differences reflect ε alone.
///
/// The small-noise limit is reported as the ladder minimum — a finite
/// surrogate; the full table is retained so the reading stays auditable.
#[allow(clippy::too_many_arguments)]
pub fn eps_sweep(
    field: &PolyVectorField,
    x0: &[f64],
    lambda: &[f64],
    t: f64,
    grid: &TimeGrid,
    ladder: &[f64],
    n_paths: usize,
    master_seed: u64,
) -> Result<SweepReport> {
    if ladder.is_empty()
        || ladder.iter().any(|&e| !e.is_finite() || e < 0.0)
        || ladder.windows(2).any(|w| w[0] <= w[1])
    {
        return Err(Error::InvalidLadder);
    }
    let mut estimates = Vec::with_capacity(ladder.len());
    for &eps in ladder {
        estimates.push(expected_deviation(
            field,
            x0,
            eps,
            lambda,
            t,
            grid,
            n_paths,
            master_seed,
        )?);
    }

    // residual bound at oracle resolution (dt ≈ 1e-4, clamped for tiny/huge spans)
    let steps = ((t / 1e-4).ceil() as usize).clamp(100, 200_000);
    let bound = norm(&residual_generic(field, lambda, t, x0, steps)?);

    let best = estimates
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.mean.partial_cmp(&b.mean).unwrap())
        .map(|(i, _)| i)
        .expect("non-empty ladder");
    let min_mean = estimates[best].mean;
    let bound_satisfied = min_mean <= bound + 3.0 * estimates[best].stderr;

    Ok(SweepReport {
        ladder: estimates,
        bound,
        min_mean,
        bound_satisfied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyfield::{MultiIndex, TimeCoefficient};

    fn ou_field() -> PolyVectorField {
        PolyVectorField::linear(&[vec![-1.0]], &[TimeCoefficient::constant(0.0)]).unwrap()
    }

    fn zero_field() -> PolyVectorField {
        PolyVectorField::linear(&[vec![0.0]], &[TimeCoefficient::constant(0.0)]).unwrap()
    }

    #[test]
    fn path_seeds_differ_across_indices_and_masters() {
        let s: Vec<u64> = (0..100).map(|i| path_seed(42, i)).collect();
        let mut sorted = s.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 100, "collision in the first 100 path seeds");
        assert_ne!(path_seed(42, 0), path_seed(43, 0));
    }

    #[test]
    fn epsilon_zero_is_the_deterministic_limit() {
        let field = ou_field();
        let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let est =
            expected_deviation(&field, &[1.0], 0.0, &[0.2], 1.0, &grid, 100, 7).unwrap();
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.n_diverged, 0);
        // oracle: the same zero-noise Euler recursion, x_{k+1} = x_k(1 − dt)
        let mut x = 1.0f64;
        for _ in 0..1000 {
            x = x + grid.dt() * -x;
        }
        assert_eq!(est.mean, (x - 0.2f64).abs());
    }

    #[test]
    fn ou_deviation_matches_folded_normal_oracle() {
        // X_1 ~ N(x0 e^{−1}, σ²), σ² = ε(1 − e^{−2})/2; with x0 = λ = 0 the
        // deviation |X_1| is folded normal with mean σ√(2/π)
        let eps = 0.04f64;
        let field = ou_field();
        let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
        let est =
            expected_deviation(&field, &[0.0], eps, &[0.0], 1.0, &grid, 10_000, 2024).unwrap();
        let sigma = (eps * (1.0 - (-2.0f64).exp()) / 2.0).sqrt();
        let oracle = sigma * (2.0 / std::f64::consts::PI).sqrt();
        assert!(
            (est.mean - oracle).abs() <= 3.5 * est.stderr,
            "mean {} vs folded-normal {oracle} (stderr {})",
            est.mean,
            est.stderr
        );
        assert_eq!(est.n_diverged, 0);
    }

    #[test]
    fn estimates_are_bit_identical_across_runs_and_thread_counts() {
        let field = ou_field();
        let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
        let run = || expected_deviation(&field, &[0.0], 0.01, &[0.1], 1.0, &grid, 500, 99).unwrap();
        let a = run();
        let b = run();
        assert_eq!(a, b);

        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(run);
        assert_eq!(a.mean.to_bits(), single.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), single.stderr.to_bits());
    }

    #[test]
    fn stderr_halves_when_paths_quadruple() {
        let field = ou_field();
        let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
        let small =
            expected_deviation(&field, &[0.0], 0.04, &[0.0], 1.0, &grid, 500, 11).unwrap();
        let large =
            expected_deviation(&field, &[0.0], 0.04, &[0.0], 1.0, &grid, 2000, 11).unwrap();
        let ratio = small.stderr / large.stderr;
        assert!(
            (1.6..=2.5).contains(&ratio),
            "stderr ratio {ratio} (want ≈ 2)"
        );
    }

    #[test]
    fn divergence_counts_grow_with_time() {
        // quadratic drift with strong forcing and noise: some paths escape
        let field = PolyVectorField::from_terms(
            1,
            [
                (0, MultiIndex::new(vec![2]), TimeCoefficient::constant(1.0)),
                (0, MultiIndex::new(vec![1]), TimeCoefficient::constant(-1.0)),
                (0, MultiIndex::constant(1), TimeCoefficient::sin(3.0, 5.0)),
            ],
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 3.0, 600).unwrap();
        let early =
            expected_deviation(&field, &[0.5], 1.0, &[0.0], 1.5, &grid, 400, 31).unwrap();
        let late =
            expected_deviation(&field, &[0.5], 1.0, &[0.0], 3.0, &grid, 400, 31).unwrap();
        assert!(
            late.n_diverged >= early.n_diverged,
            "diverged {} then {}",
            early.n_diverged,
            late.n_diverged
        );
        assert!(late.n_diverged > 0, "expected some blow-up at these settings");
        assert!(late.n_diverged < 400, "expected some survivors");
    }

    #[test]
    fn all_paths_diverged_is_an_error() {
        // ẋ = x² from x0 = 2 blows up at t = 0.5 deterministically
        let field = PolyVectorField::from_terms(
            1,
            [(0, MultiIndex::new(vec![2]), TimeCoefficient::constant(1.0))],
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 2.0, 400).unwrap();
        assert!(matches!(
            expected_deviation(&field, &[2.0], 1e-4, &[0.0], 2.0, &grid, 50, 3),
            Err(Error::AllPathsDiverged { n_paths: 50 })
        ));
        assert!(matches!(
            expected_deviation(&field, &[2.0], 0.0, &[0.0], 2.0, &grid, 50, 3),
            Err(Error::AllPathsDiverged { n_paths: 50 })
        ));
    }

    #[test]
    fn linear_system_satisfies_the_bound() {
        // for linear drift the companion residual is exact, so the sweep
        // minimum must sit at/below bound + 3·stderr
        let field = ou_field();
        let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let report = eps_sweep(
            &field,
            &[1.0],
            &[0.2],
            1.0,
            &grid,
            &[1e-1, 1e-2, 1e-3, 1e-4],
            2000,
            424_242,
        )
        .unwrap();
        assert!(report.bound_satisfied, "min {} vs bound {}", report.min_mean, report.bound);
        // means decrease toward the bound as ε shrinks
        for w in report.ladder.windows(2) {
            assert!(w[1].mean <= w[0].mean + 3.0 * (w[0].stderr + w[1].stderr));
        }
        // smallest rung sits on the bound up to sampling noise plus the
        // first-order Euler discrepancy against the fourth-order bound
        let last = report.ladder.last().unwrap();
        assert!(
            (last.mean - report.bound).abs() <= 4.0 * last.stderr + 5e-4,
            "last rung {} vs bound {} (stderr {})",
            last.mean,
            report.bound,
            last.stderr
        );
    }

    #[test]
    fn ladder_validation_rejects_bad_input() {
        let field = ou_field();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        for bad in [vec![], vec![1e-2, 1e-1], vec![1e-1, 1e-1], vec![-1.0]] {
            assert!(matches!(
                eps_sweep(&field, &[0.0], &[0.0], 1.0, &grid, &bad, 10, 1),
                Err(Error::InvalidLadder)
            ));
        }
    }

    #[test]
    fn degenerate_single_rung_sweep_is_deterministic() {
        let field = ou_field();
        let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let report =
            eps_sweep(&field, &[1.0], &[0.2], 1.0, &grid, &[0.0], 100, 5).unwrap();
        assert_eq!(report.ladder.len(), 1);
        assert_eq!(report.ladder[0].stderr, 0.0);
        assert_eq!(report.min_mean, report.ladder[0].mean);
    }

    #[test]
    fn conditional_estimate_cancels_the_shared_channel() {
        // b ≡ 0 and λ_ω = x0 + √D·W(t): the ω-channel cancels exactly, the
        // deviation is pure ϖ-noise of size √ε
        let field = zero_field();
        let grid = TimeGrid::new(0.0, 1.0, 500).unwrap();
        let d_noise = 0.01f64;
        let w = WienerPath::generate(&grid, 1, 8).unwrap();
        let lambda_omega = [0.3 + d_noise.sqrt() * w.node(500)[0]];

        let exact = expected_deviation_conditional(
            &field, d_noise, &w, &[0.3], 0.0, &lambda_omega, 1.0, &grid, 100, 17,
        )
        .unwrap();
        assert!(exact.mean < 1e-12, "ε = 0 deviation {}", exact.mean);
        assert_eq!(exact.stderr, 0.0);

        let coarse = expected_deviation_conditional(
            &field, d_noise, &w, &[0.3], 1e-2, &lambda_omega, 1.0, &grid, 400, 17,
        )
        .unwrap();
        let fine = expected_deviation_conditional(
            &field, d_noise, &w, &[0.3], 1e-4, &lambda_omega, 1.0, &grid, 400, 17,
        )
        .unwrap();
        assert!(fine.mean < coarse.mean);
        // ϖ-deviation is √ε |N(0,1)| in law: mean ≈ √(ε·t)·√(2/π)
        let oracle = (1e-2f64).sqrt() * (2.0 / std::f64::consts::PI).sqrt();
        assert!((coarse.mean - oracle).abs() <= 4.0 * coarse.stderr + 1e-3);
    }

    #[test]
    fn sweep_csv_shape() {
        let field = ou_field();
        let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
        let report = eps_sweep(
            &field,
            &[1.0],
            &[0.2],
            1.0,
            &grid,
            &[1e-2, 1e-3],
            50,
            12,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("sweep.csv");
        report.write_csv(&f).unwrap();
        let text = std::fs::read_to_string(&f).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "epsilon,mean,stderr,n_paths,n_diverged,bound,bound_satisfied"
        );
        assert_eq!(lines.count(), 2);
    }
}
