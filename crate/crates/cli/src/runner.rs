//! Experiment runners: each takes a validated config plus an output
//! directory, writes its CSV artifacts, and reports how many solve nodes
//! (if any) failed to certify — the caller maps that to the exit code.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sldp_core::{
    delta_curve, em_two_noise_solve, eps_sweep, expected_deviation,
    expected_deviation_conditional, ode_solve, quasipotential, residual_cubic_stochastic,
    residual_dwell_closed, residual_generic, residual_stochastic_generic, scalar_residual,
    solve_lambda_path, DeviationEstimate, LambdaPath, PolyDiffusionMatrix, PolyVectorField,
    SweepReport, TimeGrid, WienerPath,
};

use crate::config::{ExperimentConfig, WienerSource};
use crate::report::{self, MetaBlock, SweepBlock};

/// What a run produced and how cleanly it converged.
#[derive(Debug)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// Total certifiable units (grid nodes or candidate minimizations).
    pub n_nodes: usize,
    /// Units that completed without a certificate; > 0 maps to exit code 2.
    pub n_unconverged: usize,
}

impl RunOutcome {
    fn clean(files: Vec<PathBuf>) -> Self {
        Self {
            files,
            n_nodes: 0,
            n_unconverged: 0,
        }
    }
}

type Residual = Box<dyn Fn(&[f64], f64) -> sldp_core::Result<Vec<f64>>>;

fn steps_for(t: f64, dt: f64) -> usize {
    ((t / dt).ceil() as usize).clamp(10, 200_000)
}

/// Residual of the deterministic companion system for the configured
/// model: closed form for the two scalar families, integrated for custom
/// fields.
fn deterministic_residual(cfg: &ExperimentConfig) -> Result<Residual> {
    if let Some(p) = cfg.cubic_params()? {
        return Ok(Box::new(scalar_residual(move |l, t| {
            sldp_core::residual_cubic_closed(&p, l, t)
        })));
    }
    if let Some(p) = cfg.double_well_params()? {
        return Ok(Box::new(scalar_residual(move |l, t| {
            residual_dwell_closed(&p, l, t)
        })));
    }
    let field = cfg.build_field()?;
    let x0 = cfg.initial_state();
    let dt = cfg.solver.residual_dt;
    Ok(Box::new(move |l: &[f64], t: f64| {
        residual_generic(&field, l, t, &x0, steps_for(t, dt))
    }))
}

/// Residual of the noise-carrying companion system: quadrature for the
/// quadratic family, integrated companion SDE otherwise.
fn stochastic_residual(cfg: &ExperimentConfig, wiener: &WienerPath) -> Result<Residual> {
    let intensity = cfg.noise.intensity;
    let w = wiener.clone();
    if let Some(p) = cfg.cubic_params()? {
        return Ok(Box::new(move |l: &[f64], t: f64| {
            residual_cubic_stochastic(&p, intensity, &w, l[0], t).map(|v| vec![v])
        }));
    }
    let field = cfg.build_field()?;
    let x0 = cfg.initial_state();
    let dim = cfg.dimension();
    let diffusion = PolyDiffusionMatrix::scaled_identity(dim, intensity.sqrt());
    let dt = cfg.solver.residual_dt;
    Ok(Box::new(move |l: &[f64], t: f64| {
        residual_stochastic_generic(&field, &diffusion, &w, l, t, &x0, steps_for(t, dt))
    }))
}

fn prepare_out_dir(out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))
}

fn load_or_generate_wiener(cfg: &ExperimentConfig, grid: &TimeGrid) -> Result<WienerPath> {
    match cfg.noise.source {
        WienerSource::Generate => Ok(WienerPath::generate(
            grid,
            cfg.dimension(),
            cfg.noise.seed,
        )?),
        WienerSource::Load => {
            let path = cfg
                .noise
                .path
                .as_deref()
                .context("noise source \"load\" requires a path")?;
            Ok(WienerPath::load_csv(Path::new(path))?)
        }
    }
}

/// Classical trajectory vs quasiclassical path, per-node distance and
/// root certificates → `compare.csv`.
pub fn run_compare(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    prepare_out_dir(out_dir)?;
    let grid = cfg.time_grid()?;
    let field = cfg.build_field()?;
    let x0 = cfg.initial_state();

    let traj = ode_solve(&field, &grid, &x0)?;
    let residual = deterministic_residual(cfg)?;
    let lam = solve_lambda_path(&residual, &x0, &grid, &cfg.solver.to_options())?;
    let delta = delta_curve(&traj, &lam)?;

    let mut meta = MetaBlock::new("compare", cfg);
    meta.push_float("dt", grid.dt());
    let file = out_dir.join("compare.csv");
    report::write_compare_csv(&file, &meta, &traj, &lam, &delta)?;

    Ok(RunOutcome {
        files: vec![file],
        n_nodes: grid.n_nodes(),
        n_unconverged: lam.n_unconverged(),
    })
}

/// Recorded-noise trajectory vs the noise-carrying quasiclassical path →
/// `compare_stochastic.csv` plus the persisted noise path (and optionally
/// the fixed-noise ensemble table).
pub fn run_compare_stochastic(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    if cfg.noise.intensity <= 0.0 {
        bail!("compare-stochastic requires a positive noise intensity");
    }
    prepare_out_dir(out_dir)?;
    let grid = cfg.time_grid()?;
    let field = cfg.build_field()?;
    let x0 = cfg.initial_state();
    let dim = cfg.dimension();

    let wiener = load_or_generate_wiener(cfg, &grid)?;
    let c_noise = PolyDiffusionMatrix::scaled_identity(dim, cfg.noise.intensity.sqrt());
    let c_zero = PolyDiffusionMatrix::scaled_identity(dim, 0.0);
    let traj = em_two_noise_solve(&field, &c_noise, &c_zero, &grid, &x0, &wiener, &wiener)?;

    let residual = stochastic_residual(cfg, &wiener)?;
    let lam = solve_lambda_path(&residual, &x0, &grid, &cfg.solver.to_options())?;
    let delta = delta_curve(&traj, &lam)?;

    let mut meta = MetaBlock::new("compare-stochastic", cfg);
    meta.push_float("dt", grid.dt());
    meta.push("wiener_seed", wiener.seed());
    meta.push_float("intensity", cfg.noise.intensity);

    let compare_file = out_dir.join("compare_stochastic.csv");
    report::write_compare_csv(&compare_file, &meta, &traj, &lam, &delta)?;
    let wiener_file = out_dir.join("wiener.csv");
    wiener.save_csv(&wiener_file)?;
    let mut files = vec![compare_file, wiener_file];

    if cfg.mc.conditional {
        let mut rows: Vec<(f64, DeviationEstimate)> = Vec::new();
        let mut meta = MetaBlock::new("compare-stochastic/conditional", cfg);
        meta.push("master_seed", cfg.mc.master_seed);
        for node in quartile_nodes(&grid) {
            let t = grid.node_time(node);
            let lambda = lam.lambda(node).to_vec();
            for &eps in &cfg.mc.ladder {
                match expected_deviation_conditional(
                    &field,
                    cfg.noise.intensity,
                    &wiener,
                    &x0,
                    eps,
                    &lambda,
                    t,
                    &grid,
                    cfg.mc.n_paths,
                    cfg.mc.master_seed,
                ) {
                    Ok(est) => rows.push((t, est)),
                    Err(e) => meta.push(
                        "conditional_failure",
                        format!("t = {t}, epsilon = {eps}: {e}"),
                    ),
                }
            }
        }
        let file = out_dir.join("conditional.csv");
        report::write_conditional_csv(&file, &meta, &rows)?;
        files.push(file);
    }

    Ok(RunOutcome {
        files,
        n_nodes: grid.n_nodes(),
        n_unconverged: lam.n_unconverged(),
    })
}

/// The probe nodes a sweep defaults to: the grid's quartile nodes.
fn quartile_nodes(grid: &TimeGrid) -> Vec<usize> {
    let s = grid.steps();
    let mut nodes: Vec<usize> = [s / 4, s / 2, 3 * s / 4, s]
        .into_iter()
        .filter(|&k| k > 0)
        .collect();
    nodes.dedup();
    nodes
}

/// Noise-ladder deviation sweep against the companion-residual bound →
/// `sweep.csv` (one annotated block per probe).
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    prepare_out_dir(out_dir)?;
    let grid = cfg.time_grid()?;
    let field = cfg.build_field()?;
    let x0 = cfg.initial_state();

    // probe times: configured (must lie on grid nodes) or quartiles
    let nodes: Vec<usize> = match &cfg.mc.probe_times {
        Some(times) => times
            .iter()
            .map(|&t| {
                grid.node_index(t)
                    .with_context(|| format!("probe time {t} is not a grid node"))
            })
            .collect::<Result<_>>()?,
        None => quartile_nodes(&grid),
    };

    // probe anchors: configured, or the solved quasiclassical path
    let (lambdas, lambda_converged, n_nodes, n_unconverged): (Vec<Vec<f64>>, Vec<bool>, usize, usize) =
        match &cfg.mc.probe_lambdas {
            Some(ls) => (ls.clone(), vec![true; ls.len()], 0, 0),
            None => {
                let residual = deterministic_residual(cfg)?;
                let lam: LambdaPath =
                    solve_lambda_path(&residual, &x0, &grid, &cfg.solver.to_options())?;
                (
                    nodes.iter().map(|&k| lam.lambda(k).to_vec()).collect(),
                    nodes.iter().map(|&k| lam.is_converged(k)).collect(),
                    grid.n_nodes(),
                    lam.n_unconverged(),
                )
            }
        };

    let blocks: Vec<SweepBlock> = nodes
        .iter()
        .zip(&lambdas)
        .zip(&lambda_converged)
        .map(|((&node, lambda), &converged)| {
            let t = grid.node_time(node);
            let mut block = sweep_probe(cfg, &field, &x0, lambda, t, &grid);
            if !converged {
                block.notes.push("probe anchor is uncertified".to_string());
            }
            block
        })
        .collect();

    let mut meta = MetaBlock::new("sweep", cfg);
    meta.push_float("dt", grid.dt());
    meta.push("master_seed", cfg.mc.master_seed);
    let file = out_dir.join("sweep.csv");
    report::write_sweep_csv(&file, &meta, &blocks)?;

    Ok(RunOutcome {
        files: vec![file],
        n_nodes,
        n_unconverged,
    })
}

/// One sweep probe; a whole-ladder failure falls back to rung-by-rung
/// salvage so partial data still reaches the table (with the bound check
/// voided).
fn sweep_probe(
    cfg: &ExperimentConfig,
    field: &PolyVectorField,
    x0: &[f64],
    lambda: &[f64],
    t: f64,
    grid: &TimeGrid,
) -> SweepBlock {
    match eps_sweep(
        field,
        x0,
        lambda,
        t,
        grid,
        &cfg.mc.ladder,
        cfg.mc.n_paths,
        cfg.mc.master_seed,
    ) {
        Ok(report) => SweepBlock {
            t,
            lambda: lambda.to_vec(),
            outcome: Ok(report),
            failed_rungs: Vec::new(),
            notes: Vec::new(),
        },
        Err(_) => {
            let mut ladder = Vec::new();
            let mut failed = Vec::new();
            for &eps in &cfg.mc.ladder {
                match expected_deviation(
                    field,
                    x0,
                    eps,
                    lambda,
                    t,
                    grid,
                    cfg.mc.n_paths,
                    cfg.mc.master_seed,
                ) {
                    Ok(est) => ladder.push(est),
                    Err(e) => failed.push((eps, e.to_string())),
                }
            }
            let bound = residual_generic(field, lambda, t, x0, steps_for(t, 1e-4))
                .map(|u| sldp_core::linalg::norm(&u))
                .unwrap_or(f64::NAN);
            let outcome = if ladder.is_empty() {
                Err("all rungs failed".to_string())
            } else {
                let min_mean = ladder
                    .iter()
                    .map(|e| e.mean)
                    .fold(f64::INFINITY, f64::min);
                Ok(SweepReport {
                    ladder,
                    bound,
                    min_mean,
                    // rung failures void the check
                    bound_satisfied: false,
                })
            };
            SweepBlock {
                t,
                lambda: lambda.to_vec(),
                outcome,
                failed_rungs: failed,
                notes: Vec::new(),
            }
        }
    }
}

/// Transition-cost minimization over candidate transition times →
/// `action.csv` table plus `action_path.csv` with the best path.
pub fn run_action(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    prepare_out_dir(out_dir)?;
    let field = cfg.build_field()?;
    let x0 = cfg.initial_state();
    let start = cfg.action.start.clone().unwrap_or(x0);

    let qp = quasipotential(
        &start,
        &cfg.action.target,
        &field,
        &cfg.action.t_candidates,
        cfg.action.knots,
        &cfg.action.to_options(),
    )?;

    let mut meta = MetaBlock::new("action", cfg);
    meta.push_float("quasipotential", qp.value);
    meta.push_float("best_t", qp.best_t);
    meta.push("best_converged", i32::from(qp.converged));

    let table_file = out_dir.join("action.csv");
    report::write_action_csv(&table_file, &meta, &qp.table)?;
    let path_file = out_dir.join("action_path.csv");
    report::write_path_csv(&path_file, &meta, &qp.path)?;

    let n_unconverged = qp.table.iter().filter(|(_, _, c)| !c).count();
    Ok(RunOutcome {
        files: vec![table_file, path_file],
        n_nodes: qp.table.len(),
        n_unconverged,
    })
}

/// Standalone noise-path generation → `wiener.csv`.
pub fn run_wiener_gen(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    prepare_out_dir(out_dir)?;
    let grid = cfg.time_grid()?;
    let w = WienerPath::generate(&grid, cfg.dimension(), cfg.noise.seed)?;
    let file = out_dir.join("wiener.csv");
    w.save_csv(&file)?;
    Ok(RunOutcome::clean(vec![file]))
}
