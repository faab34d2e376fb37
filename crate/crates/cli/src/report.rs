//! Deterministic CSV emission. Every file starts with a `#`-comment
//! metadata block (command, preset tag, seeds, step size, and the full
//! config echo — enough to re-run bit-identically); the generation
//! timestamp is the block's final line so determinism checks can strip
//! exactly that one line. Floats are written with 17 significant digits.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use sldp_core::{LambdaPath, Trajectory};

use crate::config::ExperimentConfig;

/// Metadata block accumulated as ordered `key = value` pairs.
pub struct MetaBlock {
    pairs: Vec<(String, String)>,
}

impl MetaBlock {
    /// Starts a block for one command run, echoing the full config.
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        let mut block = Self { pairs: Vec::new() };
        block.push("command", command);
        block.push("version", env!("CARGO_PKG_VERSION"));
        block.push("preset", cfg.preset_tag());
        for line in cfg.emit().lines().filter(|l| !l.trim().is_empty()) {
            block.push("config", line);
        }
        block
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.pairs.push((key.to_string(), value.to_string()));
    }

    pub fn push_float(&mut self, key: &str, value: f64) {
        self.pairs.push((key.to_string(), fmt_float(value)));
    }

    fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        for (k, v) in &self.pairs {
            writeln!(w, "# {k} = {v}")?;
        }
        // timestamp on its own, final metadata line — excluded from
        // byte-identity comparisons
        writeln!(w, "# generated = {}", chrono::Utc::now().to_rfc3339())?;
        Ok(())
    }
}

/// 17 significant digits — lossless for f64, well past the 12 required.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create output file {}", path.display())
    })?))
}

fn header_for(prefix_scalar: &str, prefix_vec: &[(&str, usize)], suffix: &str) -> String {
    let mut cols = vec![prefix_scalar.to_string()];
    for (name, dim) in prefix_vec {
        if *dim == 1 {
            cols.push(name.to_string());
        } else {
            cols.extend((1..=*dim).map(|i| format!("{name}_{i}")));
        }
    }
    if !suffix.is_empty() {
        cols.extend(suffix.split(',').map(str::to_string));
    }
    cols.join(",")
}

/// The per-node comparison table: reference trajectory, quasiclassical
/// path, their distance, and the root certificate per node.
pub fn write_compare_csv(
    path: &Path,
    meta: &MetaBlock,
    traj: &Trajectory,
    lam: &LambdaPath,
    delta: &[f64],
) -> Result<()> {
    let mut w = create(path)?;
    meta.write(&mut w)?;
    let dim = traj.dim();
    writeln!(
        w,
        "{}",
        header_for(
            "t",
            &[("x_classical", dim), ("lambda", dim)],
            "delta,residual_norm,converged"
        )
    )?;
    let grid = traj.grid();
    for (k, dk) in delta.iter().enumerate() {
        let mut row = vec![fmt_float(grid.node_time(k))];
        row.extend(traj.state(k).iter().map(|v| fmt_float(*v)));
        row.extend(lam.lambda(k).iter().map(|v| fmt_float(*v)));
        row.push(fmt_float(*dk));
        row.push(fmt_float(lam.residual_norm(k)));
        row.push(if lam.is_converged(k) { "1" } else { "0" }.to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// One block of sweep output: a probe annotation line, then the ladder
/// rows in the standard sweep column layout.
pub struct SweepBlock {
    pub t: f64,
    pub lambda: Vec<f64>,
    pub outcome: std::result::Result<sldp_core::SweepReport, String>,
    /// Rung intensities that failed, with messages.
    pub failed_rungs: Vec<(f64, String)>,
    /// Free-form caveats about this probe (e.g. an uncertified anchor).
    pub notes: Vec<String>,
}

pub fn write_sweep_csv(path: &Path, meta: &MetaBlock, blocks: &[SweepBlock]) -> Result<()> {
    let mut w = create(path)?;
    meta.write(&mut w)?;
    writeln!(w, "epsilon,mean,stderr,n_paths,n_diverged,bound,bound_satisfied")?;
    for b in blocks {
        let lam = b
            .lambda
            .iter()
            .map(|v| fmt_float(*v))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(w, "# probe t = {} lambda = {lam}", fmt_float(b.t))?;
        for note in &b.notes {
            writeln!(w, "# note: {note}")?;
        }
        for (eps, msg) in &b.failed_rungs {
            writeln!(w, "# rung epsilon = {} failed: {msg}", fmt_float(*eps))?;
        }
        match &b.outcome {
            Ok(report) => report.write_rows(&mut w)?,
            Err(msg) => writeln!(w, "# probe failed: {msg}")?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Transition-cost table over candidate transition times.
pub fn write_action_csv(
    path: &Path,
    meta: &MetaBlock,
    table: &[(f64, f64, bool)],
) -> Result<()> {
    let mut w = create(path)?;
    meta.write(&mut w)?;
    writeln!(w, "t_candidate,cost,converged")?;
    for (t, cost, converged) in table {
        writeln!(
            w,
            "{},{},{}",
            fmt_float(*t),
            fmt_float(*cost),
            i32::from(*converged)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Knots of one discrete path, `t,phi_1..phi_d`.
pub fn write_path_csv(
    path: &Path,
    meta: &MetaBlock,
    discrete: &sldp_core::DiscretePath,
) -> Result<()> {
    let mut w = create(path)?;
    meta.write(&mut w)?;
    let dim = discrete.dim();
    writeln!(w, "{}", header_for("t", &[("phi", dim)], ""))?;
    let grid = discrete.grid();
    for k in 0..grid.n_nodes() {
        let mut row = vec![fmt_float(grid.node_time(k))];
        row.extend(discrete.knot(k).iter().map(|v| fmt_float(*v)));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-noise ensemble estimates at several probe times.
pub fn write_conditional_csv(
    path: &Path,
    meta: &MetaBlock,
    rows: &[(f64, sldp_core::DeviationEstimate)],
) -> Result<()> {
    let mut w = create(path)?;
    meta.write(&mut w)?;
    writeln!(w, "t,epsilon,mean,stderr,n_paths,n_diverged")?;
    for (t, e) in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_float(*t),
            fmt_float(e.epsilon),
            fmt_float(e.mean),
            fmt_float(e.stderr),
            e.n_paths,
            e.n_diverged
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV back with its timestamp line removed — the byte content
/// that determinism guarantees cover.
pub fn deterministic_bytes(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with("# generated = "))
        .collect::<Vec<_>>()
        .join("\n"))
}
