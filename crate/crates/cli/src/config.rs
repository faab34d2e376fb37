//! Declarative experiment configuration: a flat, line-oriented
//! `key = value` format under `[section]` headers (TOML), chosen for
//! language-agnostic parseability and diffability.
//!
//! `parse(emit(config)) == config` holds exactly: emission uses shortest
//! round-trip float formatting and a fixed section order.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sldp_core::{
    CubicParams, DoubleWellParams, MultiIndex, PolyVectorField, SolveOptions, TimeCoefficient,
    TimeGrid,
};

/// Complete description of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub action: ActionConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Drift model selection — exactly one variant, discriminated by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    /// `ẋ = a·x² − b·x + A·sin(Ω t) + B·cos(Θ t)`
    Cubic {
        a: f64,
        b: f64,
        #[serde(default)]
        amp_sin: f64,
        #[serde(default)]
        omega: f64,
        #[serde(default)]
        amp_cos: f64,
        #[serde(default)]
        theta: f64,
        #[serde(default)]
        x0: f64,
    },
    /// `ẋ = −a·x³ + b·x + c + A·sin(Ω t) + B·cos(Θ t)`
    DoubleWell {
        a: f64,
        b: f64,
        #[serde(default)]
        c: f64,
        #[serde(default)]
        amp_sin: f64,
        #[serde(default)]
        omega: f64,
        #[serde(default)]
        amp_cos: f64,
        #[serde(default)]
        theta: f64,
        #[serde(default)]
        x0: f64,
    },
    /// Arbitrary polynomial drift, one string per monomial term:
    /// `"<component> : <e_1> … <e_d> : const v | sin amp freq | cos amp freq [, …]"`.
    Custom {
        dim: usize,
        x0: Vec<f64>,
        term: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "default_t1")]
    pub t1: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_t1() -> f64 {
    5.0
}
fn default_steps() -> usize {
    1000
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            t0: 0.0,
            t1: default_t1(),
            steps: default_steps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WienerSource {
    Generate,
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Intensity `D` of the recorded-noise channel; 0 = deterministic runs.
    #[serde(default)]
    pub intensity: f64,
    #[serde(default = "default_source")]
    pub source: WienerSource,
    #[serde(default)]
    pub seed: u64,
    /// Noise path CSV, required when `source = "load"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

fn default_source() -> WienerSource {
    WienerSource::Generate
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            intensity: 0.0,
            source: default_source(),
            seed: 0,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    /// Strictly decreasing ε-ladder.
    #[serde(default = "default_ladder")]
    pub ladder: Vec<f64>,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Probe times for sweeps; default = grid quartiles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_times: Option<Vec<f64>>,
    /// Probe anchors; default = the solved quasiclassical path at the
    /// probe times. One vector per probe time when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_lambdas: Option<Vec<Vec<f64>>>,
    /// Also run the fixed-recorded-noise ensemble check after a
    /// stochastic comparison.
    #[serde(default)]
    pub conditional: bool,
}

fn default_ladder() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
}
fn default_n_paths() -> usize {
    2000
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            ladder: default_ladder(),
            n_paths: default_n_paths(),
            master_seed: 0,
            probe_times: None,
            probe_lambdas: None,
            conditional: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_bracket_radius")]
    pub bracket_radius: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Internal step size for integrated (non-closed-form) residuals.
    #[serde(default = "default_residual_dt")]
    pub residual_dt: f64,
}

fn default_tol() -> f64 {
    SolveOptions::default().tol
}
fn default_bracket_radius() -> f64 {
    SolveOptions::default().bracket_radius
}
fn default_max_iter() -> usize {
    SolveOptions::default().max_iter
}
fn default_residual_dt() -> f64 {
    1e-3
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            bracket_radius: default_bracket_radius(),
            max_iter: default_max_iter(),
            residual_dt: default_residual_dt(),
        }
    }
}

impl SolverConfig {
    pub fn to_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            bracket_radius: self.bracket_radius,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionConfig {
    /// Transition start point; defaults to the model's initial state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(default = "default_target")]
    pub target: Vec<f64>,
    #[serde(default = "default_knots")]
    pub knots: usize,
    #[serde(default = "default_t_candidates")]
    pub t_candidates: Vec<f64>,
    #[serde(default = "default_action_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
}

fn default_target() -> Vec<f64> {
    vec![0.0]
}
fn default_knots() -> usize {
    200
}
fn default_t_candidates() -> Vec<f64> {
    vec![5.0, 10.0, 20.0, 40.0]
}
fn default_action_max_iter() -> usize {
    sldp_core::CostOptions::default().max_iter
}
fn default_grad_tol() -> f64 {
    sldp_core::CostOptions::default().grad_tol
}

impl Default for ActionConfig {
    fn default() -> Self {
        Self {
            start: None,
            target: default_target(),
            knots: default_knots(),
            t_candidates: default_t_candidates(),
            max_iter: default_action_max_iter(),
            grad_tol: default_grad_tol(),
        }
    }
}

impl ActionConfig {
    pub fn to_options(&self) -> sldp_core::CostOptions {
        sldp_core::CostOptions {
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    /// Catalog tag echoed into CSV metadata; "custom" when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
}

fn default_out_dir() -> String {
    "out".to_string()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            preset: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses the `[section]` / `key = value` text form.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("malformed experiment config")?;
        Ok(cfg)
    }

    /// Loads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg = Self::parse(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Emits the canonical text form (`parse(emit(c)) == c`).
    pub fn emit(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Structural checks beyond what parsing enforces.
    pub fn validate(&self) -> Result<()> {
        match &self.model {
            ModelConfig::Cubic { a, b, .. } | ModelConfig::DoubleWell { a, b, .. } => {
                if !(a.is_finite() && b.is_finite() && *a > 0.0 && *b > 0.0) {
                    bail!("model stiffness requires a > 0 and b > 0, got a = {a}, b = {b}");
                }
            }
            ModelConfig::Custom { dim, x0, term } => {
                if *dim == 0 {
                    bail!("custom model dimension must be at least 1");
                }
                if x0.len() != *dim {
                    bail!(
                        "custom model x0 has {} entries but dim = {dim}",
                        x0.len()
                    );
                }
                if term.is_empty() {
                    bail!("custom model needs at least one term");
                }
                for t in term {
                    parse_term(t, *dim)
                        .with_context(|| format!("invalid custom model term {t:?}"))?;
                }
            }
        }

        if self.grid.t0 != 0.0 {
            bail!(
                "grid must start at t0 = 0 (quasiclassical solves anchor there), got {}",
                self.grid.t0
            );
        }
        if !(self.grid.t1.is_finite() && self.grid.t1 > self.grid.t0) {
            bail!("grid needs t1 > t0, got t1 = {}", self.grid.t1);
        }
        if self.grid.steps == 0 {
            bail!("grid needs at least one step");
        }

        if !(self.noise.intensity.is_finite() && self.noise.intensity >= 0.0) {
            bail!(
                "noise intensity must be non-negative, got {}",
                self.noise.intensity
            );
        }
        if self.noise.source == WienerSource::Load && self.noise.path.is_none() {
            bail!("noise source \"load\" requires a path");
        }

        if self.mc.ladder.is_empty()
            || self.mc.ladder.iter().any(|e| !e.is_finite() || *e < 0.0)
            || self.mc.ladder.windows(2).any(|w| w[0] <= w[1])
        {
            bail!("mc ladder must be a strictly decreasing list of non-negative intensities");
        }
        if self.mc.n_paths < 2 {
            bail!("mc needs at least 2 paths, got {}", self.mc.n_paths);
        }
        if let Some(lams) = &self.mc.probe_lambdas {
            let Some(times) = &self.mc.probe_times else {
                bail!("probe_lambdas requires probe_times");
            };
            if lams.len() != times.len() {
                bail!(
                    "{} probe_lambdas for {} probe_times",
                    lams.len(),
                    times.len()
                );
            }
            let dim = self.dimension();
            if lams.iter().any(|l| l.len() != dim) {
                bail!("each probe lambda needs {dim} components");
            }
        }

        if self.action.knots < 8 {
            bail!("action needs at least 8 knots, got {}", self.action.knots);
        }
        if self.action.t_candidates.is_empty()
            || self
                .action
                .t_candidates
                .iter()
                .any(|t| !t.is_finite() || *t <= 0.0)
        {
            bail!("action t_candidates must be positive");
        }
        let dim = self.dimension();
        if self.action.target.len() != dim {
            bail!(
                "action target has {} components for a {dim}-dimensional model",
                self.action.target.len()
            );
        }
        if let Some(s) = &self.action.start {
            if s.len() != dim {
                bail!("action start has {} components for a {dim}-dimensional model", s.len());
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match &self.model {
            ModelConfig::Cubic { .. } | ModelConfig::DoubleWell { .. } => 1,
            ModelConfig::Custom { dim, .. } => *dim,
        }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        match &self.model {
            ModelConfig::Cubic { x0, .. } | ModelConfig::DoubleWell { x0, .. } => vec![*x0],
            ModelConfig::Custom { x0, .. } => x0.clone(),
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::new(self.grid.t0, self.grid.t1, self.grid.steps)?)
    }

    /// The drift field this config describes.
    pub fn build_field(&self) -> Result<PolyVectorField> {
        match &self.model {
            ModelConfig::Cubic { .. } => Ok(self.cubic_params()?.expect("cubic").field()),
            ModelConfig::DoubleWell { .. } => {
                Ok(self.double_well_params()?.expect("double well").field())
            }
            ModelConfig::Custom { dim, term, .. } => {
                let mut parsed = Vec::new();
                for t in term {
                    parsed.extend(
                        parse_term(t, *dim)
                            .with_context(|| format!("invalid custom model term {t:?}"))?,
                    );
                }
                Ok(PolyVectorField::from_terms(*dim, parsed)?)
            }
        }
    }

    /// Typed parameters when the model is the quadratic-drift family.
    pub fn cubic_params(&self) -> Result<Option<CubicParams>> {
        if let ModelConfig::Cubic {
            a,
            b,
            amp_sin,
            omega,
            amp_cos,
            theta,
            x0,
        } = &self.model
        {
            let p = CubicParams::new(*a, *b)?
                .with_sin(*amp_sin, *omega)
                .with_cos(*amp_cos, *theta)
                .with_x0(*x0);
            Ok(Some(p))
        } else {
            Ok(None)
        }
    }

    /// Typed parameters when the model is the bistable family.
    pub fn double_well_params(&self) -> Result<Option<DoubleWellParams>> {
        if let ModelConfig::DoubleWell {
            a,
            b,
            c,
            amp_sin,
            omega,
            amp_cos,
            theta,
            x0,
        } = &self.model
        {
            let p = DoubleWellParams::new(*a, *b)?
                .with_tilt(*c)
                .with_sin(*amp_sin, *omega)
                .with_cos(*amp_cos, *theta)
                .with_x0(*x0);
            Ok(Some(p))
        } else {
            Ok(None)
        }
    }

    /// Tag used in CSV metadata.
    pub fn preset_tag(&self) -> &str {
        self.output.preset.as_deref().unwrap_or("custom")
    }
}

/// Parses one custom-model term:
/// `"<component> : <e_1> … <e_d> : <coeff>[, <coeff>…]"` with coefficient
/// specs `const v`, `sin amp freq`, `cos amp freq`.
fn parse_term(
    text: &str,
    dim: usize,
) -> Result<Vec<(usize, MultiIndex, TimeCoefficient)>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        bail!("expected \"component : exponents : coefficients\"");
    }
    let component: usize = parts[0]
        .trim()
        .parse()
        .with_context(|| format!("bad component index {:?}", parts[0].trim()))?;
    if component >= dim {
        bail!("component {component} out of range for dim = {dim}");
    }

    let exponents: Vec<u32> = parts[1]
        .split_whitespace()
        .map(|e| {
            e.parse()
                .with_context(|| format!("bad exponent {e:?}"))
        })
        .collect::<Result<_>>()?;
    if exponents.len() != dim {
        bail!(
            "{} exponents given, need one per dimension ({dim})",
            exponents.len()
        );
    }
    let index = MultiIndex::new(exponents);

    let mut out = Vec::new();
    for spec in parts[2].split(',') {
        let words: Vec<&str> = spec.split_whitespace().collect();
        let coeff = match words.as_slice() {
            ["const", v] => TimeCoefficient::constant(
                v.parse().with_context(|| format!("bad value {v:?}"))?,
            ),
            ["sin", amp, freq] => TimeCoefficient::sin(
                amp.parse().with_context(|| format!("bad amplitude {amp:?}"))?,
                freq.parse().with_context(|| format!("bad frequency {freq:?}"))?,
            ),
            ["cos", amp, freq] => TimeCoefficient::cos(
                amp.parse().with_context(|| format!("bad amplitude {amp:?}"))?,
                freq.parse().with_context(|| format!("bad frequency {freq:?}"))?,
            ),
            _ => bail!("coefficient spec {spec:?} is not const/sin/cos"),
        };
        out.push((component, index.clone(), coeff));
    }
    Ok(out)
}
