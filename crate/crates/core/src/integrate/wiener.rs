//! Sampled Wiener paths with CSV persistence.
//!
//! A path is stored by its node values on a fixed grid and treated as
//! piecewise linear in between. The generating seed travels with the path —
//! including through the CSV round trip — so every stochastic result can be
//! traced back to the exact noise realization that produced it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::integrate::TimeGrid;

/// `d`-dimensional Wiener path sampled at grid nodes, `W(t0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    grid: TimeGrid,
    dim: usize,
    /// Node-major storage, `n_nodes × dim`.
    data: Vec<f64>,
    seed: u64,
}

impl WienerPath {
    /// Draws a fresh path: increments are independent `N(0, dt)` samples,
    /// generated node by node (components in order within each node) from a
    /// stream cipher RNG seeded with `seed`.
    pub fn generate(grid: &TimeGrid, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "Wiener path needs at least one component".into(),
            ));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let sqrt_dt = grid.dt().sqrt();
        let n_nodes = grid.n_nodes();
        let mut data = vec![0.0; n_nodes * dim];
        for k in 1..n_nodes {
            for c in 0..dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                data[k * dim + c] = data[(k - 1) * dim + c] + sqrt_dt * z;
            }
        }
        Ok(WienerPath {
            grid: *grid,
            dim,
            data,
            seed,
        })
    }

    /// Wraps explicit node values (mainly for tests and replays). The value
    /// slice is node-major with `grid.n_nodes() × dim` entries and must
    /// start at zero.
    pub fn from_values(grid: &TimeGrid, dim: usize, seed: u64, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.n_nodes() * dim {
            return Err(Error::DimensionMismatch {
                expected: grid.n_nodes() * dim,
                got: data.len(),
            });
        }
        if data[..dim].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidParameter(
                "Wiener path must start at zero".into(),
            ));
        }
        Ok(WienerPath {
            grid: *grid,
            dim,
            data,
            seed,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Node value `W(t_k)`.
    #[inline]
    pub fn node(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// Increment `W(t_{k+1}) − W(t_k)` written into `out`.
    #[inline]
    pub fn increment_into(&self, k: usize, out: &mut [f64]) {
        let a = &self.data[k * self.dim..(k + 1) * self.dim];
        let b = &self.data[(k + 1) * self.dim..(k + 2) * self.dim];
        for c in 0..self.dim {
            out[c] = b[c] - a[c];
        }
    }

    /// Piecewise-linear value at an arbitrary time inside the span.
    pub fn value_at_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let (t0, t1) = (self.grid.t0(), self.grid.t1());
        let tol = 1e-12 * (1.0 + t.abs());
        if t < t0 - tol || t > t1 + tol {
            return Err(Error::TimeOutOfRange { t, t0, t1 });
        }
        let dt = self.grid.dt();
        let steps = self.grid.steps();
        let k = (((t - t0) / dt).floor() as i64).clamp(0, steps as i64 - 1) as usize;
        let tk = self.grid.node_time(k);
        let theta = ((t - tk) / dt).clamp(0.0, 1.0);
        let a = self.node(k);
        let b = self.node(k + 1);
        for c in 0..self.dim {
            out[c] = a[c] + theta * (b[c] - a[c]);
        }
        Ok(())
    }

    pub fn value_at(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.value_at_into(t, &mut out)?;
        Ok(out)
    }

    /// Writes the path as CSV: a `# seed=… dt=…` metadata line, a column
    /// header, then one row per node with 17 significant digits so the file
    /// round-trips losslessly.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "# seed={} dt={:.16e}", self.seed, self.grid.dt())?;
        write!(w, "t")?;
        for c in 1..=self.dim {
            write!(w, ",w_{c}")?;
        }
        writeln!(w)?;
        for k in 0..self.grid.n_nodes() {
            write!(w, "{:.16e}", self.grid.node_time(k))?;
            for v in self.node(k) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a path written by [`save_csv`](Self::save_csv), restoring the
    /// grid, node values, and the recorded seed.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines().enumerate();

        let meta = match lines.next() {
            Some((_, line)) => line?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty file".into(),
                })
            }
        };
        let seed = parse_metadata(&meta)?;

        let header = match lines.next() {
            Some((_, line)) => line?,
            None => {
                return Err(Error::Parse {
                    line: 2,
                    message: "missing column header".into(),
                })
            }
        };
        let dim = header.split(',').count().checked_sub(1).filter(|&d| d > 0);
        let dim = match (header.starts_with("t,"), dim) {
            (true, Some(d)) => d,
            _ => {
                return Err(Error::Parse {
                    line: 2,
                    message: format!("expected header 't,w_1,…', got '{header}'"),
                })
            }
        };

        let mut times = Vec::new();
        let mut data = Vec::new();
        for (i, line) in lines {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let t: f64 = parse_field(fields.next(), lineno, "t")?;
            times.push(t);
            let mut count = 0;
            for field in fields {
                data.push(parse_field(Some(field), lineno, "w")?);
                count += 1;
            }
            if count != dim {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {dim} value columns, got {count}"),
                });
            }
        }
        if times.len() < 2 {
            return Err(Error::Parse {
                line: times.len() + 2,
                message: "need at least two nodes".into(),
            });
        }

        let steps = times.len() - 1;
        let grid = TimeGrid::new(times[0], times[steps], steps)?;
        for (k, &t) in times.iter().enumerate() {
            if (grid.node_time(k) - t).abs() > 1e-9 * (1.0 + t.abs()) {
                return Err(Error::Parse {
                    line: k + 3,
                    message: format!("node time {t} is off the uniform grid"),
                });
            }
        }
        Self::from_values(&grid, dim, seed, data)
    }
}

fn parse_metadata(line: &str) -> Result<u64> {
    let body = line.strip_prefix('#').ok_or_else(|| Error::Parse {
        line: 1,
        message: "expected '# seed=… dt=…' metadata line".into(),
    })?;
    let mut seed = None;
    for token in body.split_whitespace() {
        if let Some(v) = token.strip_prefix("seed=") {
            seed = Some(v.parse::<u64>().map_err(|e| Error::Parse {
                line: 1,
                message: format!("bad seed '{v}': {e}"),
            })?);
        }
    }
    seed.ok_or_else(|| Error::Parse {
        line: 1,
        message: "metadata line is missing seed=".into(),
    })
}

fn parse_field(field: Option<&str>, line: usize, what: &str) -> Result<f64> {
    let raw = field.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what} column"),
    })?;
    raw.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        message: format!("bad {what} value '{raw}': {e}"),
    })
}
