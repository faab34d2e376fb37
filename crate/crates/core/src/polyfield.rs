//! Polynomial drift fields and polynomial diffusion matrices.
//!
//! A drift component is a sparse sum of monomial terms
//! `coeff(t) · x^α` where the multi-index `α` fixes the exponents and the
//! coefficient is a constant plus a finite sum of harmonics
//! `A·sin(ωt)` / `B·cos(ωt)`. This covers autonomous polynomial fields and
//! the periodically forced cubic / double-well systems, while keeping exact
//! symbolic differentiation trivial (exponent-drop rule).

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;

/// Exponent vector `α` of one monomial `x^α = x_1^{α_1}···x_d^{α_d}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex {
    exponents: Vec<u32>,
}

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex { exponents }
    }

    /// Constant monomial (all exponents zero) in dimension `dim`.
    pub fn constant(dim: usize) -> Self {
        MultiIndex {
            exponents: vec![0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    /// Total order `‖α‖ = Σ α_i`.
    pub fn order(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    /// `x^α`.
    #[inline]
    pub fn monomial(&self, x: &[f64]) -> f64 {
        let mut acc = 1.0;
        for (xi, &e) in x.iter().zip(&self.exponents) {
            if e > 0 {
                acc *= xi.powi(e as i32);
            }
        }
        acc
    }

    /// `∂(x^α)/∂x_j` evaluated at `x`: `α_j · x^{α − e_j}`.
    #[inline]
    fn monomial_partial(&self, x: &[f64], j: usize) -> f64 {
        let ej = self.exponents[j];
        if ej == 0 {
            return 0.0;
        }
        let mut acc = ej as f64;
        for (i, (xi, &e)) in x.iter().zip(&self.exponents).enumerate() {
            let e = if i == j { e - 1 } else { e };
            if e > 0 {
                acc *= xi.powi(e as i32);
            }
        }
        acc
    }
}

/// Which trigonometric function a harmonic uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Sin,
    Cos,
}

/// One harmonic `amplitude · sin(ωt)` or `amplitude · cos(ωt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Harmonic {
    pub amplitude: f64,
    pub angular_frequency: f64,
    pub phase: Phase,
}

/// Time-dependent coefficient `c + Σ A_k sin(ω_k t) + Σ B_k cos(θ_k t)`.
///
/// An empty harmonic list makes the coefficient time-independent.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeCoefficient {
    pub constant: f64,
    pub harmonics: Vec<Harmonic>,
}

impl TimeCoefficient {
    pub fn constant(c: f64) -> Self {
        TimeCoefficient {
            constant: c,
            harmonics: Vec::new(),
        }
    }

    pub fn sin(amplitude: f64, angular_frequency: f64) -> Self {
        TimeCoefficient {
            constant: 0.0,
            harmonics: vec![Harmonic {
                amplitude,
                angular_frequency,
                phase: Phase::Sin,
            }],
        }
    }

    pub fn cos(amplitude: f64, angular_frequency: f64) -> Self {
        TimeCoefficient {
            constant: 0.0,
            harmonics: vec![Harmonic {
                amplitude,
                angular_frequency,
                phase: Phase::Cos,
            }],
        }
    }

    pub fn with_sin(mut self, amplitude: f64, angular_frequency: f64) -> Self {
        self.harmonics.push(Harmonic {
            amplitude,
            angular_frequency,
            phase: Phase::Sin,
        });
        self
    }

    pub fn with_cos(mut self, amplitude: f64, angular_frequency: f64) -> Self {
        self.harmonics.push(Harmonic {
            amplitude,
            angular_frequency,
            phase: Phase::Cos,
        });
        self
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        let mut acc = self.constant;
        for h in &self.harmonics {
            let arg = h.angular_frequency * t;
            acc += match h.phase {
                Phase::Sin => h.amplitude * arg.sin(),
                Phase::Cos => h.amplitude * arg.cos(),
            };
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.harmonics.is_empty()
    }

    fn merge(&mut self, other: TimeCoefficient) {
        self.constant += other.constant;
        self.harmonics.extend(other.harmonics);
        self.harmonics.retain(|h| h.amplitude != 0.0);
    }
}

/// Sparse polynomial scalar field `p(x, t) = Σ_α coeff_α(t) · x^α` in
/// canonical form: terms sorted by multi-index, no duplicate indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyScalar {
    dim: usize,
    terms: Vec<(MultiIndex, TimeCoefficient)>,
}

impl PolyScalar {
    pub fn zero(dim: usize) -> Self {
        PolyScalar {
            dim,
            terms: Vec::new(),
        }
    }

    pub fn from_terms(
        dim: usize,
        terms: impl IntoIterator<Item = (MultiIndex, TimeCoefficient)>,
    ) -> Result<Self> {
        let mut sorted: Vec<(MultiIndex, TimeCoefficient)> = Vec::new();
        for (idx, coeff) in terms {
            if idx.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: idx.dim(),
                });
            }
            match sorted.binary_search_by(|(i, _)| i.cmp(&idx)) {
                Ok(pos) => sorted[pos].1.merge(coeff),
                Err(pos) => sorted.insert(pos, (idx, coeff)),
            }
        }
        sorted.retain(|(_, c)| !c.is_zero());
        Ok(PolyScalar { dim, terms: sorted })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(MultiIndex, TimeCoefficient)] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(i, _)| i.order()).max().unwrap_or(0)
    }

    /// True if no term depends on the state (every multi-index is zero).
    pub fn is_state_independent(&self) -> bool {
        self.terms.iter().all(|(i, _)| i.order() == 0)
    }

    #[inline]
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let mut acc = 0.0;
        for (idx, coeff) in &self.terms {
            acc += coeff.value(t) * idx.monomial(x);
        }
        acc
    }

    /// `∂p/∂x_j` at `(x, t)`, by the exponent-drop rule.
    #[inline]
    pub fn eval_partial(&self, x: &[f64], t: f64, j: usize) -> f64 {
        let mut acc = 0.0;
        for (idx, coeff) in &self.terms {
            let m = idx.monomial_partial(x, j);
            if m != 0.0 {
                acc += coeff.value(t) * m;
            }
        }
        acc
    }
}

/// Polynomial drift field `b(x, t)` with `d` components.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyVectorField {
    dim: usize,
    components: Vec<PolyScalar>,
}

impl PolyVectorField {
    pub fn new(components: Vec<PolyScalar>) -> Result<Self> {
        let dim = components.len();
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "field must have at least one component".into(),
            ));
        }
        for c in &components {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
        }
        Ok(PolyVectorField { dim, components })
    }

    /// Builds a field from `(component, multi-index, coefficient)` triples.
    /// Duplicate multi-indices within a component are merged.
    pub fn from_terms(
        dim: usize,
        terms: impl IntoIterator<Item = (usize, MultiIndex, TimeCoefficient)>,
    ) -> Result<Self> {
        let mut per_component: Vec<Vec<(MultiIndex, TimeCoefficient)>> = vec![Vec::new(); dim];
        for (comp, idx, coeff) in terms {
            if comp >= dim {
                return Err(Error::ColumnOutOfRange {
                    index: comp,
                    dim,
                });
            }
            per_component[comp].push((idx, coeff));
        }
        let components = per_component
            .into_iter()
            .map(|terms| PolyScalar::from_terms(dim, terms))
            .collect::<Result<Vec<_>>>()?;
        Self::new(components)
    }

    /// Linear field `b(x, t) = M·x + f(t)`.
    pub fn linear(matrix: &[Vec<f64>], forcing: &[TimeCoefficient]) -> Result<Self> {
        let dim = matrix.len();
        if forcing.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: forcing.len(),
            });
        }
        let mut terms = Vec::new();
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for (j, &m) in row.iter().enumerate() {
                if m != 0.0 {
                    let mut exps = vec![0u32; dim];
                    exps[j] = 1;
                    terms.push((i, MultiIndex::new(exps), TimeCoefficient::constant(m)));
                }
            }
            if !forcing[i].is_zero() {
                terms.push((i, MultiIndex::constant(dim), forcing[i].clone()));
            }
        }
        Self::from_terms(dim, terms)
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[PolyScalar] {
        &self.components
    }

    pub fn degree(&self) -> u32 {
        self.components.iter().map(|c| c.degree()).max().unwrap_or(0)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `b(x, t)` componentwise.
    pub fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, t, &mut out);
        Ok(out)
    }

    #[inline]
    pub(crate) fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x, t);
        }
    }

    /// Jacobian `∂b_i/∂x_j` at `x = λ`, by exact term differentiation.
    pub fn jacobian(&self, lambda: &[f64], t: f64) -> Result<SquareMatrix> {
        self.check_dim(lambda)?;
        let mut m = SquareMatrix::zeros(self.dim);
        self.jacobian_into(lambda, t, &mut m);
        Ok(m)
    }

    #[inline]
    pub(crate) fn jacobian_into(&self, lambda: &[f64], t: f64, out: &mut SquareMatrix) {
        for (i, c) in self.components.iter().enumerate() {
            for j in 0..self.dim {
                out.set(i, j, c.eval_partial(lambda, t, j));
            }
        }
    }
}

/// Polynomial diffusion matrix `C(x, t)` with `d×d` polynomial entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyDiffusionMatrix {
    dim: usize,
    /// Row-major `d×d` entries.
    entries: Vec<PolyScalar>,
}

impl PolyDiffusionMatrix {
    pub fn from_entries(dim: usize, entries: Vec<PolyScalar>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        for e in &entries {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: e.dim(),
                });
            }
        }
        Ok(PolyDiffusionMatrix { dim, entries })
    }

    /// Constant diagonal matrix `scale·I` (use `scale = √D` for additive
    /// noise of intensity `D`). Every generalized Jacobian of this matrix
    /// is identically zero.
    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        let mut entries = vec![PolyScalar::zero(dim); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = PolyScalar::from_terms(
                dim,
                [(MultiIndex::constant(dim), TimeCoefficient::constant(scale))],
            )
            .expect("constant diagonal entry");
        }
        PolyDiffusionMatrix { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, k: usize) -> &PolyScalar {
        &self.entries[i * self.dim + k]
    }

    /// True if no entry depends on the state; the multiplicative part of
    /// the stochastic master equation vanishes in this case.
    pub fn is_state_independent(&self) -> bool {
        self.entries.iter().all(|e| e.is_state_independent())
    }

    /// `C(x, t)` as a numeric matrix.
    pub fn eval(&self, x: &[f64], t: f64) -> Result<SquareMatrix> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut m = SquareMatrix::zeros(self.dim);
        self.eval_into(x, t, &mut m);
        Ok(m)
    }

    #[inline]
    pub(crate) fn eval_into(&self, x: &[f64], t: f64, out: &mut SquareMatrix) {
        for i in 0..self.dim {
            for k in 0..self.dim {
                out.set(i, k, self.entry(i, k).eval(x, t));
            }
        }
    }

    /// Generalized Jacobian `Ĵ_k[C]`: entry `(i, j)` is `∂C_{i,k}/∂x_j`
    /// at `x = λ`. The column index `k` is zero-based.
    pub fn generalized_jacobian(&self, lambda: &[f64], t: f64, k: usize) -> Result<SquareMatrix> {
        if lambda.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: lambda.len(),
            });
        }
        if k >= self.dim {
            return Err(Error::ColumnOutOfRange {
                index: k,
                dim: self.dim,
            });
        }
        let mut m = SquareMatrix::zeros(self.dim);
        self.generalized_jacobian_into(lambda, t, k, &mut m);
        Ok(m)
    }

    #[inline]
    pub(crate) fn generalized_jacobian_into(
        &self,
        lambda: &[f64],
        t: f64,
        k: usize,
        out: &mut SquareMatrix,
    ) {
        for i in 0..self.dim {
            let entry = self.entry(i, k);
            for j in 0..self.dim {
                out.set(i, j, entry.eval_partial(lambda, t, j));
            }
        }
    }
}

/// Outcome of the dissipativity scan `⟨x, b(x,t)⟩ ≤ γ(1 + ‖x‖²)`.
///
/// Sampled diagnostic, not a proof: the margin
/// `m(x) = γ(1 + ‖x‖²) − ⟨x, b(x,t)⟩` is evaluated on a uniform grid of the
/// centered cube and the minimum is reported.
#[derive(Debug, Clone)]
pub struct ConfinementReport {
    pub passed: bool,
    pub worst_point: Vec<f64>,
    pub worst_margin: f64,
}

/// Scans the confinement margin of `field` over `[-radius, radius]^d`.
pub fn confinement_check(
    field: &PolyVectorField,
    gamma: f64,
    radius: f64,
    samples_per_axis: usize,
    t: f64,
) -> Result<ConfinementReport> {
    assert!(gamma > 0.0, "gamma must be positive");
    assert!(radius > 0.0, "radius must be positive");
    assert!(samples_per_axis >= 2, "need at least 2 samples per axis");

    let d = field.dimension();
    let mut index = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut b = vec![0.0; d];
    let step = 2.0 * radius / (samples_per_axis - 1) as f64;

    let mut worst_margin = f64::INFINITY;
    let mut worst_point = vec![0.0; d];

    loop {
        for (xi, &ki) in x.iter_mut().zip(&index) {
            *xi = -radius + ki as f64 * step;
        }
        field.eval_into(&x, t, &mut b);
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        let inner: f64 = x.iter().zip(&b).map(|(xi, bi)| xi * bi).sum();
        let margin = gamma * (1.0 + norm2) - inner;
        if margin < worst_margin {
            worst_margin = margin;
            worst_point.copy_from_slice(&x);
        }

        // odometer increment over the d-dimensional sample grid
        let mut axis = 0;
        loop {
            if axis == d {
                return Ok(ConfinementReport {
                    passed: worst_margin >= 0.0,
                    worst_point,
                    worst_margin,
                });
            }
            index[axis] += 1;
            if index[axis] < samples_per_axis {
                break;
            }
            index[axis] = 0;
            axis += 1;
        }
    }
}
