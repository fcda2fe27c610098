//! Two-parameter evolution families `U(t, s)` generated by `x' = A(t) x`.
//!
//! Two realizations are provided:
//!
//! * [`SpectralFamily`]: a diagonal family `exp(μ_n ∫ₛᵗ a(τ) dτ)` on a finite set
//!   of modes, as produced by a self-adjoint operator with a scalar
//!   time-dependent coefficient.
//! * [`DenseFamily`]: a time-ordered product of single-step exponentials on a
//!   fixed step grid, either fourth-order Magnus factors (default) or
//!   exponential-midpoint factors `exp(A((σᵢ + σᵢ₊₁)/2) Δσ)`.
//!
//! `U(s, s)` is returned as the identity without stepping.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite, Error, Result};
use crate::quadrature::adaptive_simpson;

/// Scalar function of time.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Matrix-valued function of time.
pub type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// Number of cached primitive knots used by [`SpectralFamily`].
const PRIMITIVE_KNOTS: usize = 256;

/// Diagonal family on `n_modes` modes with eigenvalues `μ_n` and a positive
/// coefficient `a(t)`.
#[derive(Clone)]
pub struct SpectralFamily {
    eigenvalues: Vec<f64>,
    coefficient: ScalarFn,
    horizon: f64,
    tolerance: f64,
    knots: Vec<f64>,
    primitive_at_knots: Vec<f64>,
}

impl fmt::Debug for SpectralFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralFamily")
            .field("eigenvalues", &self.eigenvalues)
            .field("horizon", &self.horizon)
            .field("tolerance", &self.tolerance)
            .finish_non_exhaustive()
    }
}

impl SpectralFamily {
    /// Builds the family with eigenvalue rule `n ↦ -n²` for `n = 1..=n_modes`.
    pub fn heat(n_modes: usize, coefficient: ScalarFn, horizon: f64) -> Result<Self> {
        Self::new(
            n_modes,
            |n| -((n * n) as f64),
            coefficient,
            horizon,
            1e-12,
        )
    }

    /// `eigenvalue_rule` maps the 1-based mode index to `μ_n`. `tolerance` is
    /// the absolute tolerance of the adaptive Simpson rule used for `∫ a`.
    pub fn new(
        n_modes: usize,
        eigenvalue_rule: impl Fn(usize) -> f64,
        coefficient: ScalarFn,
        horizon: f64,
        tolerance: f64,
    ) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::Input("spectral family needs at least one mode".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Input(format!("horizon must be positive, got {horizon}")));
        }
        if !(tolerance > 0.0) {
            return Err(Error::Input("primitive tolerance must be positive".into()));
        }
        let eigenvalues: Vec<f64> = (1..=n_modes).map(eigenvalue_rule).collect();
        check_finite("eigenvalues", &eigenvalues)?;

        let knots: Vec<f64> = (0..=PRIMITIVE_KNOTS)
            .map(|j| horizon * j as f64 / PRIMITIVE_KNOTS as f64)
            .collect();
        for &t in &knots {
            let a = coefficient(t);
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Input(format!(
                    "coefficient a(t) must be positive and finite, got a({t}) = {a}"
                )));
            }
        }
        let piece_tol = tolerance / PRIMITIVE_KNOTS as f64;
        let mut primitive_at_knots = Vec::with_capacity(knots.len());
        let mut acc = 0.0;
        primitive_at_knots.push(0.0);
        for w in knots.windows(2) {
            acc += adaptive_simpson(&*coefficient, w[0], w[1], piece_tol);
            primitive_at_knots.push(acc);
        }
        Ok(Self {
            eigenvalues,
            coefficient,
            horizon,
            tolerance,
            knots,
            primitive_at_knots,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn coefficient(&self, t: f64) -> f64 {
        (self.coefficient)(t)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// `∫₀ᵗ a(τ) dτ`, from the nearest cached knot plus an adaptive Simpson
    /// correction.
    pub fn primitive(&self, t: f64) -> f64 {
        let step = self.horizon / PRIMITIVE_KNOTS as f64;
        let j = ((t / step).floor() as usize).min(PRIMITIVE_KNOTS);
        let base = self.knots[j];
        if t == base {
            return self.primitive_at_knots[j];
        }
        self.primitive_at_knots[j]
            + adaptive_simpson(&*self.coefficient, base, t, self.tolerance / PRIMITIVE_KNOTS as f64)
    }

    /// `∫ₛᵗ a(τ) dτ`.
    pub fn integral(&self, s: f64, t: f64) -> f64 {
        if s == t {
            0.0
        } else {
            self.primitive(t) - self.primitive(s)
        }
    }

    /// Diagonal entries of `U(t, s)`.
    pub fn factors(&self, s: f64, t: f64) -> Vec<f64> {
        if s == t {
            return vec![1.0; self.eigenvalues.len()];
        }
        let area = self.integral(s, t);
        self.eigenvalues.iter().map(|mu| (mu * area).exp()).collect()
    }
}

/// Single-step rule of a [`DenseFamily`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenseScheme {
    /// `exp(A((a+b)/2)(b−a))`, second order.
    Midpoint,
    /// Two-point Gauss Magnus expansion, fourth order.
    #[default]
    Magnus4,
}

/// Time-ordered product of single-step exponentials on a fixed grid.
#[derive(Clone)]
pub struct DenseFamily {
    dim: usize,
    generator: MatrixFn,
    grid: Vec<f64>,
    substeps: usize,
    scheme: DenseScheme,
    cell_factors: Vec<DMatrix<f64>>,
}

impl fmt::Debug for DenseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DenseFamily")
            .field("dim", &self.dim)
            .field("cells", &self.cell_factors.len())
            .field("substeps", &self.substeps)
            .field("scheme", &self.scheme)
            .finish_non_exhaustive()
    }
}

impl DenseFamily {
    /// Each gap between consecutive `breakpoints` is split into `substeps`
    /// equal cells. Breakpoints should include every impulse time so that
    /// quadrature panels and steps align.
    pub fn new(
        dim: usize,
        generator: MatrixFn,
        breakpoints: &[f64],
        substeps: usize,
    ) -> Result<Self> {
        Self::with_scheme(dim, generator, breakpoints, substeps, DenseScheme::default())
    }

    pub fn with_scheme(
        dim: usize,
        generator: MatrixFn,
        breakpoints: &[f64],
        substeps: usize,
        scheme: DenseScheme,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("state dimension must be positive".into()));
        }
        if substeps == 0 {
            return Err(Error::Input("stepper substep count must be at least 1".into()));
        }
        if breakpoints.len() < 2 || breakpoints[0] != 0.0 {
            return Err(Error::Input("breakpoints must start at 0 and contain the horizon".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input("breakpoints must be strictly increasing".into()));
        }
        let mut grid = vec![breakpoints[0]];
        for w in breakpoints.windows(2) {
            for j in 1..=substeps {
                let t = if j == substeps {
                    w[1]
                } else {
                    w[0] + (w[1] - w[0]) * j as f64 / substeps as f64
                };
                grid.push(t);
            }
        }
        let mut family = Self {
            dim,
            generator,
            grid,
            substeps,
            scheme,
            cell_factors: Vec::new(),
        };
        let mut factors = Vec::with_capacity(family.grid.len() - 1);
        for w in family.grid.windows(2) {
            factors.push(family.step_factor(w[0], w[1])?);
        }
        family.cell_factors = factors;
        Ok(family)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Step grid, including all breakpoints.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn scheme(&self) -> DenseScheme {
        self.scheme
    }

    pub fn generator(&self, t: f64) -> DMatrix<f64> {
        (self.generator)(t)
    }

    fn checked_generator(&self, t: f64) -> Result<DMatrix<f64>> {
        let gen = (self.generator)(t);
        if gen.nrows() != self.dim || gen.ncols() != self.dim {
            return Err(Error::Input(format!(
                "generator returned a {}x{} matrix, expected {}x{}",
                gen.nrows(),
                gen.ncols(),
                self.dim,
                self.dim
            )));
        }
        check_finite("generator", gen.as_slice())?;
        Ok(gen)
    }

    fn step_factor(&self, a: f64, b: f64) -> Result<DMatrix<f64>> {
        match self.scheme {
            DenseScheme::Midpoint => Ok((self.checked_generator(0.5 * (a + b))? * (b - a)).exp()),
            DenseScheme::Magnus4 => self.magnus_factor(a, b),
        }
    }

    /// Fourth-order Magnus step `exp(Ω)` on `[a, b]` with
    /// `Ω = h/2 (A₁ + A₂) − (√3/12) h² [A₁, A₂]`, `A₁,₂` at the two Gauss points.
    fn magnus_factor(&self, a: f64, b: f64) -> Result<DMatrix<f64>> {
        let h = b - a;
        let mid = 0.5 * (a + b);
        let offset = h / (2.0 * 3f64.sqrt());
        let a1 = self.checked_generator(mid - offset)?;
        let a2 = self.checked_generator(mid + offset)?;
        let commutator = &a1 * &a2 - &a2 * &a1;
        let omega = (&a1 + &a2) * (0.5 * h) - commutator * (3f64.sqrt() / 12.0 * h * h);
        Ok(omega.exp())
    }

    /// Factors of `U(t, s)` in application order (first factor acts first).
    fn factors(&self, s: f64, t: f64) -> Result<Vec<StepFactor<'_>>> {
        let mut out = Vec::new();
        let mut cur = s;
        while cur < t {
            let c = self
                .grid
                .partition_point(|&g| g <= cur)
                .clamp(1, self.grid.len() - 1);
            let next = self.grid[c].min(t);
            let cell = c - 1;
            if cur == self.grid[cell] && next == self.grid[c] {
                out.push(StepFactor::Cell(&self.cell_factors[cell]));
            } else {
                out.push(StepFactor::Partial(self.step_factor(cur, next)?));
            }
            cur = next;
        }
        Ok(out)
    }
}

enum StepFactor<'a> {
    Cell(&'a DMatrix<f64>),
    Partial(DMatrix<f64>),
}

impl StepFactor<'_> {
    fn matrix(&self) -> &DMatrix<f64> {
        match self {
            StepFactor::Cell(m) => m,
            StepFactor::Partial(m) => m,
        }
    }
}

/// Concrete representation of an evolution family.
#[derive(Debug, Clone)]
pub enum Realization {
    SpectralDiagonal(SpectralFamily),
    DenseGenerator(DenseFamily),
}

/// Evolution family with its uniform norm bound `M ≥ sup ‖U(t, s)‖`.
#[derive(Debug, Clone)]
pub struct EvolutionFamily {
    realization: Arc<Realization>,
    horizon: f64,
    norm_bound: f64,
}

/// Number of sample points per axis used to estimate the norm bound.
pub const NORM_SAMPLES: usize = 24;

impl EvolutionFamily {
    /// Wraps a realization. When `norm_bound` is `None` it is estimated by
    /// sampling; a supplied bound is checked against the same samples.
    pub fn new(realization: Realization, norm_bound: Option<f64>) -> Result<Self> {
        let horizon = match &realization {
            Realization::SpectralDiagonal(f) => f.horizon,
            Realization::DenseGenerator(f) => *f.grid.last().expect("grid is nonempty"),
        };
        let mut family = Self {
            realization: Arc::new(realization),
            horizon,
            norm_bound: 1.0,
        };
        let sampled = family.sampled_norm_sup(NORM_SAMPLES)?;
        family.norm_bound = match norm_bound {
            None => sampled,
            Some(m) if m >= sampled * (1.0 - 1e-12) => m,
            Some(m) => {
                return Err(Error::Input(format!(
                    "supplied norm bound {m} is below the sampled sup {sampled}"
                )))
            }
        };
        Ok(family)
    }

    pub fn realization(&self) -> &Realization {
        &self.realization
    }

    pub fn dim(&self) -> usize {
        match &*self.realization {
            Realization::SpectralDiagonal(f) => f.n_modes(),
            Realization::DenseGenerator(f) => f.dim,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// The constant `M` with `‖U(t, s)‖ ≤ M` on `0 ≤ s ≤ t ≤ b`.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// Step grid for dense families; `None` for spectral ones.
    pub fn step_grid(&self) -> Option<&[f64]> {
        match &*self.realization {
            Realization::SpectralDiagonal(_) => None,
            Realization::DenseGenerator(f) => Some(&f.grid),
        }
    }

    fn check_times(&self, s: f64, t: f64) -> Result<()> {
        if !(s.is_finite() && t.is_finite()) {
            return Err(Error::Domain(format!("non-finite times s={s}, t={t}")));
        }
        if t < s {
            return Err(Error::Domain(format!("U(t, s) requires s <= t, got s={s}, t={t}")));
        }
        let slack = 1e-12 * self.horizon.max(1.0);
        if s < -slack || t > self.horizon + slack {
            return Err(Error::Domain(format!(
                "times s={s}, t={t} lie outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Input(format!(
                "state has length {}, family has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        check_finite("state", x.as_slice())
    }

    /// `U(t, s) x`.
    pub fn propagate(&self, s: f64, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_times(s, t)?;
        self.check_state(x)?;
        if s == t {
            return Ok(x.clone());
        }
        match &*self.realization {
            Realization::SpectralDiagonal(f) => Ok(DVector::from_iterator(
                x.len(),
                f.factors(s, t).iter().zip(x.iter()).map(|(g, v)| g * v),
            )),
            Realization::DenseGenerator(f) => {
                let mut y = x.clone();
                for step in f.factors(s, t)? {
                    y = step.matrix() * y;
                }
                Ok(y)
            }
        }
    }

    /// `U(t, s)ᵀ φ`.
    pub fn propagate_adjoint(&self, s: f64, t: f64, phi: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_times(s, t)?;
        self.check_state(phi)?;
        if s == t {
            return Ok(phi.clone());
        }
        match &*self.realization {
            Realization::SpectralDiagonal(_) => self.propagate(s, t, phi),
            Realization::DenseGenerator(f) => {
                let mut y = phi.clone();
                for step in f.factors(s, t)?.iter().rev() {
                    y = step.matrix().tr_mul(&y);
                }
                Ok(y)
            }
        }
    }

    /// `U(t, s) X` applied column by column.
    pub fn propagate_matrix(&self, s: f64, t: f64, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_times(s, t)?;
        if x.nrows() != self.dim() {
            return Err(Error::Input(format!(
                "matrix has {} rows, family has dimension {}",
                x.nrows(),
                self.dim()
            )));
        }
        check_finite("matrix", x.as_slice())?;
        if s == t {
            return Ok(x.clone());
        }
        match &*self.realization {
            Realization::SpectralDiagonal(f) => {
                let g = f.factors(s, t);
                let mut y = x.clone();
                for (i, gi) in g.iter().enumerate() {
                    y.row_mut(i).scale_mut(*gi);
                }
                Ok(y)
            }
            Realization::DenseGenerator(f) => {
                let mut y = x.clone();
                for step in f.factors(s, t)? {
                    y = step.matrix() * y;
                }
                Ok(y)
            }
        }
    }

    /// Dense matrix of `U(t, s)`; column `j` is `U(t, s) e_j`.
    pub fn assemble_matrix(&self, s: f64, t: f64) -> Result<DMatrix<f64>> {
        self.propagate_matrix(s, t, &DMatrix::identity(self.dim(), self.dim()))
    }

    /// Spectral norm of `U(t, s)`.
    pub fn operator_norm(&self, s: f64, t: f64) -> Result<f64> {
        match &*self.realization {
            Realization::SpectralDiagonal(f) => {
                self.check_times(s, t)?;
                Ok(f.factors(s, t).into_iter().fold(0.0, f64::max))
            }
            Realization::DenseGenerator(_) => Ok(spectral_norm(&self.assemble_matrix(s, t)?)),
        }
    }

    /// Largest `‖U(t, s)‖` over a uniform `samples × samples` grid with `s ≤ t`.
    pub fn sampled_norm_sup(&self, samples: usize) -> Result<f64> {
        let samples = samples.max(2);
        let times: Vec<f64> = (0..samples)
            .map(|j| self.horizon * j as f64 / (samples - 1) as f64)
            .collect();
        let mut sup: f64 = 1.0;
        for (i, &s) in times.iter().enumerate() {
            for &t in &times[i..] {
                sup = sup.max(self.operator_norm(s, t)?);
            }
        }
        Ok(sup)
    }

    /// A-posteriori check of the stored bound; returns the sampled sup.
    pub fn check_norm_bound(&self, samples: usize) -> Result<f64> {
        let sup = self.sampled_norm_sup(samples)?;
        if sup > self.norm_bound * (1.0 + 1e-12) {
            return Err(Error::Numeric(format!(
                "sampled sup {sup} exceeds norm bound {}",
                self.norm_bound
            )));
        }
        Ok(sup)
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}
