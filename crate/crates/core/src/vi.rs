//! Finite-dimensional variational inequalities `VI(F, K)`: find `x* in K`
//! with `<F(x*), y - x*> >= 0` for all `y in K`.
//!
//! Three solvers are provided:
//!
//! * [`solve_basic_projection`]: `x <- P_K(x - alpha D^-1 F(x))`, for strongly
//!   monotone Lipschitz `F` with `0 < alpha < 2 mu / L^2`.
//! * [`solve_extragradient`]: predictor `y = P_K(x - alpha F(x))`, corrector
//!   `x <- P_K(x - alpha F(y))`; needs only monotonicity.
//! * [`solve_stochastic_two_step`]: `z = x - alpha_k F_w(x, v_k)`,
//!   `x <- z - beta_k (z - P_{w_k} z)` with sampled noise and a sampled
//!   constraint block.
//!
//! Deterministic solvers terminate on the natural residual
//! `|x - P_K(x - F(x))|` (step 1), which vanishes exactly at solutions.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform as UniformDist};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixpoint::{self, ContractiveMap, FixpointError};
use crate::par::{self, Execution};
use crate::rng::{stream_rng, ChaCha8Rng};

pub type VectorField = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type Projector = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ViError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("solver diverged at iteration {iteration} (residual {residual}); try a smaller step size")]
    Diverged { iteration: usize, residual: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid step schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid problem description: {0}")]
    Format(String),
}

impl From<FixpointError> for ViError {
    fn from(e: FixpointError) -> Self {
        match e {
            FixpointError::Diverged { iteration, residual } => ViError::Diverged { iteration, residual },
            FixpointError::Dimension { expected, actual } => ViError::Dimension { expected, actual },
            other => ViError::Parameter(other.to_string()),
        }
    }
}

/// Closed convex feasible set `K` with an exact Euclidean projection.
#[derive(Clone)]
pub enum FeasibleSet {
    /// Coordinate box; bounds may be infinite.
    Box { lo: DVector<f64>, hi: DVector<f64> },
    Orthant { dim: usize },
    Ball { center: DVector<f64>, radius: f64 },
    /// Cartesian product `K = K_1 x ... x K_m` of consecutive coordinate blocks.
    Product(Vec<Block>),
    Custom(CustomSet),
}

/// One factor of a product set, covering coordinates `offset..offset + set.dim()`.
#[derive(Clone, Debug)]
pub struct Block {
    pub offset: usize,
    pub set: FeasibleSet,
}

/// User-supplied set. The projector must be exact.
#[derive(Clone)]
pub struct CustomSet {
    pub name: String,
    pub dim: usize,
    pub project: Projector,
}

impl fmt::Debug for FeasibleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeasibleSet::Box { lo, hi } => {
                write!(f, "Box {{ lo: {:?}, hi: {:?} }}", lo.as_slice(), hi.as_slice())
            }
            FeasibleSet::Orthant { dim } => write!(f, "Orthant {{ dim: {dim} }}"),
            FeasibleSet::Ball { center, radius } => {
                write!(f, "Ball {{ center: {:?}, radius: {radius} }}", center.as_slice())
            }
            FeasibleSet::Product(blocks) => f.debug_tuple("Product").field(blocks).finish(),
            FeasibleSet::Custom(c) => write!(f, "Custom {{ name: {:?}, dim: {} }}", c.name, c.dim),
        }
    }
}

impl FeasibleSet {
    pub fn unconstrained(dim: usize) -> Self {
        FeasibleSet::Box {
            lo: DVector::from_element(dim, f64::NEG_INFINITY),
            hi: DVector::from_element(dim, f64::INFINITY),
        }
    }

    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self, ViError> {
        if lo.len() != hi.len() {
            return Err(ViError::Dimension { expected: lo.len(), actual: hi.len() });
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(ViError::Parameter("box requires lo <= hi in every coordinate".into()));
        }
        Ok(FeasibleSet::Box { lo, hi })
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self, ViError> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(ViError::Parameter(format!("ball radius {radius} must be finite and >= 0")));
        }
        Ok(FeasibleSet::Ball { center, radius })
    }

    /// Product of the given factors laid out consecutively.
    pub fn product(factors: Vec<FeasibleSet>) -> Result<Self, ViError> {
        if factors.is_empty() {
            return Err(ViError::Parameter("product needs at least one block".into()));
        }
        let mut offset = 0;
        let mut blocks = Vec::with_capacity(factors.len());
        for set in factors {
            if matches!(set, FeasibleSet::Product(_)) {
                return Err(ViError::Parameter("nested products are not supported".into()));
            }
            let d = set.dim();
            blocks.push(Block { offset, set });
            offset += d;
        }
        Ok(FeasibleSet::Product(blocks))
    }

    /// Nonnegative orthant split into one single-coordinate block per axis.
    pub fn orthant_blocks(dim: usize) -> Self {
        FeasibleSet::Product(
            (0..dim).map(|i| Block { offset: i, set: FeasibleSet::Orthant { dim: 1 } }).collect(),
        )
    }

    pub fn custom(name: impl Into<String>, dim: usize, project: Projector) -> Self {
        FeasibleSet::Custom(CustomSet { name: name.into(), dim, project })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Box { lo, .. } => lo.len(),
            FeasibleSet::Orthant { dim } => *dim,
            FeasibleSet::Ball { center, .. } => center.len(),
            FeasibleSet::Product(blocks) => blocks.iter().map(|b| b.set.dim()).sum(),
            FeasibleSet::Custom(c) => c.dim,
        }
    }

    /// Euclidean projection `P_K(x)`.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            FeasibleSet::Box { lo, hi } => {
                DVector::from_iterator(x.len(), x.iter().zip(lo.iter().zip(hi.iter())).map(|(&v, (&l, &h))| v.max(l).min(h)))
            }
            FeasibleSet::Orthant { .. } => x.map(|v| v.max(0.0)),
            FeasibleSet::Ball { center, radius } => {
                let diff = x - center;
                let norm = diff.norm();
                if norm <= *radius {
                    x.clone()
                } else {
                    center + diff * (*radius / norm)
                }
            }
            FeasibleSet::Product(blocks) => {
                let mut out = x.clone();
                for b in blocks {
                    project_block_into(b, x, &mut out);
                }
                out
            }
            FeasibleSet::Custom(c) => (c.project)(x),
        }
    }

    pub fn num_blocks(&self) -> usize {
        match self {
            FeasibleSet::Product(blocks) => blocks.len(),
            _ => 1,
        }
    }

    pub fn blocks(&self) -> Option<&[Block]> {
        match self {
            FeasibleSet::Product(blocks) => Some(blocks),
            _ => None,
        }
    }

    /// Projects only the coordinates of block `i` (`P_{K_i}`), leaving the
    /// rest of `x` untouched.
    pub fn project_block(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>, ViError> {
        let blocks = self
            .blocks()
            .ok_or_else(|| ViError::Unsupported("block projection needs a product set".into()))?;
        let b = blocks
            .get(i)
            .ok_or_else(|| ViError::Parameter(format!("block {i} out of range ({})", blocks.len())))?;
        let mut out = x.clone();
        project_block_into(b, x, &mut out);
        Ok(out)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (self.project(x) - x).norm() <= tol
    }

    /// Draws a point of `K`. Unbounded directions are sampled within `scale`
    /// of the finite bound (or of the origin).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> DVector<f64> {
        match self {
            FeasibleSet::Box { lo, hi } => DVector::from_iterator(
                lo.len(),
                lo.iter().zip(hi.iter()).map(|(&l, &h)| {
                    let (a, b) = match (l.is_finite(), h.is_finite()) {
                        (true, true) => (l, h),
                        (true, false) => (l, l + scale),
                        (false, true) => (h - scale, h),
                        (false, false) => (-scale, scale),
                    };
                    if a == b {
                        a
                    } else {
                        rng.random_range(a..b)
                    }
                }),
            ),
            FeasibleSet::Orthant { dim } => DVector::from_fn(*dim, |_, _| rng.random_range(0.0..scale)),
            FeasibleSet::Ball { center, radius } => loop {
                let u = DVector::from_fn(center.len(), |_, _| rng.random_range(-1.0..1.0));
                if u.norm() <= 1.0 {
                    break center + u * *radius;
                }
            },
            FeasibleSet::Product(blocks) => {
                let mut out = DVector::zeros(self.dim());
                for b in blocks {
                    let part = b.set.sample(rng, scale);
                    out.rows_mut(b.offset, part.len()).copy_from(&part);
                }
                out
            }
            FeasibleSet::Custom(c) => {
                let raw = DVector::from_fn(c.dim, |_, _| rng.random_range(-scale..scale));
                (c.project)(&raw)
            }
        }
    }
}

fn project_block_into(b: &Block, x: &DVector<f64>, out: &mut DVector<f64>) {
    let d = b.set.dim();
    let part = b.set.project(&x.rows(b.offset, d).into_owned());
    out.rows_mut(b.offset, d).copy_from(&part);
}

/// A VI instance: dimension, the map `F`, the feasible set and optional
/// analytic Jacobian and constants (`mu`: strong monotonicity, `L`:
/// Lipschitz).
#[derive(Clone)]
pub struct ViProblem {
    dim: usize,
    field: VectorField,
    feasible: FeasibleSet,
    jacobian: Option<JacobianFn>,
    mu: Option<f64>,
    lipschitz: Option<f64>,
}

impl fmt::Debug for ViProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ViProblem")
            .field("dim", &self.dim)
            .field("feasible", &self.feasible)
            .field("has_jacobian", &self.jacobian.is_some())
            .field("mu", &self.mu)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl ViProblem {
    pub fn new(dim: usize, field: VectorField, feasible: FeasibleSet) -> Result<Self, ViError> {
        if feasible.dim() != dim {
            return Err(ViError::Dimension { expected: dim, actual: feasible.dim() });
        }
        Ok(Self { dim, field, feasible, jacobian: None, mu: None, lipschitz: None })
    }

    /// `F(x) = M x + q`.
    pub fn affine(m: DMatrix<f64>, q: DVector<f64>, feasible: FeasibleSet) -> Result<Self, ViError> {
        let n = q.len();
        if m.nrows() != n || m.ncols() != n {
            return Err(ViError::Dimension { expected: n, actual: m.nrows().max(m.ncols()) });
        }
        let mm = m.clone();
        let field: VectorField = Arc::new(move |x: &DVector<f64>| &mm * x + &q);
        let jac: JacobianFn = Arc::new(move |_: &DVector<f64>| m.clone());
        Ok(Self::new(n, field, feasible)?.with_jacobian(jac))
    }

    pub fn with_jacobian(mut self, jacobian: JacobianFn) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    pub fn with_constants(mut self, mu: Option<f64>, lipschitz: Option<f64>) -> Self {
        self.mu = mu;
        self.lipschitz = lipschitz;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feasible(&self) -> &FeasibleSet {
        &self.feasible
    }

    pub fn mu(&self) -> Option<f64> {
        self.mu
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn field(&self) -> &VectorField {
        &self.field
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.field)(x)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(x))
    }

    /// Largest relative deviation between the analytic Jacobian and central
    /// differences of `F` at `x`, or `None` without an analytic Jacobian.
    pub fn jacobian_mismatch(&self, x: &DVector<f64>) -> Option<f64> {
        let analytic = self.jacobian(x)?;
        let fd = finite_difference_jacobian(&*self.field, x, 1e-6);
        let scale = analytic.abs().max().max(1.0);
        Some((analytic - fd).abs().max() / scale)
    }

    /// `mu / L^2` when both constants are known, else `1 / (2L)` when only
    /// the Lipschitz constant is.
    pub fn default_step(&self) -> Option<f64> {
        match (self.mu, self.lipschitz) {
            (Some(mu), Some(l)) if mu > 0.0 && l > 0.0 => Some(mu / (l * l)),
            (_, Some(l)) if l > 0.0 => Some(0.5 / l),
            _ => None,
        }
    }

    fn check_point(&self, x: &DVector<f64>) -> Result<(), ViError> {
        if x.len() != self.dim {
            return Err(ViError::Dimension { expected: self.dim, actual: x.len() });
        }
        Ok(())
    }
}

/// Central-difference Jacobian of `f` at `x`.
pub fn finite_difference_jacobian(
    f: &(dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync),
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let n = x.len();
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// `|x - P_K(x - alpha F(x))|`; zero exactly at solutions of the VI.
pub fn natural_residual(p: &ViProblem, x: &DVector<f64>, alpha: f64) -> Result<f64, ViError> {
    if !(alpha > 0.0) {
        return Err(ViError::Parameter(format!("alpha {alpha} must be positive")));
    }
    p.check_point(x)?;
    Ok(residual_unchecked(p, x, alpha))
}

fn residual_unchecked(p: &ViProblem, x: &DVector<f64>, alpha: f64) -> f64 {
    let fx = p.eval(x);
    (x - p.feasible.project(&(x - fx * alpha))).norm()
}

/// Empirical monotonicity constants over sampled pairs of `K`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MonotonicityReport {
    pub monotone: bool,
    /// Smallest observed `<F(x)-F(y), x-y> / |x-y|^2`.
    pub strongly_monotone_mu_lower: f64,
    /// Largest observed `|F(x)-F(y)| / |x-y|`.
    pub lipschitz_l_upper: f64,
    pub pairs: usize,
}

/// Samples `samples` pairs from `K` (unbounded directions within 10 units)
/// and reports the empirical monotonicity and Lipschitz constants.
pub fn check_monotonicity(p: &ViProblem, samples: usize, seed: u64) -> Result<MonotonicityReport, ViError> {
    check_monotonicity_scaled(p, samples, seed, 10.0)
}

pub fn check_monotonicity_scaled(
    p: &ViProblem,
    samples: usize,
    seed: u64,
    scale: f64,
) -> Result<MonotonicityReport, ViError> {
    if samples < 2 {
        return Err(ViError::Parameter("need at least 2 samples".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let mut mu = f64::INFINITY;
    let mut lip: f64 = 0.0;
    let mut pairs = 0;
    for _ in 0..samples {
        let x = p.feasible.sample(&mut rng, scale);
        let y = p.feasible.sample(&mut rng, scale);
        let d = &x - &y;
        let dn2 = d.norm_squared();
        if dn2 == 0.0 {
            continue;
        }
        let df = p.eval(&x) - p.eval(&y);
        mu = mu.min(df.dot(&d) / dn2);
        lip = lip.max(df.norm() / dn2.sqrt());
        pairs += 1;
    }
    if pairs == 0 {
        return Err(ViError::Parameter("feasible set produced no distinct sample pairs".into()));
    }
    Ok(MonotonicityReport { monotone: mu >= -1e-9, strongly_monotone_mu_lower: mu, lipschitz_l_upper: lip, pairs })
}

/// Shared options for the deterministic solvers.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting point; defaults to `P_K(0)`.
    pub x0: Option<DVector<f64>>,
    pub record_trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100_000, x0: None, record_trace: false }
    }
}

impl SolveOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
    pub fn with_x0(mut self, x0: DVector<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }
    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub point: DVector<f64>,
    /// Natural residual (step 1) at `point`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Per-iterate natural residuals when requested.
    pub trace: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct SolutionJson {
    point: Vec<f64>,
    residual: f64,
    iterations: usize,
    converged: bool,
}

impl Solution {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SolutionJson {
            point: self.point.iter().copied().collect(),
            residual: self.residual,
            iterations: self.iterations,
            converged: self.converged,
        })
        .expect("solution serializes")
    }

    /// Writes the residual trace as `k,residual` rows.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["k", "residual"])?;
        for (k, r) in self.trace.iter().flatten().enumerate() {
            w.write_record([k.to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn start_point(p: &ViProblem, opts: &SolveOptions) -> Result<DVector<f64>, ViError> {
    match &opts.x0 {
        Some(x) => {
            p.check_point(x)?;
            Ok(x.clone())
        }
        None => Ok(p.feasible.project(&DVector::zeros(p.dim))),
    }
}

fn run_fixpoint<H>(p: &ViProblem, map: H, opts: &SolveOptions) -> Result<Solution, ViError>
where
    H: Fn(&DVector<f64>) -> DVector<f64>,
{
    if !(opts.tol > 0.0) {
        return Err(ViError::Parameter(format!("tolerance {} must be positive", opts.tol)));
    }
    let x0 = start_point(p, opts)?;
    let cmap = ContractiveMap::new(p.dim, map);
    let res = fixpoint::iterate_with_residual(&cmap, &x0, opts.tol, opts.max_iter, |x, _| {
        residual_unchecked(p, x, 1.0)
    })?;
    Ok(Solution {
        point: res.point,
        residual: res.final_residual,
        iterations: res.iterations,
        converged: res.converged,
        trace: opts.record_trace.then_some(res.residuals),
    })
}

/// Basic projection method with positive diagonal scaling `D` (given by its
/// diagonal).
pub fn solve_basic_projection(
    p: &ViProblem,
    scaling: &DVector<f64>,
    alpha: f64,
    opts: &SolveOptions,
) -> Result<Solution, ViError> {
    if !(alpha > 0.0) {
        return Err(ViError::Parameter(format!("alpha {alpha} must be positive")));
    }
    if scaling.len() != p.dim {
        return Err(ViError::Dimension { expected: p.dim, actual: scaling.len() });
    }
    if scaling.iter().any(|&d| !(d > 0.0)) {
        return Err(ViError::Parameter("scaling matrix D must be positive diagonal".into()));
    }
    run_fixpoint(
        p,
        |x: &DVector<f64>| {
            let step = p.eval(x).component_div(scaling);
            p.feasible.project(&(x - step * alpha))
        },
        opts,
    )
}

/// Extragradient (Korpelevich) method.
pub fn solve_extragradient(p: &ViProblem, alpha: f64, opts: &SolveOptions) -> Result<Solution, ViError> {
    if !(alpha > 0.0) {
        return Err(ViError::Parameter(format!("alpha {alpha} must be positive")));
    }
    run_fixpoint(
        p,
        |x: &DVector<f64>| {
            let y = p.feasible.project(&(x - p.eval(x) * alpha));
            p.feasible.project(&(x - p.eval(&y) * alpha))
        },
        opts,
    )
}

/// Noise realizations `v_k` injected into `F`.
#[derive(Clone)]
pub enum NoiseModel {
    Zero,
    /// i.i.d. `N(0, sigma^2)` per coordinate.
    Gaussian { sigma: f64 },
    /// i.i.d. `Unif(-half_width, half_width)` per coordinate.
    Uniform { half_width: f64 },
    Custom(Arc<dyn Fn(&mut ChaCha8Rng, usize) -> DVector<f64> + Send + Sync>),
}

impl fmt::Debug for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Zero => write!(f, "Zero"),
            NoiseModel::Gaussian { sigma } => write!(f, "Gaussian {{ sigma: {sigma} }}"),
            NoiseModel::Uniform { half_width } => write!(f, "Uniform {{ half_width: {half_width} }}"),
            NoiseModel::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Distribution of the sampled constraint block `w_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockSampling {
    Uniform,
    Weighted(Vec<f64>),
}

/// Sampled map `F_w(x, v)` with noise `v` and block index `w`. By default
/// `F_w(x, v) = F(x) + v`.
#[derive(Clone)]
pub struct StochasticSampler {
    pub noise: NoiseModel,
    pub noisy_field: Option<Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>>,
    pub blocks: BlockSampling,
}

impl fmt::Debug for StochasticSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StochasticSampler")
            .field("noise", &self.noise)
            .field("custom_field", &self.noisy_field.is_some())
            .field("blocks", &self.blocks)
            .finish()
    }
}

impl StochasticSampler {
    pub fn new(noise: NoiseModel) -> Self {
        Self { noise, noisy_field: None, blocks: BlockSampling::Uniform }
    }

    pub fn zero_noise() -> Self {
        Self::new(NoiseModel::Zero)
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self::new(NoiseModel::Gaussian { sigma })
    }

    pub fn with_blocks(mut self, blocks: BlockSampling) -> Self {
        self.blocks = blocks;
        self
    }

    pub fn with_noisy_field(
        mut self,
        g: Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>,
    ) -> Self {
        self.noisy_field = Some(g);
        self
    }

    /// Draws `v_k`; `None` for the zero-noise model (no randomness consumed).
    pub fn draw_v(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<Option<DVector<f64>>, ViError> {
        Ok(match &self.noise {
            NoiseModel::Zero => None,
            NoiseModel::Gaussian { sigma } => {
                let d = Normal::new(0.0, *sigma).map_err(|e| ViError::Parameter(e.to_string()))?;
                Some(DVector::from_fn(n, |_, _| d.sample(rng)))
            }
            NoiseModel::Uniform { half_width } => {
                let d = UniformDist::new_inclusive(-half_width, *half_width)
                    .map_err(|e| ViError::Parameter(e.to_string()))?;
                Some(DVector::from_fn(n, |_, _| d.sample(rng)))
            }
            NoiseModel::Custom(g) => Some(g(rng, n)),
        })
    }

    pub fn f_noisy(&self, p: &ViProblem, x: &DVector<f64>, v: Option<&DVector<f64>>) -> DVector<f64> {
        match (v, &self.noisy_field) {
            (None, _) => p.eval(x),
            (Some(v), Some(g)) => g(x, v),
            (Some(v), None) => p.eval(x) + v,
        }
    }

    /// Draws `w_k` in `0..m`.
    pub fn draw_block(&self, rng: &mut ChaCha8Rng, m: usize) -> Result<usize, ViError> {
        match &self.blocks {
            BlockSampling::Uniform => Ok(rng.random_range(0..m)),
            BlockSampling::Weighted(w) => {
                if w.len() != m {
                    return Err(ViError::Dimension { expected: m, actual: w.len() });
                }
                let total: f64 = w.iter().sum();
                let mut u = rng.random_range(0.0..total);
                for (i, &wi) in w.iter().enumerate() {
                    if u < wi {
                        return Ok(i);
                    }
                    u -= wi;
                }
                Ok(m - 1)
            }
        }
    }

    /// Constant `rho` with `P(w_k = i) >= rho / m` for every block.
    pub fn rho(&self, m: usize) -> Result<f64, ViError> {
        match &self.blocks {
            BlockSampling::Uniform => Ok(1.0),
            BlockSampling::Weighted(w) => {
                if w.len() != m || w.iter().any(|&x| !(x >= 0.0)) {
                    return Err(ViError::Parameter("block weights must be nonnegative, one per block".into()));
                }
                let total: f64 = w.iter().sum();
                let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
                Ok(m as f64 * min / total)
            }
        }
    }

    /// Checks that the sampled map is unbiased at `x`: every coordinate of
    /// the empirical mean of `F_w(x, v)` over `draws` samples lies within 4
    /// standard errors of `F(x)`.
    pub fn check_unbiased(&self, p: &ViProblem, x: &DVector<f64>, draws: usize, seed: u64) -> Result<bool, ViError> {
        let mut rng = stream_rng(seed, 1);
        let n = p.dim();
        let mut sum = DVector::zeros(n);
        let mut sumsq = DVector::zeros(n);
        for _ in 0..draws {
            let v = self.draw_v(&mut rng, n)?;
            let s = self.f_noisy(p, x, v.as_ref());
            sumsq += s.component_mul(&s);
            sum += s;
        }
        let k = draws as f64;
        let mean = &sum / k;
        let exact = p.eval(x);
        Ok((0..n).all(|i| {
            let var = (sumsq[i] / k - mean[i] * mean[i]).max(0.0);
            let se = (var / k).sqrt();
            (mean[i] - exact[i]).abs() <= 4.0 * se + 1e-12
        }))
    }
}

/// Primal step sizes `alpha_k`.
#[derive(Clone)]
pub enum AlphaRule {
    /// `a / (k + c)`.
    Harmonic { a: f64, c: f64 },
    /// `a / (k + c)^p`.
    Power { a: f64, c: f64, p: f64 },
    Constant(f64),
    Custom(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

/// Relaxation parameters `beta_k`, required in `(0, 2)`.
#[derive(Clone)]
pub enum BetaRule {
    Constant(f64),
    Custom(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

#[derive(Clone)]
pub struct StepSchedule {
    pub alpha: AlphaRule,
    pub beta: BetaRule,
}

impl fmt::Debug for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match &self.alpha {
            AlphaRule::Harmonic { a, c } => format!("{a}/(k+{c})"),
            AlphaRule::Power { a, c, p } => format!("{a}/(k+{c})^{p}"),
            AlphaRule::Constant(a) => format!("{a}"),
            AlphaRule::Custom(_) => "custom".into(),
        };
        let b = match &self.beta {
            BetaRule::Constant(b) => format!("{b}"),
            BetaRule::Custom(_) => "custom".into(),
        };
        write!(f, "StepSchedule {{ alpha: {a}, beta: {b} }}")
    }
}

impl StepSchedule {
    pub fn harmonic(a: f64, c: f64, beta: f64) -> Self {
        Self { alpha: AlphaRule::Harmonic { a, c }, beta: BetaRule::Constant(beta) }
    }

    pub fn constant(alpha: f64, beta: f64) -> Self {
        Self { alpha: AlphaRule::Constant(alpha), beta: BetaRule::Constant(beta) }
    }

    pub fn alpha(&self, k: usize) -> f64 {
        let k = k as f64;
        match &self.alpha {
            AlphaRule::Harmonic { a, c } => a / (k + c),
            AlphaRule::Power { a, c, p } => a / (k + c).powf(*p),
            AlphaRule::Constant(a) => *a,
            AlphaRule::Custom(f) => f(k as usize),
        }
    }

    pub fn beta(&self, k: usize) -> f64 {
        match &self.beta {
            BetaRule::Constant(b) => *b,
            BetaRule::Custom(f) => f(k),
        }
    }

    /// `gamma_k = beta_k (2 - beta_k)`.
    pub fn gamma(&self, k: usize) -> f64 {
        let b = self.beta(k);
        b * (2.0 - b)
    }
}

/// Horizon used for numerical checks of custom schedules.
pub const SCHEDULE_HORIZON: usize = 1_000_000;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ScheduleReport {
    pub sum_alpha_diverges: bool,
    pub sum_alpha_sq_converges: bool,
    pub sum_alpha_sq_over_gamma_converges: bool,
    pub valid: bool,
    /// `true` when decided from closed-form series facts, `false` when
    /// inferred from partial sums up to [`SCHEDULE_HORIZON`].
    pub analytic: bool,
}

/// Checks `sum alpha_k = inf`, `sum alpha_k^2 < inf` and
/// `sum alpha_k^2 / gamma_k < inf`.
///
/// Built-in rules are decided analytically. Custom rules are judged from
/// partial sums: a series is taken as convergent when its second-half tail
/// contributes under 1% of the total.
pub fn assert_schedule_valid(sched: &StepSchedule) -> Result<ScheduleReport, ViError> {
    let analytic_beta = match &sched.beta {
        BetaRule::Constant(b) => {
            if !(*b > 0.0 && *b < 2.0) {
                return Err(ViError::InvalidSchedule(format!("beta {b} outside (0, 2); gamma_k <= 0")));
            }
            true
        }
        BetaRule::Custom(f) => {
            if let Some(k) = (0..SCHEDULE_HORIZON).find(|&k| !(f(k) > 0.0 && f(k) < 2.0)) {
                return Err(ViError::InvalidSchedule(format!("beta_{k} = {} outside (0, 2)", f(k))));
            }
            false
        }
    };
    // exponent p of alpha_k ~ k^-p for the analytic rules
    let exponent = match &sched.alpha {
        AlphaRule::Harmonic { a, c } | AlphaRule::Power { a, c, .. } if !(*a > 0.0 && *c > 0.0) => {
            return Err(ViError::InvalidSchedule("alpha rule needs a > 0 and c > 0".into()));
        }
        AlphaRule::Harmonic { .. } => Some(1.0),
        AlphaRule::Power { p, .. } => Some(*p),
        AlphaRule::Constant(a) if !(*a > 0.0) => {
            return Err(ViError::InvalidSchedule(format!("alpha {a} must be positive")));
        }
        AlphaRule::Constant(_) => Some(0.0),
        AlphaRule::Custom(_) => None,
    };
    if let (Some(p), true) = (exponent, analytic_beta) {
        let diverges = p <= 1.0;
        let sq = 2.0 * p > 1.0;
        return Ok(ScheduleReport {
            sum_alpha_diverges: diverges,
            sum_alpha_sq_converges: sq,
            // constant beta: gamma_k is a positive constant
            sum_alpha_sq_over_gamma_converges: sq,
            valid: diverges && sq,
            analytic: true,
        });
    }
    let half = SCHEDULE_HORIZON / 2;
    let mut totals = [0.0_f64; 3];
    let mut tails = [0.0_f64; 3];
    for k in 0..SCHEDULE_HORIZON {
        let a = sched.alpha(k);
        if !(a > 0.0) {
            return Err(ViError::InvalidSchedule(format!("alpha_{k} = {a} must be positive")));
        }
        let terms = [a, a * a, a * a / sched.gamma(k)];
        for i in 0..3 {
            totals[i] += terms[i];
            if k >= half {
                tails[i] += terms[i];
            }
        }
    }
    let converges = |i: usize| tails[i] < 0.01 * totals[i];
    let report = ScheduleReport {
        sum_alpha_diverges: !converges(0),
        sum_alpha_sq_converges: converges(1),
        sum_alpha_sq_over_gamma_converges: converges(2),
        valid: false,
        analytic: false,
    };
    Ok(ScheduleReport {
        valid: report.sum_alpha_diverges && report.sum_alpha_sq_converges && report.sum_alpha_sq_over_gamma_converges,
        ..report
    })
}

/// Incremental two-step stochastic projection method.
///
/// Runs exactly `iterations` updates from `x0` (default `P_K(0)`), drawing
/// `v_k` then `w_k` from the stream `(seed, 0)`. Iterates may leave `K`
/// because only one block is projected per step. The returned residual is
/// the natural residual of the deterministic `F` at the final iterate. The
/// schedule is not validated here; see [`assert_schedule_valid`].
pub fn solve_stochastic_two_step(
    p: &ViProblem,
    sampler: &StochasticSampler,
    sched: &StepSchedule,
    seed: u64,
    iterations: usize,
    x0: Option<&DVector<f64>>,
) -> Result<Solution, ViError> {
    let m = match p.feasible.blocks() {
        Some(b) => b.len(),
        None => {
            return Err(ViError::Unsupported(
                "stochastic two-step solver needs a product-of-blocks feasible set".into(),
            ))
        }
    };
    let mut x = match x0 {
        Some(x) => {
            p.check_point(x)?;
            x.clone()
        }
        None => p.feasible.project(&DVector::zeros(p.dim)),
    };
    let mut rng = stream_rng(seed, 0);
    for k in 0..iterations {
        let v = sampler.draw_v(&mut rng, p.dim)?;
        let w = sampler.draw_block(&mut rng, m)?;
        let z = &x - sampler.f_noisy(p, &x, v.as_ref()) * sched.alpha(k);
        let pz = p.feasible.project_block(w, &z)?;
        let beta = sched.beta(k);
        x = if beta == 1.0 { pz } else { &z - (&z - pz) * beta };
        if x.iter().any(|c| !c.is_finite()) || x.norm() > fixpoint::DIVERGENCE_THRESHOLD {
            return Err(ViError::Diverged { iteration: k, residual: f64::INFINITY });
        }
    }
    let residual = natural_residual(p, &x, 1.0)?;
    Ok(Solution { point: x, residual, iterations, converged: true, trace: None })
}

/// Runs [`solve_stochastic_two_step`] once per seed, returning solutions in
/// seed order.
pub fn solve_stochastic_batch(
    p: &ViProblem,
    sampler: &StochasticSampler,
    sched: &StepSchedule,
    seeds: &[u64],
    iterations: usize,
    exec: Execution,
) -> Result<Vec<Solution>, ViError> {
    par::map_range(exec, seeds.len(), |i| solve_stochastic_two_step(p, sampler, sched, seeds[i], iterations, None))
        .into_iter()
        .collect()
}

/// JSON description of an affine VI `F(x) = M x + q`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AffineViSpec {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub set: SetSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SetSpec {
    pub kind: String,
    #[serde(default)]
    pub lo: Option<Vec<f64>>,
    #[serde(default)]
    pub hi: Option<Vec<f64>>,
}

impl AffineViSpec {
    /// Builds the problem with `mu` (when positive) and `L` taken from `M`.
    pub fn to_problem(&self) -> Result<ViProblem, ViError> {
        let n = self.n;
        if self.m.len() != n || self.m.iter().any(|r| r.len() != n) {
            return Err(ViError::Format(format!("\"M\" must be {n}x{n}")));
        }
        if self.q.len() != n {
            return Err(ViError::Format(format!("\"q\" must have {n} entries")));
        }
        let m = DMatrix::from_fn(n, n, |i, j| self.m[i][j]);
        let q = DVector::from_column_slice(&self.q);
        let set = match self.set.kind.as_str() {
            "orthant" => FeasibleSet::orthant_blocks(n),
            "box" => {
                let lo = self.set.lo.clone().ok_or_else(|| ViError::Format("box needs \"lo\"".into()))?;
                let hi = self.set.hi.clone().ok_or_else(|| ViError::Format("box needs \"hi\"".into()))?;
                if lo.len() != n || hi.len() != n {
                    return Err(ViError::Format(format!("box bounds must have {n} entries")));
                }
                let factors = (0..n)
                    .map(|i| FeasibleSet::boxed(DVector::from_element(1, lo[i]), DVector::from_element(1, hi[i])))
                    .collect::<Result<Vec<_>, _>>()?;
                FeasibleSet::product(factors)?
            }
            other => return Err(ViError::Format(format!("unknown set kind {other:?}"))),
        };
        let sym = (&m + m.transpose()) * 0.5;
        let mu = nalgebra::SymmetricEigen::new(sym).eigenvalues.min();
        let l = m.clone().svd(false, false).singular_values.max();
        let mu = (mu > 0.0).then_some(mu);
        let l = (l > 0.0).then_some(l);
        Ok(ViProblem::affine(m, q, set)?.with_constants(mu, l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn shifted_identity(b: DVector<f64>, set: FeasibleSet) -> ViProblem {
        let n = b.len();
        ViProblem::affine(DMatrix::identity(n, n), -b, set).unwrap().with_constants(Some(1.0), Some(1.0))
    }

    #[test]
    fn residual_vanishes_at_trivial_solutions() {
        let p = ViProblem::affine(DMatrix::identity(3, 3), DVector::zeros(3), FeasibleSet::unconstrained(3)).unwrap();
        assert_eq!(natural_residual(&p, &DVector::zeros(3), 1.0).unwrap(), 0.0);
        let b = v(&[1.0, -2.0, 3.5]);
        let p = shifted_identity(b.clone(), FeasibleSet::unconstrained(3));
        assert_eq!(natural_residual(&p, &b, 1.0).unwrap(), 0.0);
        assert!(matches!(natural_residual(&p, &b, 0.0), Err(ViError::Parameter(_))));
        assert!(matches!(natural_residual(&p, &v(&[1.0]), 1.0), Err(ViError::Dimension { .. })));
    }

    #[test]
    fn projections_idempotent_and_nonexpansive() {
        let mut rng = stream_rng(3, 0);
        let sets = vec![
            FeasibleSet::boxed(v(&[0.0, -1.0, 2.0]), v(&[1.0, 1.0, 2.5])).unwrap(),
            FeasibleSet::Orthant { dim: 3 },
            FeasibleSet::ball(v(&[1.0, 0.0, -1.0]), 2.0).unwrap(),
            FeasibleSet::product(vec![
                FeasibleSet::Orthant { dim: 1 },
                FeasibleSet::ball(v(&[0.0, 0.0]), 1.0).unwrap(),
            ])
            .unwrap(),
        ];
        for set in &sets {
            for _ in 0..200 {
                let x = DVector::from_fn(3, |_, _| rng.random_range(-5.0..5.0));
                let y = DVector::from_fn(3, |_, _| rng.random_range(-5.0..5.0));
                let px = set.project(&x);
                assert!((set.project(&px) - &px).norm() <= 1e-12);
                assert!((&px - set.project(&y)).norm() <= (&x - &y).norm() + 1e-12);
                assert!(set.contains(&set.sample(&mut rng, 10.0), 1e-12));
            }
        }
    }

    #[test]
    fn product_blocks_project_independently() {
        let k = FeasibleSet::product(vec![
            FeasibleSet::Orthant { dim: 1 },
            FeasibleSet::boxed(v(&[0.0]), v(&[1.0])).unwrap(),
        ])
        .unwrap();
        let x = v(&[-1.0, 3.0]);
        assert_eq!(k.project_block(0, &x).unwrap(), v(&[0.0, 3.0]));
        assert_eq!(k.project_block(1, &x).unwrap(), v(&[-1.0, 1.0]));
        assert_eq!(k.project(&x), v(&[0.0, 1.0]));
        assert!(k.project_block(2, &x).is_err());
        assert!(FeasibleSet::Orthant { dim: 2 }.project_block(0, &x).is_err());
    }

    #[test]
    fn monotonicity_reports() {
        let id = ViProblem::affine(DMatrix::identity(2, 2), DVector::zeros(2), FeasibleSet::unconstrained(2)).unwrap();
        let r = check_monotonicity(&id, 100, 1).unwrap();
        assert!(r.monotone);
        assert_relative_eq!(r.strongly_monotone_mu_lower, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.lipschitz_l_upper, 1.0, epsilon = 1e-12);

        let neg = ViProblem::affine(-DMatrix::identity(2, 2), DVector::zeros(2), FeasibleSet::unconstrained(2)).unwrap();
        let r = check_monotonicity(&neg, 100, 1).unwrap();
        assert!(!r.monotone);
        assert_relative_eq!(r.strongly_monotone_mu_lower, -1.0, epsilon = 1e-12);
        assert!(check_monotonicity(&neg, 1, 1).is_err());
    }

    #[test]
    fn basic_projection_trivial_cases() {
        let b = v(&[0.25, 0.75, 0.5]);
        let cube = FeasibleSet::boxed(DVector::zeros(3), DVector::from_element(3, 1.0)).unwrap();
        let p = shifted_identity(b.clone(), cube);
        let sol = solve_basic_projection(&p, &DVector::from_element(3, 1.0), 0.5, &SolveOptions::default()).unwrap();
        assert!(sol.converged);
        assert!((&sol.point - b).norm() < 1e-7);

        // unconstrained optimum (2, 2) projected onto [0, 1]^2
        let sq = FeasibleSet::boxed(DVector::zeros(2), DVector::from_element(2, 1.0)).unwrap();
        let p = shifted_identity(v(&[2.0, 2.0]), sq);
        let sol = solve_basic_projection(&p, &DVector::from_element(2, 1.0), 0.5, &SolveOptions::default()).unwrap();
        assert!((&sol.point - v(&[1.0, 1.0])).norm() < 1e-7);
        assert_eq!(natural_residual(&p, &sol.point, 1.0).unwrap(), sol.residual);
    }

    #[test]
    fn basic_projection_diverges_with_large_step() {
        let p = shifted_identity(v(&[1.0]), FeasibleSet::unconstrained(1));
        let err = solve_basic_projection(&p, &v(&[1.0]), 3.0, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, ViError::Diverged { .. }));
        assert!(err.to_string().contains("smaller step"));
    }

    #[test]
    fn nontrivial_scaling_still_solves() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, -1.0, 2.0]);
        let q = v(&[-5.0, -4.0]);
        let p = ViProblem::affine(m.clone(), q.clone(), FeasibleSet::orthant_blocks(2)).unwrap();
        let d = v(&[3.0, 2.0]);
        let sol = solve_basic_projection(&p, &d, 0.5, &SolveOptions::default().with_tol(1e-11)).unwrap();
        let exact = m.lu().solve(&(-q)).unwrap();
        assert!(exact.iter().all(|&c| c >= 0.0));
        assert!((&sol.point - exact).norm() < 1e-9);
    }

    #[test]
    fn extragradient_handles_rotation_where_projection_orbits() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let ball = FeasibleSet::ball(DVector::zeros(2), 1.0).unwrap();
        let p = ViProblem::affine(rot, DVector::zeros(2), ball).unwrap();
        let opts = SolveOptions::default().with_x0(v(&[0.5, 0.0])).with_tol(1e-8).with_max_iter(5000).with_trace();
        let eg = solve_extragradient(&p, 0.3, &opts).unwrap();
        assert!(eg.converged);
        assert!(eg.point.norm() < 1e-7);
        let bp = solve_basic_projection(&p, &DVector::from_element(2, 1.0), 0.3, &opts).unwrap();
        assert!(!bp.converged);
        let trace = bp.trace.unwrap();
        // the plain projection step never shrinks the orbit radius
        assert!(trace.last().unwrap() >= &trace[0]);
    }

    #[test]
    fn extragradient_unconstrained_shift() {
        let b = v(&[3.0, -1.0]);
        let p = shifted_identity(b.clone(), FeasibleSet::unconstrained(2));
        let sol = solve_extragradient(&p, 0.5, &SolveOptions::default()).unwrap();
        assert!((&sol.point - b).norm() < 1e-7);
    }

    #[test]
    fn schedule_validation() {
        let ok = assert_schedule_valid(&StepSchedule::harmonic(1.0, 1.0, 1.0)).unwrap();
        assert!(ok.valid && ok.analytic);
        let sqrt = StepSchedule {
            alpha: AlphaRule::Power { a: 1.0, c: 1.0, p: 0.5 },
            beta: BetaRule::Constant(1.0),
        };
        let r = assert_schedule_valid(&sqrt).unwrap();
        assert!(!r.valid && r.sum_alpha_diverges && !r.sum_alpha_sq_converges);
        assert!(matches!(
            assert_schedule_valid(&StepSchedule::harmonic(1.0, 1.0, 2.0)),
            Err(ViError::InvalidSchedule(_))
        ));
        assert!(!assert_schedule_valid(&StepSchedule::constant(0.1, 1.0)).unwrap().valid);
    }

    #[test]
    fn custom_schedules_checked_numerically() {
        let harmonic = StepSchedule {
            alpha: AlphaRule::Custom(Arc::new(|k| 1.0 / (k as f64 + 1.0))),
            beta: BetaRule::Custom(Arc::new(|_| 0.5)),
        };
        let r = assert_schedule_valid(&harmonic).unwrap();
        assert!(r.valid && !r.analytic);
        let sqrt = StepSchedule {
            alpha: AlphaRule::Custom(Arc::new(|k| 1.0 / (k as f64 + 1.0).sqrt())),
            beta: BetaRule::Constant(1.0),
        };
        assert!(!assert_schedule_valid(&sqrt).unwrap().sum_alpha_sq_converges);
        let summable = StepSchedule {
            alpha: AlphaRule::Custom(Arc::new(|k| 1.0 / (k as f64 + 1.0).powi(2))),
            beta: BetaRule::Constant(1.0),
        };
        assert!(!assert_schedule_valid(&summable).unwrap().sum_alpha_diverges);
    }

    #[test]
    fn stochastic_needs_product_set() {
        let p = ViProblem::affine(DMatrix::identity(1, 1), DVector::zeros(1), FeasibleSet::Orthant { dim: 1 }).unwrap();
        let err = solve_stochastic_two_step(
            &p,
            &StochasticSampler::zero_noise(),
            &StepSchedule::harmonic(1.0, 1.0, 1.0),
            0,
            10,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, ViError::Unsupported(_)));
    }

    #[test]
    fn stochastic_scalar_root_near_zero() {
        // F(x) = x on R+, noisy F_w(x, v) = x + v with v ~ Unif(-1, 1)
        let p = ViProblem::affine(DMatrix::identity(1, 1), DVector::zeros(1), FeasibleSet::orthant_blocks(1)).unwrap();
        let sampler = StochasticSampler::new(NoiseModel::Uniform { half_width: 1.0 });
        let sched = StepSchedule::harmonic(1.0, 1.0, 1.0);
        let sol = solve_stochastic_two_step(&p, &sampler, &sched, 9, 20_000, Some(&v(&[5.0]))).unwrap();
        assert!(sol.point[0].abs() < 0.05, "{}", sol.point[0]);
        let again = solve_stochastic_two_step(&p, &sampler, &sched, 9, 20_000, Some(&v(&[5.0]))).unwrap();
        assert_eq!(sol, again);
    }

    #[test]
    fn zero_noise_single_block_matches_basic_projection_bitwise() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, -0.5, 1.0]);
        let set = FeasibleSet::product(vec![FeasibleSet::ball(v(&[0.0, 0.0]), 1.5).unwrap()]).unwrap();
        let p = ViProblem::affine(m, v(&[-4.0, 1.0]), set).unwrap();
        let x0 = v(&[0.3, -0.2]);
        for n in [1, 2, 7, 40] {
            let opts = SolveOptions::default().with_x0(x0.clone()).with_tol(1e-300).with_max_iter(n);
            let det = solve_basic_projection(&p, &v(&[1.0, 1.0]), 0.2, &opts).unwrap();
            let sto = solve_stochastic_two_step(
                &p,
                &StochasticSampler::zero_noise(),
                &StepSchedule::constant(0.2, 1.0),
                11,
                n,
                Some(&x0),
            )
            .unwrap();
            assert_eq!(det.point, sto.point, "after {n} steps");
        }
    }

    #[test]
    fn weighted_blocks_and_rho() {
        let s = StochasticSampler::zero_noise().with_blocks(BlockSampling::Weighted(vec![1.0, 3.0]));
        assert_relative_eq!(s.rho(2).unwrap(), 0.5);
        let mut rng = stream_rng(1, 0);
        let hits = (0..40_000).filter(|_| s.draw_block(&mut rng, 2).unwrap() == 0).count();
        assert!((hits as f64 / 40_000.0 - 0.25).abs() < 0.01);
        assert_eq!(StochasticSampler::zero_noise().rho(5).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_sampler_is_unbiased() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let p = ViProblem::affine(m, v(&[1.0, -1.0]), FeasibleSet::orthant_blocks(2)).unwrap();
        let s = StochasticSampler::gaussian(1.0);
        assert!(s.check_unbiased(&p, &v(&[0.5, 2.0]), 10_000, 5).unwrap());
        let biased = StochasticSampler::gaussian(1.0)
            .with_noisy_field(Arc::new(|x: &DVector<f64>, v: &DVector<f64>| x + v + DVector::from_element(2, 0.5)));
        assert!(!biased.check_unbiased(&p, &v(&[0.5, 2.0]), 10_000, 5).unwrap());
    }

    #[test]
    fn affine_spec_round_trip() {
        let json = r#"{"n":2,"M":[[2,0],[0,2]],"q":[-2,4],"set":{"kind":"orthant"}}"#;
        let spec: AffineViSpec = serde_json::from_str(json).unwrap();
        let p = spec.to_problem().unwrap();
        let sol = solve_extragradient(&p, 0.2, &SolveOptions::default()).unwrap();
        assert!((&sol.point - v(&[1.0, 0.0])).norm() < 1e-7);
        let out = sol.to_json();
        assert_eq!(out["converged"], serde_json::json!(true));
        let bad: AffineViSpec =
            serde_json::from_str(r#"{"n":2,"M":[[1]],"q":[0,0],"set":{"kind":"orthant"}}"#).unwrap();
        assert!(matches!(bad.to_problem(), Err(ViError::Format(_))));
        let boxed: AffineViSpec = serde_json::from_str(
            r#"{"n":1,"M":[[1]],"q":[-5],"set":{"kind":"box","lo":[0],"hi":[2]}}"#,
        )
        .unwrap();
        let sol = solve_basic_projection(&boxed.to_problem().unwrap(), &v(&[1.0]), 0.5, &SolveOptions::default())
            .unwrap();
        assert!((sol.point[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn trace_csv_format() {
        let p = shifted_identity(v(&[1.0]), FeasibleSet::unconstrained(1));
        let sol = solve_basic_projection(&p, &v(&[1.0]), 0.5, &SolveOptions::default().with_trace()).unwrap();
        let mut buf = Vec::new();
        sol.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,residual\n0,1\n"));
        assert_eq!(text.lines().count(), sol.iterations + 2);
    }

    #[test]
    fn jacobian_mismatch_detects_wrong_derivative() {
        let field: VectorField = Arc::new(|x: &DVector<f64>| x.map(|c| c * c));
        let good: JacobianFn = Arc::new(|x: &DVector<f64>| DMatrix::from_diagonal(&(x * 2.0)));
        let bad: JacobianFn = Arc::new(|x: &DVector<f64>| DMatrix::from_diagonal(x));
        let p = ViProblem::new(2, field.clone(), FeasibleSet::unconstrained(2)).unwrap();
        let x = v(&[1.5, -2.0]);
        assert!(p.clone().with_jacobian(good).jacobian_mismatch(&x).unwrap() < 1e-5);
        assert!(p.clone().with_jacobian(bad).jacobian_mismatch(&x).unwrap() > 1e-2);
        assert!(p.jacobian_mismatch(&x).is_none());
    }
}
