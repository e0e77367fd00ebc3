//! Evolutionary dynamics.
//!
//! * Moran birth-death process with mutant fitness `r` and resident fitness 1.
//! * Evolvability of monotone conjunctions under single-literal mutations.
//! * An evolutionary loop over the network economy: solve, drop the least
//!   fit service provider, clone and perturb a survivor, repeat.

use std::io::Write;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::netecon::{NetworkEconomyModel, NeteconError, ScalarFn};
use crate::par::{self, Execution};
use crate::rng::stream_rng;
use crate::vi::{solve_extragradient, SolveOptions, ViError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvoError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("state i={i} is absorbing (N={n})")]
    Absorbing { n: usize, i: usize },
    #[error("distribution sums to {0}, expected 1")]
    NotNormalized(f64),
    #[error(transparent)]
    Model(#[from] NeteconError),
    #[error(transparent)]
    Vi(#[from] ViError),
}

/// Population of `n` individuals, `i` of them mutants of fitness `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoranState {
    pub n: usize,
    pub i: usize,
    pub r: f64,
}

impl MoranState {
    pub fn new(n: usize, i: usize, r: f64) -> Result<Self, EvoError> {
        if n == 0 {
            return Err(EvoError::Parameter("population size must be at least 1".into()));
        }
        if i > n {
            return Err(EvoError::Parameter(format!("mutant count {i} exceeds N={n}")));
        }
        if !(r > 0.0) || !r.is_finite() {
            return Err(EvoError::Parameter(format!("fitness r={r} must be positive and finite")));
        }
        Ok(Self { n, i, r })
    }

    pub fn is_absorbing(&self) -> bool {
        self.i == 0 || self.i == self.n
    }

    /// Probability that the reproducer is a mutant: `r i / (r i + N - i)`.
    pub fn p_reproduce(&self) -> f64 {
        let ri = self.r * self.i as f64;
        ri / (ri + (self.n - self.i) as f64)
    }

    /// `(P(i -> i-1), P(i -> i+1))`.
    pub fn transition_probs(&self) -> (f64, f64) {
        let p = self.p_reproduce();
        let n = self.n as f64;
        let i = self.i as f64;
        ((1.0 - p) * i / n, p * (n - i) / n)
    }
}

/// One birth-death event: a fitness-weighted reproducer and a uniformly
/// chosen individual (among the `N` present) that dies.
pub fn moran_step<R: Rng + ?Sized>(s: MoranState, rng: &mut R) -> Result<MoranState, EvoError> {
    if s.is_absorbing() {
        return Err(EvoError::Absorbing { n: s.n, i: s.i });
    }
    let mutant_born = rng.random::<f64>() < s.p_reproduce();
    let mutant_dies = rng.random_range(0..s.n) < s.i;
    let i = match (mutant_born, mutant_dies) {
        (true, false) => s.i + 1,
        (false, true) => s.i - 1,
        _ => s.i,
    };
    Ok(MoranState { i, ..s })
}

/// Probability of absorption at `i = N` from `i0`, by solving the
/// tridiagonal absorbing-chain system.
pub fn fixation_probability_exact(n: usize, r: f64, i0: usize) -> Result<f64, EvoError> {
    MoranState::new(n, i0, r)?;
    if i0 == 0 {
        return Ok(0.0);
    }
    if i0 == n {
        return Ok(1.0);
    }
    // unknowns x_1..x_{N-1}; (u_i + d_i) x_i - d_i x_{i-1} - u_i x_{i+1} = 0
    let m = n - 1;
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for row in 0..m {
        let (d, u) = MoranState { n, i: row + 1, r }.transition_probs();
        diag[row] = u + d;
        if row > 0 {
            lower[row] = -d;
        }
        if row + 1 < m {
            upper[row] = -u;
        } else {
            rhs[row] = u;
        }
    }
    let x = thomas(&lower, &diag, &upper, &rhs);
    Ok(x[i0 - 1])
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    for i in 0..m {
        let denom = diag[i] - if i > 0 { lower[i] * c[i - 1] } else { 0.0 };
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - if i > 0 { lower[i] * d[i - 1] } else { 0.0 }) / denom;
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        x[i] = d[i] - if i + 1 < m { c[i] * x[i + 1] } else { 0.0 };
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixationEstimate {
    pub rate: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub seed: u64,
}

/// Monte Carlo fixation rate; replica `k` uses the stream `(seed, k)`.
pub fn simulate_fixation(
    n: usize,
    r: f64,
    i0: usize,
    replicas: usize,
    seed: u64,
    exec: Execution,
) -> Result<FixationEstimate, EvoError> {
    let start = MoranState::new(n, i0, r)?;
    if replicas == 0 {
        return Err(EvoError::Parameter("need at least one replica".into()));
    }
    let fixed = par::count_range(exec, replicas, |k| {
        let mut rng = stream_rng(seed, k as u64);
        let mut s = start;
        while !s.is_absorbing() {
            s = moran_step(s, &mut rng).expect("state is not absorbing");
        }
        u64::from(s.i == n)
    });
    let rate = fixed as f64 / replicas as f64;
    let stderr = (rate * (1.0 - rate) / replicas as f64).sqrt();
    Ok(FixationEstimate { rate, stderr, replicas, seed })
}

/// A real-valued function on `{0,1}^n`, assignments packed into bits
/// (bit `v` is variable `x_{v+1}`).
pub trait Hypothesis: Sync {
    fn value(&self, x: u64) -> f64;
}

impl<F: Fn(u64) -> f64 + Sync> Hypothesis for F {
    fn value(&self, x: u64) -> f64 {
        self(x)
    }
}

/// Monotone conjunction of the literals in `mask`; `+1` when all hold, else `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Conjunction {
    pub n: usize,
    pub mask: u64,
}

impl Conjunction {
    pub fn new(n: usize, literals: &[usize]) -> Result<Self, EvoError> {
        if n > 63 {
            return Err(EvoError::Parameter(format!("n={n} exceeds 63 variables")));
        }
        let mut mask = 0;
        for &l in literals {
            if l == 0 || l > n {
                return Err(EvoError::Parameter(format!("literal x{l} outside 1..={n}")));
            }
            mask |= 1 << (l - 1);
        }
        Ok(Self { n, mask })
    }

    pub fn empty(n: usize) -> Self {
        Self { n, mask: 0 }
    }

    /// 1-based literal indices.
    pub fn literals(&self) -> Vec<usize> {
        (0..self.n).filter(|v| self.mask >> v & 1 == 1).map(|v| v + 1).collect()
    }

    /// All conjunctions one literal addition or deletion away.
    pub fn neighbors(&self) -> Vec<Conjunction> {
        (0..self.n).map(|v| Conjunction { n: self.n, mask: self.mask ^ (1 << v) }).collect()
    }
}

impl std::fmt::Display for Conjunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let lits = self.literals();
        if lits.is_empty() {
            return write!(f, "true");
        }
        let parts: Vec<String> = lits.iter().map(|l| format!("x{l}")).collect();
        write!(f, "{}", parts.join("&"))
    }
}

impl Hypothesis for Conjunction {
    fn value(&self, x: u64) -> f64 {
        if x & self.mask == self.mask {
            1.0
        } else {
            -1.0
        }
    }
}

/// Pointwise negation of a hypothesis.
pub struct Negated<H>(pub H);

impl<H: Hypothesis> Hypothesis for Negated<H> {
    fn value(&self, x: u64) -> f64 {
        -self.0.value(x)
    }
}

/// Distribution over assignments in `{0,1}^n`.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Uniform { n: usize },
    /// Independent bits with `P(x_v = 1) = p[v]`.
    Product { p: Vec<f64> },
    /// Weight per packed assignment, `2^n` entries.
    Explicit { n: usize, weights: Vec<f64> },
}

/// Largest `n` handled by exhaustive enumeration.
pub const EXACT_MAX_VARS: usize = 24;
const NORMALIZATION_TOL: f64 = 1e-9;

impl Distribution {
    pub fn n(&self) -> usize {
        match self {
            Distribution::Uniform { n } | Distribution::Explicit { n, .. } => *n,
            Distribution::Product { p } => p.len(),
        }
    }

    pub fn validate(&self) -> Result<(), EvoError> {
        match self {
            Distribution::Uniform { n } if *n > 63 => Err(EvoError::Parameter(format!("n={n} exceeds 63"))),
            Distribution::Uniform { .. } => Ok(()),
            Distribution::Product { p } => {
                if p.len() > 63 || p.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
                    return Err(EvoError::Parameter("product marginals must lie in [0, 1], n <= 63".into()));
                }
                Ok(())
            }
            Distribution::Explicit { n, weights } => {
                if *n > EXACT_MAX_VARS || weights.len() != 1 << n {
                    return Err(EvoError::Parameter(format!("explicit distribution needs 2^{n} weights")));
                }
                if weights.iter().any(|&w| !(w >= 0.0)) {
                    return Err(EvoError::Parameter("weights must be nonnegative".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(EvoError::NotNormalized(total));
                }
                Ok(())
            }
        }
    }

    pub fn prob(&self, x: u64) -> f64 {
        match self {
            Distribution::Uniform { n } => 0.5f64.powi(*n as i32),
            Distribution::Product { p } => {
                p.iter().enumerate().map(|(v, &q)| if x >> v & 1 == 1 { q } else { 1.0 - q }).product()
            }
            Distribution::Explicit { weights, .. } => weights[x as usize],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Distribution::Uniform { n } => {
                if *n == 0 {
                    0
                } else {
                    rng.random::<u64>() >> (64 - n)
                }
            }
            Distribution::Product { p } => {
                p.iter().enumerate().fold(0, |acc, (v, &q)| if rng.random::<f64>() < q { acc | 1 << v } else { acc })
            }
            Distribution::Explicit { weights, .. } => {
                let mut u = rng.random::<f64>();
                for (x, &w) in weights.iter().enumerate() {
                    if u < w {
                        return x as u64;
                    }
                    u -= w;
                }
                weights.iter().rposition(|&w| w > 0.0).unwrap_or(0) as u64
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerfMode {
    /// Exhaustive for `n <= 24`, else sampling with the given budget.
    Auto { samples: usize, seed: u64 },
    Exact,
    Sample { samples: usize, seed: u64 },
}

impl Default for PerfMode {
    fn default() -> Self {
        PerfMode::Auto { samples: 100_000, seed: crate::rng::DEFAULT_SEED }
    }
}

/// `Perf_f(r, D) = sum_x f(x) r(x) D(x)`.
pub fn perf(
    r: &dyn Hypothesis,
    f: &dyn Hypothesis,
    d: &Distribution,
    mode: PerfMode,
    exec: Execution,
) -> Result<f64, EvoError> {
    d.validate()?;
    let n = d.n();
    let exact = match mode {
        PerfMode::Exact => {
            if n > EXACT_MAX_VARS {
                return Err(EvoError::Parameter(format!("exact perf limited to n <= {EXACT_MAX_VARS}")));
            }
            true
        }
        PerfMode::Auto { .. } => n <= EXACT_MAX_VARS,
        PerfMode::Sample { .. } => false,
    };
    if exact {
        let total = 1u64 << n;
        const CHUNK: usize = 1 << 14;
        let parts = par::map_chunks(exec, total as usize, CHUNK, |range| {
            range.map(|x| {
                let x = x as u64;
                f.value(x) * r.value(x) * d.prob(x)
            })
            .sum::<f64>()
        });
        return Ok(parts.iter().sum());
    }
    let (samples, seed) = match mode {
        PerfMode::Auto { samples, seed } | PerfMode::Sample { samples, seed } => (samples, seed),
        PerfMode::Exact => unreachable!(),
    };
    if samples == 0 {
        return Err(EvoError::Parameter("sampling needs at least one sample".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let sum: f64 = (0..samples)
        .map(|_| {
            let x = d.sample(&mut rng);
            f.value(x) * r.value(x)
        })
        .sum();
    Ok(sum / samples as f64)
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub generations: usize,
    /// Defaults to `2^-(n+1)`.
    pub tolerance: Option<f64>,
    pub start: Option<Conjunction>,
    pub perf_mode: PerfMode,
    pub exec: Execution,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { generations: 500, tolerance: None, start: None, perf_mode: PerfMode::default(), exec: Execution::Sequential }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjunctionTrace {
    /// Hypothesis at the start of each generation, plus the final one.
    pub hypotheses: Vec<Conjunction>,
    pub perfs: Vec<f64>,
    /// First generation index whose hypothesis has perf 1.
    pub optimum_at: Option<usize>,
    pub tolerance: f64,
}

/// Mutation-selection on monotone conjunctions. Each generation evaluates
/// every single-literal neighbour: a random beneficial one (gain `>= t`) is
/// taken if any exists, else a random neutral one (within `t`), else the
/// hypothesis stays. Stops once perf reaches 1.
pub fn evolve_conjunction<R: Rng + ?Sized>(
    target: &Conjunction,
    d: &Distribution,
    opts: &EvolveOptions,
    rng: &mut R,
) -> Result<ConjunctionTrace, EvoError> {
    if d.n() != target.n {
        return Err(EvoError::Parameter(format!("target has n={}, distribution n={}", target.n, d.n())));
    }
    let t = opts.tolerance.unwrap_or(0.5f64.powi(target.n as i32 + 1));
    if !(t >= 0.0) {
        return Err(EvoError::Parameter(format!("tolerance {t} must be nonnegative")));
    }
    let mut cur = opts.start.unwrap_or(Conjunction::empty(target.n));
    if cur.n != target.n {
        return Err(EvoError::Parameter("start hypothesis has the wrong arity".into()));
    }
    let eval = |h: &Conjunction| perf(h, target, d, opts.perf_mode, opts.exec);
    let mut cur_perf = eval(&cur)?;
    let mut trace = ConjunctionTrace { hypotheses: vec![cur], perfs: vec![cur_perf], optimum_at: None, tolerance: t };
    for g in 0..opts.generations {
        if cur_perf >= 1.0 - 1e-12 {
            trace.optimum_at = Some(g);
            return Ok(trace);
        }
        let mut beneficial = Vec::new();
        let mut neutral = Vec::new();
        for h in cur.neighbors() {
            let p = eval(&h)?;
            if p >= cur_perf + t {
                beneficial.push((h, p));
            } else if p >= cur_perf - t {
                neutral.push((h, p));
            }
        }
        let pool = if beneficial.is_empty() { &neutral } else { &beneficial };
        if !pool.is_empty() {
            let (h, p) = pool[rng.random_range(0..pool.len())];
            cur = h;
            cur_perf = p;
        }
        trace.hypotheses.push(cur);
        trace.perfs.push(cur_perf);
    }
    if cur_perf >= 1.0 - 1e-12 {
        trace.optimum_at = Some(opts.generations);
    }
    Ok(trace)
}

#[derive(Debug, Clone)]
pub struct EvoLoopConfig {
    pub rounds: usize,
    /// Half-width of the multiplicative jitter `1 + eps`, `eps ~ U(-delta, delta)`.
    pub delta: f64,
    /// Extragradient step; defaults to `0.5 / L` of each round's problem.
    pub alpha: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EvoLoopConfig {
    fn default() -> Self {
        Self { rounds: 50, delta: 0.05, alpha: None, tol: 1e-8, max_iter: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionRound {
    pub round: usize,
    /// Producer utilities at this round's equilibrium.
    pub fitness: Vec<f64>,
    pub extinct: usize,
    pub survivor: usize,
    /// Factors applied to the clone's production coefficients.
    pub multipliers: Vec<f64>,
    pub residual: f64,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionTrace {
    pub population: usize,
    pub rounds: Vec<EvolutionRound>,
    /// Set when a round failed to solve; the trace stops there.
    pub diagnostic: Option<String>,
}

impl EvolutionTrace {
    /// `round,fitness_1..fitness_m,extinct,residual`, with 1-based `extinct`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header = vec!["round".to_string()];
        header.extend((1..=self.population).map(|i| format!("fitness_{i}")));
        header.extend(["extinct".to_string(), "residual".to_string()]);
        w.write_record(&header)?;
        for r in &self.rounds {
            let mut row = vec![r.round.to_string()];
            row.extend(r.fitness.iter().map(|f| f.to_string()));
            row.extend([(r.extinct + 1).to_string(), r.residual.to_string()]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean producer fitness per round.
    pub fn mean_fitness(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.fitness.iter().sum::<f64>() / r.fitness.len() as f64).collect()
    }
}

/// Runs the extinction-and-imitation loop on the producers of `model`.
/// Returns the final model with the trace.
pub fn evolutionary_vi_loop(
    model: &NetworkEconomyModel,
    cfg: &EvoLoopConfig,
    seed: u64,
) -> Result<(EvolutionTrace, NetworkEconomyModel), EvoError> {
    let dims = model.dims();
    if dims.m < 2 {
        return Err(EvoError::Parameter("the loop needs at least two service providers".into()));
    }
    if !(cfg.delta >= 0.0 && cfg.delta < 1.0) {
        return Err(EvoError::Parameter(format!("delta {} must lie in [0, 1)", cfg.delta)));
    }
    if model.production.iter().chain(&model.demand_price).any(|f| f.as_poly().is_none()) {
        return Err(EvoError::Parameter("mutation needs polynomial production and demand functions".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let mut model = model.clone();
    let mut trace = EvolutionTrace { population: dims.m, rounds: Vec::new(), diagnostic: None };
    for round in 0..cfg.rounds {
        let p = model.assemble_vi()?;
        let alpha = match cfg.alpha.or_else(|| p.lipschitz().map(|l| 0.5 / l)) {
            Some(a) => a,
            None => return Err(EvoError::Parameter("non-affine model: pass an explicit step size".into())),
        };
        let opts = SolveOptions::default().with_tol(cfg.tol).with_max_iter(cfg.max_iter);
        let sol = match solve_extragradient(&p, alpha, &opts) {
            Ok(s) if s.converged => s,
            Ok(s) => {
                trace.diagnostic =
                    Some(format!("round {round}: no convergence after {} iterations (residual {})", s.iterations, s.residual));
                break;
            }
            Err(e) => {
                trace.diagnostic = Some(format!("round {round}: {e}"));
                break;
            }
        };
        let fitness = model.utilities(&sol.point.map(|c| c.max(0.0)))?.u1;
        let extinct = argmin_first(&fitness);
        let mut survivor = rng.random_range(0..dims.m - 1);
        if survivor >= extinct {
            survivor += 1;
        }
        let multipliers = replace_provider(&mut model, extinct, survivor, cfg.delta, &mut rng);
        trace.rounds.push(EvolutionRound {
            round,
            fitness,
            extinct,
            survivor,
            multipliers,
            residual: sol.residual,
            point: sol.point.iter().copied().collect(),
        });
    }
    Ok((trace, model))
}

fn argmin_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

/// Overwrites provider `dead` with a relabelled copy of `src`: production
/// cost (coefficients jittered) and demand prices.
fn replace_provider<R: Rng + ?Sized>(
    model: &mut NetworkEconomyModel,
    dead: usize,
    src: usize,
    delta: f64,
    rng: &mut R,
) -> Vec<f64> {
    let dims = model.dims();
    let mut multipliers = Vec::new();
    let base = model.production[src].as_poly().expect("checked polynomial").swap_provider(src, dead);
    let mutated = base.scale_coefficients(|| {
        let m = if delta > 0.0 { 1.0 + rng.random_range(-delta..delta) } else { 1.0 };
        multipliers.push(m);
        m
    });
    model.production[dead] = ScalarFn::Poly(mutated);
    for j in 0..dims.n {
        for k in 0..dims.o {
            let from = model.demand_price[dims.cell(src, j, k)].as_poly().expect("checked polynomial");
            model.demand_price[dims.cell(dead, j, k)] = ScalarFn::Poly(from.swap_provider(src, dead));
        }
    }
    multipliers
}

/// Fraction of consecutive rounds in which mean fitness did not decrease
/// (with slack `tol`).
pub fn nondecreasing_fraction(means: &[f64], tol: f64) -> f64 {
    if means.len() < 2 {
        return 1.0;
    }
    let ok = means.windows(2).filter(|w| w[1] >= w[0] - tol).count();
    ok as f64 / (means.len() - 1) as f64
}
