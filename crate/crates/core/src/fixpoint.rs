//! Metric coinduction on `R^n` with the Euclidean metric.
//!
//! A [`ContractiveMap`] wraps a self-map `H`. [`iterate_to_fixpoint`] runs
//! `x_{k+1} = H(x_k)` until the step `d(x, H(x))` drops below a tolerance,
//! and [`check_closed_property_preserved`] turns the coinduction rule
//! ("if `H` preserves a closed property, so does its fixed point") into a
//! falsifiable runtime check. Property membership is checked pointwise on
//! iterates.
//!
//! Wrapped maps must be side-effect free; they may be evaluated from several
//! threads at once.

use nalgebra::DVector;
use thiserror::Error;

/// Steps larger than this abort the iteration as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Slack allowed when comparing consecutive steps against a claimed modulus.
pub const MODULUS_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixpointError {
    #[error("iteration diverged at step {iteration}: residual {residual}")]
    Diverged { iteration: usize, residual: f64 },
    #[error("dimension mismatch: map expects {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("all sample pairs coincide; modulus undefined")]
    DegenerateSamples,
}

/// A self-map on `R^dimension` with an optional claimed contraction modulus.
pub struct ContractiveMap<F> {
    map: F,
    dimension: usize,
    modulus: Option<f64>,
    warmup: usize,
}

impl<F> ContractiveMap<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    pub fn new(dimension: usize, map: F) -> Self {
        Self { map, dimension, modulus: None, warmup: 0 }
    }

    /// Claims `d(H(u), H(v)) <= c d(u, v)` with `c` in `[0, 1)`.
    pub fn with_modulus(mut self, c: f64) -> Result<Self, FixpointError> {
        if !(0.0..1.0).contains(&c) {
            return Err(FixpointError::Parameter(format!("modulus {c} not in [0, 1)")));
        }
        self.modulus = Some(c);
        Ok(self)
    }

    /// Number of initial iterations exempt from the modulus check, for
    /// eventually contractive maps.
    pub fn with_warmup(mut self, warmup: usize) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn modulus(&self) -> Option<f64> {
        self.modulus
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.map)(x)
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), FixpointError> {
        if x.len() != self.dimension {
            return Err(FixpointError::Dimension { expected: self.dimension, actual: x.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixpointResult {
    pub point: DVector<f64>,
    pub iterations: usize,
    /// Stopping residual at `point` (`d(x, H(x))` unless a custom residual
    /// was supplied).
    pub final_residual: f64,
    pub converged: bool,
    /// Residual at every visited iterate, `residuals[k]` belonging to `x_k`.
    pub residuals: Vec<f64>,
    /// Euclidean step `d(x_{k+1}, x_k)` for every step taken.
    pub steps: Vec<f64>,
    /// First step index (after warm-up) at which the claimed modulus was
    /// exceeded, if any.
    pub contraction_violation: Option<usize>,
}

/// Iterates `x_{k+1} = H(x_k)` until `d(x_k, H(x_k)) <= tol`.
///
/// On convergence the returned point is `H(x_k)`, which lies within
/// `c tol / (1 - c)` of the fixed point for a map of modulus `c`.
/// Returns `converged = false` after `max_iter` steps without reaching the
/// tolerance. A step that is non-finite or larger than
/// [`DIVERGENCE_THRESHOLD`] is reported as [`FixpointError::Diverged`].
pub fn iterate_to_fixpoint<F>(
    map: &ContractiveMap<F>,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<FixpointResult, FixpointError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut res = iterate_with_residual(map, x0, tol, max_iter, |x, hx| (x - hx).norm())?;
    if res.converged {
        res.point = map.apply(&res.point);
    }
    Ok(res)
}

/// Like [`iterate_to_fixpoint`], but stops on a caller-supplied residual
/// `residual(x_k, H(x_k))` instead of the raw step length.
pub fn iterate_with_residual<F, R>(
    map: &ContractiveMap<F>,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
    mut residual: R,
) -> Result<FixpointResult, FixpointError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    R: FnMut(&DVector<f64>, &DVector<f64>) -> f64,
{
    map.check_dim(x0)?;
    if !(tol > 0.0) {
        return Err(FixpointError::Parameter(format!("tolerance {tol} must be positive")));
    }
    let mut x = x0.clone();
    let mut residuals = Vec::new();
    let mut steps: Vec<f64> = Vec::new();
    let mut violation = None;
    let mut k = 0;
    loop {
        let hx = map.apply(&x);
        map.check_dim(&hx)?;
        let step = (&x - &hx).norm();
        if !step.is_finite() || hx.iter().any(|v| !v.is_finite()) || step > DIVERGENCE_THRESHOLD {
            return Err(FixpointError::Diverged { iteration: k, residual: step });
        }
        let r = residual(&x, &hx);
        residuals.push(r);
        if r <= tol {
            return Ok(FixpointResult {
                point: x,
                iterations: k,
                final_residual: r,
                converged: true,
                residuals,
                steps,
                contraction_violation: violation,
            });
        }
        if k >= max_iter {
            return Ok(FixpointResult {
                point: x,
                iterations: k,
                final_residual: r,
                converged: false,
                residuals,
                steps,
                contraction_violation: violation,
            });
        }
        if let (Some(c), Some(&prev)) = (map.modulus, steps.last()) {
            if violation.is_none() && k > map.warmup && step > c * prev + MODULUS_SLACK {
                violation = Some(k);
            }
        }
        steps.push(step);
        x = hx;
        k += 1;
    }
}

/// Outcome of [`check_closed_property_preserved`].
#[derive(Debug, Clone, PartialEq)]
pub struct PreservationReport {
    pub preserved: bool,
    /// Index `k` of the first iterate `x_k` outside the property.
    pub first_violation: Option<usize>,
    pub violating_point: Option<DVector<f64>>,
    pub final_point: DVector<f64>,
    pub final_member: bool,
}

/// Runs `steps` iterations from `x0` and reports whether every iterate stays
/// inside `membership`.
pub fn check_closed_property_preserved<F, P>(
    map: &ContractiveMap<F>,
    membership: P,
    x0: &DVector<f64>,
    steps: usize,
) -> Result<PreservationReport, FixpointError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    P: Fn(&DVector<f64>) -> bool,
{
    map.check_dim(x0)?;
    if !membership(x0) {
        return Err(FixpointError::Precondition("initial point is outside the property".into()));
    }
    let mut x = x0.clone();
    let mut first = None;
    let mut bad_point = None;
    for k in 1..=steps {
        x = map.apply(&x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FixpointError::Diverged { iteration: k, residual: f64::INFINITY });
        }
        if first.is_none() && !membership(&x) {
            first = Some(k);
            bad_point = Some(x.clone());
        }
    }
    let final_member = membership(&x);
    Ok(PreservationReport {
        preserved: first.is_none(),
        first_violation: first,
        violating_point: bad_point,
        final_point: x,
        final_member,
    })
}

/// Largest observed ratio `d(H(u), H(v)) / d(u, v)` over the given pairs.
/// Coincident pairs are skipped.
pub fn estimate_modulus<F>(
    map: &ContractiveMap<F>,
    pairs: &[(DVector<f64>, DVector<f64>)],
) -> Result<f64, FixpointError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut best: Option<f64> = None;
    for (u, v) in pairs {
        map.check_dim(u)?;
        map.check_dim(v)?;
        let d = (u - v).norm();
        if d == 0.0 {
            continue;
        }
        let ratio = (map.apply(u) - map.apply(v)).norm() / d;
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or(FixpointError::DegenerateSamples)
}

/// A-priori Banach bound `c^k d(x_1, x_0) / (1 - c)` on `d(x_k, x*)`.
pub fn a_priori_bound(modulus: f64, first_step: f64, k: usize) -> f64 {
    modulus.powi(k as i32) * first_step / (1.0 - modulus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn halving_converges_to_zero() {
        let map = ContractiveMap::new(1, |x: &DVector<f64>| x / 2.0).with_modulus(0.5).unwrap();
        let res = iterate_to_fixpoint(&map, &v(&[1.0]), 1e-12, 1000).unwrap();
        assert!(res.converged);
        assert!(res.point[0].abs() < 1e-11);
        assert!(res.final_residual <= 1e-12);
        assert_eq!(res.contraction_violation, None);
    }

    #[test]
    fn identity_is_fixed_immediately() {
        let map = ContractiveMap::new(2, |x: &DVector<f64>| x.clone());
        let x0 = v(&[3.0, -4.0]);
        let res = iterate_to_fixpoint(&map, &x0, 1e-9, 10).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.point, x0);
    }

    #[test]
    fn cosine_fixed_point_matches_bisection() {
        // bisection oracle on cos(x) - x over [0, 1]
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid.cos() - mid > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        let map = ContractiveMap::new(1, |x: &DVector<f64>| x.map(f64::cos));
        let res = iterate_to_fixpoint(&map, &v(&[1.0]), 1e-13, 10_000).unwrap();
        assert!(res.converged);
        assert!((res.point[0] - root).abs() < 1e-12);
    }

    #[test]
    fn divergence_names_iteration() {
        let map = ContractiveMap::new(1, |x: &DVector<f64>| x * 1e7);
        let err = iterate_to_fixpoint(&map, &v(&[1.0]), 1e-9, 100).unwrap_err();
        assert!(matches!(err, FixpointError::Diverged { iteration: 1, .. }), "{err:?}");
        let nan = ContractiveMap::new(1, |_: &DVector<f64>| v(&[f64::NAN]));
        assert!(matches!(
            iterate_to_fixpoint(&nan, &v(&[1.0]), 1e-9, 100),
            Err(FixpointError::Diverged { iteration: 0, .. })
        ));
    }

    #[test]
    fn non_convergence_is_flagged() {
        let map = ContractiveMap::new(1, |x: &DVector<f64>| x * 0.999);
        let res = iterate_to_fixpoint(&map, &v(&[1.0]), 1e-12, 5).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 5);
    }

    #[test]
    fn claimed_modulus_violation_is_detected() {
        // actual modulus 0.9, claimed 0.5
        let map = ContractiveMap::new(1, |x: &DVector<f64>| x * 0.9).with_modulus(0.5).unwrap();
        let res = iterate_to_fixpoint(&map, &v(&[1.0]), 1e-6, 1000).unwrap();
        assert_eq!(res.contraction_violation, Some(1));
        let warm = ContractiveMap::new(1, |x: &DVector<f64>| x * 0.9)
            .with_modulus(0.5)
            .unwrap()
            .with_warmup(usize::MAX);
        let res = iterate_to_fixpoint(&warm, &v(&[1.0]), 1e-6, 1000).unwrap();
        assert_eq!(res.contraction_violation, None);
        assert!(ContractiveMap::new(1, |x: &DVector<f64>| x.clone()).with_modulus(1.0).is_err());
    }

    #[test]
    fn preservation_reports() {
        let half = ContractiveMap::new(2, |x: &DVector<f64>| x / 2.0);
        let orthant = |x: &DVector<f64>| x.iter().all(|&c| c >= 0.0);
        let rep = check_closed_property_preserved(&half, orthant, &v(&[3.0, 1.0]), 60).unwrap();
        assert!(rep.preserved && rep.final_member);

        let shrink = ContractiveMap::new(2, |x: &DVector<f64>| x * 0.9);
        let ball = |x: &DVector<f64>| x.norm() <= 1.0;
        let rep = check_closed_property_preserved(&shrink, ball, &v(&[0.6, 0.8]), 50).unwrap();
        assert!(rep.preserved);

        // 2 -> 1 -> 0.5 leaves {x >= 1} at the second iterate
        let half1 = ContractiveMap::new(1, |x: &DVector<f64>| x / 2.0);
        let above_one = |x: &DVector<f64>| x[0] >= 1.0;
        let rep = check_closed_property_preserved(&half1, above_one, &v(&[2.0]), 5).unwrap();
        assert!(!rep.preserved);
        assert_eq!(rep.first_violation, Some(2));
        assert_eq!(rep.violating_point.unwrap()[0], 0.5);

        let err = check_closed_property_preserved(&half1, above_one, &v(&[0.5]), 5).unwrap_err();
        assert!(matches!(err, FixpointError::Precondition(_)));
    }

    #[test]
    fn modulus_estimates() {
        let half = ContractiveMap::new(1, |x: &DVector<f64>| x / 2.0);
        assert_eq!(estimate_modulus(&half, &[(v(&[0.0]), v(&[1.0]))]).unwrap(), 0.5);
        let id = ContractiveMap::new(1, |x: &DVector<f64>| x.clone());
        assert_eq!(estimate_modulus(&id, &[(v(&[0.0]), v(&[1.0]))]).unwrap(), 1.0);
        let constant = ContractiveMap::new(1, |_: &DVector<f64>| v(&[4.0]));
        assert_eq!(estimate_modulus(&constant, &[(v(&[0.0]), v(&[1.0]))]).unwrap(), 0.0);
        assert_eq!(
            estimate_modulus(&half, &[(v(&[1.0]), v(&[1.0]))]),
            Err(FixpointError::DegenerateSamples)
        );
        // coincident pairs are skipped, not fatal
        let est = estimate_modulus(&half, &[(v(&[1.0]), v(&[1.0])), (v(&[0.0]), v(&[2.0]))]).unwrap();
        assert_eq!(est, 0.5);
    }

    #[test]
    fn diagonal_map_modulus_bounded_by_spectral_norm() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let map = ContractiveMap::new(2, |x: &DVector<f64>| v(&[0.3 * x[0], 0.8 * x[1]]));
        let pairs: Vec<_> = (0..200)
            .map(|_| {
                let a = v(&[rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]);
                let b = v(&[rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]);
                (a, b)
            })
            .collect();
        let c = estimate_modulus(&map, &pairs).unwrap();
        assert!(c <= 0.8 + 1e-12 && c > 0.3);
    }
}
