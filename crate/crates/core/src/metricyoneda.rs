//! Generalized (Lawvere) metric spaces: `d >= 0`, `d(x, x) = 0`, triangle
//! inequality, with asymmetry and infinite distances allowed. The Yoneda
//! embedding `x -> d(-, x)` into presheaves `[0, inf]^{X^op}` under the
//! distance `sup_y trunc(psi(y) - phi(y))` is an isometry; [`check_isometry`]
//! verifies this on a concrete space.

use std::cmp::Ordering;
use std::fmt::Debug;

use num_rational::Ratio;
use rand::Rng;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("invalid space: {0}")]
    Invalid(String),
    #[error("space violates the metric axioms: {0:?}")]
    Axioms(Vec<String>),
    #[error("unknown point {0}")]
    Point(usize),
}

/// Scalar type of finite distances.
pub trait Weight: Clone + PartialOrd + Debug + Send + Sync + 'static {
    fn zero() -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    /// Slack for comparisons: `1e-12` for floats, exact for rationals.
    fn tolerance() -> Self;
    fn to_f64(&self) -> f64;
    /// `2^-n`, if representable.
    fn pow2_neg(n: u32) -> Option<Self>;
    fn from_json(v: &Value) -> Option<Self>;
    fn to_json(&self) -> Value;
}

impl Weight for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn tolerance() -> Self {
        1e-12
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn pow2_neg(n: u32) -> Option<Self> {
        Some(0.5f64.powi(n as i32))
    }
    fn from_json(v: &Value) -> Option<Self> {
        v.as_f64().filter(|x| x.is_finite())
    }
    fn to_json(&self) -> Value {
        Value::from(*self)
    }
}

impl Weight for Ratio<i64> {
    fn zero() -> Self {
        Ratio::from_integer(0)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn tolerance() -> Self {
        Ratio::from_integer(0)
    }
    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
    fn pow2_neg(n: u32) -> Option<Self> {
        (n < 62).then(|| Ratio::new(1, 1i64 << n))
    }
    fn from_json(v: &Value) -> Option<Self> {
        match v {
            Value::Number(n) => n.as_i64().map(Ratio::from_integer),
            Value::String(s) => {
                let (p, q) = s.split_once('/')?;
                let q: i64 = q.trim().parse().ok()?;
                (q != 0).then_some(())?;
                Some(Ratio::new(p.trim().parse().ok()?, q))
            }
            _ => None,
        }
    }
    fn to_json(&self) -> Value {
        if *self.denom() == 1 {
            Value::from(*self.numer())
        } else {
            Value::from(format!("{}/{}", self.numer(), self.denom()))
        }
    }
}

/// `[0, inf]` over a finite scalar type.
#[derive(Debug, Clone, PartialEq)]
pub enum Ext<T> {
    Finite(T),
    Infinite,
}

impl<T: Weight> Ext<T> {
    pub fn zero() -> Self {
        Ext::Finite(T::zero())
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Ext::Infinite)
    }

    /// `inf` absorbs.
    pub fn add(&self, other: &Self) -> Self {
        match (self, other) {
            (Ext::Finite(a), Ext::Finite(b)) => Ext::Finite(a.add(b)),
            _ => Ext::Infinite,
        }
    }

    /// `max(self - other, 0)` with `inf - x = inf` (finite `x`),
    /// `inf - inf = 0` and `x - inf = 0`.
    pub fn trunc_sub(&self, other: &Self) -> Self {
        match (self, other) {
            (Ext::Infinite, Ext::Finite(_)) => Ext::Infinite,
            (Ext::Infinite, Ext::Infinite) | (Ext::Finite(_), Ext::Infinite) => Ext::zero(),
            (Ext::Finite(a), Ext::Finite(b)) => {
                if a > b {
                    Ext::Finite(a.sub(b))
                } else {
                    Ext::zero()
                }
            }
        }
    }

    pub fn max(self, other: Self) -> Self {
        if ext_cmp(&self, &other) == Ordering::Less {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if ext_cmp(&other, &self) == Ordering::Less {
            other
        } else {
            self
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Ext::Finite(a) => a.to_f64(),
            Ext::Infinite => f64::INFINITY,
        }
    }

    /// `|a - b|` as a float; `0` for two infinities, `inf` for one.
    pub fn deviation(&self, other: &Self) -> f64 {
        match (self, other) {
            (Ext::Infinite, Ext::Infinite) => 0.0,
            (Ext::Finite(a), Ext::Finite(b)) => (a.to_f64() - b.to_f64()).abs(),
            _ => f64::INFINITY,
        }
    }
}

fn ext_cmp<T: Weight>(a: &Ext<T>, b: &Ext<T>) -> Ordering {
    match (a, b) {
        (Ext::Infinite, Ext::Infinite) => Ordering::Equal,
        (Ext::Infinite, _) => Ordering::Greater,
        (_, Ext::Infinite) => Ordering::Less,
        (Ext::Finite(x), Ext::Finite(y)) => x.partial_cmp(y).unwrap_or(Ordering::Equal),
    }
}

/// `a <= b + slack`.
fn ext_le<T: Weight>(a: &Ext<T>, b: &Ext<T>) -> bool {
    match (a, b) {
        (_, Ext::Infinite) => true,
        (Ext::Infinite, Ext::Finite(_)) => false,
        (Ext::Finite(x), Ext::Finite(y)) => *x <= y.add(&T::tolerance()),
    }
}

/// Finite space with named points and distance matrix `d[x][y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenMetricSpace<T> {
    pub points: Vec<String>,
    pub d: Vec<Vec<Ext<T>>>,
}

/// One failed axiom, with the indices involved.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    SelfDistance { x: usize, value: f64 },
    Negative { x: usize, y: usize, value: f64 },
    Triangle { x: usize, y: usize, z: usize, direct: f64, via: f64 },
}

impl Violation {
    pub fn describe<T>(&self, s: &GenMetricSpace<T>) -> String {
        let p = |i: usize| s.points[i].as_str();
        match *self {
            Violation::SelfDistance { x, value } => format!("d({0},{0}) = {value} != 0", p(x)),
            Violation::Negative { x, y, value } => format!("d({},{}) = {value} < 0", p(x), p(y)),
            Violation::Triangle { x, y, z, direct, via } => {
                format!("d({},{}) = {direct} > d({},{}) + d({},{}) = {via}", p(x), p(z), p(x), p(y), p(y), p(z))
            }
        }
    }
}

/// `y(x) = d(-, x)` as a vector over the points.
#[derive(Debug, Clone, PartialEq)]
pub struct Presheaf<T> {
    pub values: Vec<Ext<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsometryReport {
    pub holds: bool,
    /// Ordered pair with the largest `|d(x,x') - dist(y(x), y(x'))|`.
    pub worst: Option<(usize, usize)>,
    pub max_deviation: f64,
}

impl<T: Weight> GenMetricSpace<T> {
    /// Checks shape only; see [`Self::validate`] for the axioms.
    pub fn new(points: Vec<String>, d: Vec<Vec<Ext<T>>>) -> Result<Self, MetricError> {
        let n = points.len();
        if d.len() != n || d.iter().any(|r| r.len() != n) {
            return Err(MetricError::Invalid(format!("distance matrix must be {n}x{n}")));
        }
        Ok(Self { points, d })
    }

    /// Points named `p0..`.
    pub fn from_matrix(d: Vec<Vec<Ext<T>>>) -> Result<Self, MetricError> {
        Self::new((0..d.len()).map(|i| format!("p{i}")).collect(), d)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dist(&self, x: usize, y: usize) -> &Ext<T> {
        &self.d[x][y]
    }

    /// All axiom violations; empty iff the space is a generalized metric.
    pub fn validate(&self) -> Vec<Violation> {
        let n = self.len();
        let mut out = Vec::new();
        for x in 0..n {
            if let Ext::Finite(v) = &self.d[x][x] {
                if *v > T::tolerance() || v.add(&T::tolerance()) < T::zero() {
                    out.push(Violation::SelfDistance { x, value: v.to_f64() });
                }
            } else {
                out.push(Violation::SelfDistance { x, value: f64::INFINITY });
            }
            for y in 0..n {
                if let Ext::Finite(v) = &self.d[x][y] {
                    if v.add(&T::tolerance()) < T::zero() {
                        out.push(Violation::Negative { x, y, value: v.to_f64() });
                    }
                }
            }
        }
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let via = self.d[x][y].add(&self.d[y][z]);
                    if !ext_le(&self.d[x][z], &via) {
                        out.push(Violation::Triangle { x, y, z, direct: self.d[x][z].to_f64(), via: via.to_f64() });
                    }
                }
            }
        }
        out
    }

    fn require_valid(&self) -> Result<(), MetricError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(MetricError::Axioms(v.iter().take(5).map(|x| x.describe(self)).collect()))
        }
    }

    pub fn yoneda_embed(&self, x: usize) -> Result<Presheaf<T>, MetricError> {
        if x >= self.len() {
            return Err(MetricError::Point(x));
        }
        Ok(Presheaf { values: (0..self.len()).map(|y| self.d[y][x].clone()).collect() })
    }

    /// `d(x, x') = 0 = d(x', x)`.
    pub fn weakly_isomorphic(&self, x: usize, x2: usize) -> Result<bool, MetricError> {
        if x >= self.len() || x2 >= self.len() {
            return Err(MetricError::Point(x.max(x2)));
        }
        self.require_valid()?;
        let zero = |v: &Ext<T>| ext_le(v, &Ext::zero());
        Ok(zero(&self.d[x][x2]) && zero(&self.d[x2][x]))
    }

    /// Compares `d(x, x')` with the presheaf distance of the embeddings for
    /// every ordered pair, without validating first.
    pub fn isometry_deviation(&self) -> IsometryReport {
        let n = self.len();
        let embeds: Vec<Presheaf<T>> = (0..n).map(|x| self.yoneda_embed(x).expect("in range")).collect();
        let mut worst = None;
        let mut max_deviation = 0.0;
        for x in 0..n {
            for x2 in 0..n {
                let dev = self.d[x][x2].deviation(&presheaf_distance(&embeds[x], &embeds[x2]));
                if worst.is_none() || dev > max_deviation {
                    max_deviation = dev;
                    worst = Some((x, x2));
                }
            }
        }
        let tol = if T::tolerance().to_f64() == 0.0 { 0.0 } else { 1e-9 };
        IsometryReport { holds: max_deviation <= tol, worst, max_deviation }
    }

    /// Validates, then checks `d(x, x') = dist(y(x), y(x'))` for all pairs.
    pub fn check_isometry(&self) -> Result<IsometryReport, MetricError> {
        self.require_valid()?;
        Ok(self.isometry_deviation())
    }

    /// Floyd-Warshall in the min-plus semiring; repairs the triangle inequality.
    pub fn min_plus_closure(&mut self) {
        let n = self.len();
        for y in 0..n {
            for x in 0..n {
                for z in 0..n {
                    let via = self.d[x][y].add(&self.d[y][z]);
                    if ext_cmp(&via, &self.d[x][z]) == Ordering::Less {
                        self.d[x][z] = via;
                    }
                }
            }
        }
    }

    /// `{"points": [...], "d": [[...]], "inf": "INF"}`; the sentinel
    /// defaults to `"INF"`.
    pub fn from_json(v: &Value) -> Result<Self, MetricError> {
        let err = |m: String| MetricError::Invalid(m);
        let sentinel = match v.get("inf") {
            None => "INF".to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(err("\"inf\" must be a string".into())),
        };
        let points: Vec<String> = v
            .get("points")
            .and_then(Value::as_array)
            .ok_or_else(|| err("missing array \"points\"".into()))?
            .iter()
            .map(|p| match p {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                _ => Err(err("points must be strings".into())),
            })
            .collect::<Result<_, _>>()?;
        let rows = v.get("d").and_then(Value::as_array).ok_or_else(|| err("missing array \"d\"".into()))?;
        let d = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.as_array()
                    .ok_or_else(|| err(format!("d[{i}] must be an array")))?
                    .iter()
                    .enumerate()
                    .map(|(j, x)| match x {
                        Value::String(s) if *s == sentinel => Ok(Ext::Infinite),
                        other => T::from_json(other)
                            .map(Ext::Finite)
                            .ok_or_else(|| err(format!("d[{i}][{j}] = {other} is not a distance"))),
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(points, d)
    }

    pub fn to_json(&self) -> Value {
        let d: Vec<Vec<Value>> = self
            .d
            .iter()
            .map(|r| {
                r.iter()
                    .map(|x| match x {
                        Ext::Finite(v) => v.to_json(),
                        Ext::Infinite => Value::from("INF"),
                    })
                    .collect()
            })
            .collect();
        serde_json::json!({ "points": self.points, "d": d, "inf": "INF" })
    }
}

/// `sup_y trunc(psi(y) - phi(y))`.
pub fn presheaf_distance<T: Weight>(phi: &Presheaf<T>, psi: &Presheaf<T>) -> Ext<T> {
    phi.values
        .iter()
        .zip(&psi.values)
        .map(|(a, b)| b.trunc_sub(a))
        .fold(Ext::zero(), Ext::max)
}

/// Preorder as a space: `d(p, q) = 0` if `p <= q`, else `inf`. `leq`
/// lists the pairs `(p, q)` with `p <= q`; it must be reflexive and
/// transitive.
pub fn preorder_space<T: Weight>(points: Vec<String>, leq: &[(usize, usize)]) -> Result<GenMetricSpace<T>, MetricError> {
    let n = points.len();
    let mut rel = vec![vec![false; n]; n];
    for &(p, q) in leq {
        if p >= n || q >= n {
            return Err(MetricError::Point(p.max(q)));
        }
        rel[p][q] = true;
    }
    if let Some(p) = (0..n).find(|&p| !rel[p][p]) {
        return Err(MetricError::Invalid(format!("preorder is not reflexive at {}", points[p])));
    }
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                if rel[p][q] && rel[q][r] && !rel[p][r] {
                    return Err(MetricError::Invalid(format!(
                        "preorder is not transitive: {} <= {} <= {}",
                        points[p], points[q], points[r]
                    )));
                }
            }
        }
    }
    let d = rel.iter().map(|row| row.iter().map(|&le| if le { Ext::zero() } else { Ext::Infinite }).collect()).collect();
    GenMetricSpace::new(points, d)
}

/// `d(u, v) = 0` if `u` is a prefix of `v`, else `2^-n` with `n` the
/// length of the longest common prefix (in chars).
pub fn string_prefix_space<T: Weight>(strings: &[&str]) -> Result<GenMetricSpace<T>, MetricError> {
    let chars: Vec<Vec<char>> = strings.iter().map(|s| s.chars().collect()).collect();
    let mut d = Vec::with_capacity(strings.len());
    for u in &chars {
        let mut row = Vec::with_capacity(strings.len());
        for v in &chars {
            if v.starts_with(u) {
                row.push(Ext::zero());
            } else {
                let lcp = u.iter().zip(v).take_while(|(a, b)| a == b).count();
                let w = T::pow2_neg(lcp as u32)
                    .ok_or_else(|| MetricError::Invalid(format!("2^-{lcp} is not representable")))?;
                row.push(Ext::Finite(w));
            }
        }
        d.push(row);
    }
    GenMetricSpace::new(strings.iter().map(|s| s.to_string()).collect(), d)
}

/// `[0, inf)` restricted to `values`: `d(u, v) = 0` if `u >= v`, else `v - u`.
pub fn nonneg_real_space<T: Weight>(values: &[T]) -> Result<GenMetricSpace<T>, MetricError> {
    if let Some(v) = values.iter().find(|v| **v < T::zero()) {
        return Err(MetricError::Invalid(format!("value {v:?} is negative")));
    }
    let d = values
        .iter()
        .map(|u| values.iter().map(|v| if u >= v { Ext::zero() } else { Ext::Finite(v.sub(u)) }).collect())
        .collect();
    GenMetricSpace::new(values.iter().map(|v| format!("{:?}", v.to_f64())).collect(), d)
}

/// Subsets of `base` with `d(V, W) = sup_{v in V} min_{w in W} d(v, w)`
/// (`0` for empty `V`, `inf` for empty `W` and nonempty `V`).
pub fn hausdorff_powerset_space<T: Weight>(
    base: &GenMetricSpace<T>,
    subsets: &[Vec<usize>],
) -> Result<GenMetricSpace<T>, MetricError> {
    for s in subsets {
        if let Some(&p) = s.iter().find(|&&p| p >= base.len()) {
            return Err(MetricError::Point(p));
        }
    }
    let d = subsets
        .iter()
        .map(|v| {
            subsets
                .iter()
                .map(|w| {
                    v.iter()
                        .map(|&a| w.iter().map(|&b| base.d[a][b].clone()).fold(Ext::Infinite, Ext::min))
                        .fold(Ext::zero(), Ext::max)
                })
                .collect()
        })
        .collect();
    let names = subsets
        .iter()
        .map(|s| format!("{{{}}}", s.iter().map(|&p| base.points[p].as_str()).collect::<Vec<_>>().join(",")))
        .collect();
    GenMetricSpace::new(names, d)
}

/// Random valid float space: entries `U(0, max)`, each off-diagonal entry
/// infinite with probability `p_inf`, then min-plus closed.
pub fn random_space<R: Rng + ?Sized>(n: usize, max: f64, p_inf: f64, rng: &mut R) -> GenMetricSpace<f64> {
    let d = (0..n)
        .map(|x| {
            (0..n)
                .map(|y| {
                    if x == y {
                        Ext::Finite(0.0)
                    } else if rng.random_bool(p_inf) {
                        Ext::Infinite
                    } else {
                        Ext::Finite(rng.random_range(0.0..max))
                    }
                })
                .collect()
        })
        .collect();
    let mut s = GenMetricSpace::from_matrix(d).expect("square");
    s.min_plus_closure();
    s
}

/// Random valid rational space with entries `k / den`, `k < max_num`.
pub fn random_rational_space<R: Rng + ?Sized>(
    n: usize,
    max_num: i64,
    den: i64,
    p_inf: f64,
    rng: &mut R,
) -> GenMetricSpace<Ratio<i64>> {
    let d = (0..n)
        .map(|x| {
            (0..n)
                .map(|y| {
                    if x == y {
                        Ext::zero()
                    } else if rng.random_bool(p_inf) {
                        Ext::Infinite
                    } else {
                        Ext::Finite(Ratio::new(rng.random_range(0..max_num), den))
                    }
                })
                .collect()
        })
        .collect();
    let mut s = GenMetricSpace::from_matrix(d).expect("square");
    s.min_plus_closure();
    s
}
