//! Three-tier network economy: service providers `i in 0..m`, network
//! providers `j in 0..n` and demand markets `k in 0..o`.
//!
//! The decision vector is `X = (Q, q, pi)` flattened block by block, each
//! block in lexicographic `(i, j, k)` order. Cost and price functions are
//! either separable polynomials (analytic derivatives of every order) or
//! closures with an optional gradient; missing derivatives fall back to
//! central differences with step [`FD_STEP`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vi::{finite_difference_jacobian, FeasibleSet, VectorField, ViProblem};

pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeteconError {
    #[error("invalid model: {0}")]
    Model(String),
    #[error("point has {actual} coordinates, model needs {expected}")]
    Dimension { expected: usize, actual: usize },
    #[error("coordinate {index} is negative ({value})")]
    Negative { index: usize, value: f64 },
    #[error("cannot parse variable {0:?}")]
    Variable(String),
    #[error(transparent)]
    Vi(#[from] crate::vi::ViError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub m: usize,
    pub n: usize,
    pub o: usize,
}

impl Dims {
    pub fn new(m: usize, n: usize, o: usize) -> Self {
        Self { m, n, o }
    }

    /// Number of `(i, j, k)` triples.
    pub fn triples(&self) -> usize {
        self.m * self.n * self.o
    }

    pub fn dim(&self) -> usize {
        3 * self.triples()
    }

    /// Position of `(i, j, k)` inside one block.
    pub fn cell(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.o + k
    }

    pub fn index(&self, var: VarRef) -> usize {
        let base = match var.kind {
            VarKind::Quantity => 0,
            VarKind::Quality => self.triples(),
            VarKind::Price => 2 * self.triples(),
        };
        base + self.cell(var.i, var.j, var.k)
    }

    fn contains(&self, var: VarRef) -> bool {
        var.i < self.m && var.j < self.n && var.k < self.o
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    /// `Q_ijk`, service quantity.
    Quantity,
    /// `q_ijk`, quality level.
    Quality,
    /// `pi_ijk`, network price.
    Price,
}

/// A decision variable with 0-based indices. Textual form is 1-based:
/// `Q[1,1,1]`, `q[2,1,1]`, `pi[1,1,2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarRef {
    pub kind: VarKind,
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl VarRef {
    pub fn quantity(i: usize, j: usize, k: usize) -> Self {
        Self { kind: VarKind::Quantity, i, j, k }
    }
    pub fn quality(i: usize, j: usize, k: usize) -> Self {
        Self { kind: VarKind::Quality, i, j, k }
    }
    pub fn price(i: usize, j: usize, k: usize) -> Self {
        Self { kind: VarKind::Price, i, j, k }
    }

    pub fn parse(s: &str) -> Result<Self, NeteconError> {
        let err = || NeteconError::Variable(s.to_string());
        let t = s.trim();
        let open = t.find('[').ok_or_else(err)?;
        let kind = match &t[..open] {
            "Q" => VarKind::Quantity,
            "q" => VarKind::Quality,
            "pi" | "π" => VarKind::Price,
            _ => return Err(err()),
        };
        let inner = t[open + 1..].strip_suffix(']').ok_or_else(err)?;
        let idx: Vec<usize> = inner
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|_| err()))
            .collect::<Result<_, _>>()?;
        match idx[..] {
            [i, j, k] if i > 0 && j > 0 && k > 0 => Ok(Self { kind, i: i - 1, j: j - 1, k: k - 1 }),
            _ => Err(err()),
        }
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            VarKind::Quantity => "Q",
            VarKind::Quality => "q",
            VarKind::Price => "pi",
        };
        write!(f, "{name}[{},{},{}]", self.i + 1, self.j + 1, self.k + 1)
    }
}

/// `coef * var^pow`, or the constant `coef` when `var` is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TermJson", into = "TermJson")]
pub struct Term {
    pub var: Option<VarRef>,
    pub pow: u32,
    pub coef: f64,
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    var: Option<String>,
    #[serde(default = "one")]
    pow: u32,
    coef: f64,
}

fn one() -> u32 {
    1
}

impl TryFrom<TermJson> for Term {
    type Error = NeteconError;
    fn try_from(t: TermJson) -> Result<Self, Self::Error> {
        let var = t.var.as_deref().map(VarRef::parse).transpose()?;
        Ok(Term { var, pow: if var.is_some() { t.pow } else { 0 }, coef: t.coef })
    }
}

impl From<Term> for TermJson {
    fn from(t: Term) -> Self {
        TermJson { var: t.var.map(|v| v.to_string()), pow: t.pow, coef: t.coef }
    }
}

impl Term {
    pub fn constant(coef: f64) -> Self {
        Self { var: None, pow: 0, coef }
    }
    pub fn new(var: VarRef, pow: u32, coef: f64) -> Self {
        Self { var: Some(var), pow, coef }
    }
}

/// Sum of single-variable monomials.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly {
    pub terms: Vec<Term>,
}

impl Poly {
    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    fn value(&self, dims: &Dims, x: &DVector<f64>) -> f64 {
        self.terms
            .iter()
            .map(|t| match t.var {
                None => t.coef,
                Some(v) => t.coef * x[dims.index(v)].powi(t.pow as i32),
            })
            .sum()
    }

    fn partial(&self, dims: &Dims, x: &DVector<f64>, idx: usize) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.pow >= 1 && t.var.is_some_and(|v| dims.index(v) == idx))
            .map(|t| t.coef * t.pow as f64 * x[idx].powi(t.pow as i32 - 1))
            .sum()
    }

    /// Second partial; the polynomial is separable so only `a == b` survives.
    fn second_partial(&self, dims: &Dims, x: &DVector<f64>, a: usize, b: usize) -> f64 {
        if a != b {
            return 0.0;
        }
        self.terms
            .iter()
            .filter(|t| t.pow >= 2 && t.var.is_some_and(|v| dims.index(v) == a))
            .map(|t| t.coef * (t.pow * (t.pow - 1)) as f64 * x[a].powi(t.pow as i32 - 2))
            .sum()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().filter(|t| t.var.is_some()).map(|t| t.pow).max().unwrap_or(0)
    }

    /// Exchanges service-provider indices `a` and `b` in every variable.
    pub fn swap_provider(&self, a: usize, b: usize) -> Self {
        let swap = |i: usize| if i == a { b } else if i == b { a } else { i };
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Term { var: t.var.map(|v| VarRef { i: swap(v.i), ..v }), ..t.clone() })
                .collect(),
        }
    }

    /// Multiplies every coefficient by `1 + eps` from `factors` in term order.
    pub fn scale_coefficients(&self, mut factors: impl FnMut() -> f64) -> Self {
        Self { terms: self.terms.iter().map(|t| Term { coef: t.coef * factors(), ..t.clone() }).collect() }
    }

    fn validate(&self, dims: &Dims) -> Result<(), NeteconError> {
        for t in &self.terms {
            if !t.coef.is_finite() {
                return Err(NeteconError::Model(format!("non-finite coefficient {}", t.coef)));
            }
            if let Some(v) = t.var {
                if !dims.contains(v) {
                    return Err(NeteconError::Model(format!("variable {v} out of range for {}x{}x{}", dims.m, dims.n, dims.o)));
                }
            }
        }
        Ok(())
    }
}

pub type ScalarClosure = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type GradientClosure = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A cost or price function of the full decision vector.
#[derive(Clone)]
pub enum ScalarFn {
    Poly(Poly),
    Custom { value: ScalarClosure, gradient: Option<GradientClosure> },
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFn::Poly(p) => p.fmt(f),
            ScalarFn::Custom { gradient, .. } => write!(f, "Custom {{ gradient: {} }}", gradient.is_some()),
        }
    }
}

impl From<Poly> for ScalarFn {
    fn from(p: Poly) -> Self {
        ScalarFn::Poly(p)
    }
}

impl ScalarFn {
    pub fn zero() -> Self {
        ScalarFn::Poly(Poly::zero())
    }

    pub fn value(&self, dims: &Dims, x: &DVector<f64>) -> f64 {
        match self {
            ScalarFn::Poly(p) => p.value(dims, x),
            ScalarFn::Custom { value, .. } => value(x),
        }
    }

    pub fn partial(&self, dims: &Dims, x: &DVector<f64>, idx: usize) -> f64 {
        match self {
            ScalarFn::Poly(p) => p.partial(dims, x, idx),
            ScalarFn::Custom { gradient: Some(g), .. } => g(x)[idx],
            ScalarFn::Custom { value, gradient: None } => {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[idx] += FD_STEP;
                xm[idx] -= FD_STEP;
                (value(&xp) - value(&xm)) / (2.0 * FD_STEP)
            }
        }
    }

    pub fn has_analytic_gradient(&self) -> bool {
        !matches!(self, ScalarFn::Custom { gradient: None, .. })
    }

    pub fn as_poly(&self) -> Option<&Poly> {
        match self {
            ScalarFn::Poly(p) => Some(p),
            ScalarFn::Custom { .. } => None,
        }
    }
}

/// A point `X = (Q, q, pi)` together with its dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct EconomyPoint {
    pub dims: Dims,
    pub x: DVector<f64>,
}

impl EconomyPoint {
    pub fn new(dims: Dims, x: DVector<f64>) -> Result<Self, NeteconError> {
        if x.len() != dims.dim() {
            return Err(NeteconError::Dimension { expected: dims.dim(), actual: x.len() });
        }
        if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(NeteconError::Negative { index, value });
        }
        Ok(Self { dims, x })
    }

    pub fn from_blocks(dims: Dims, quantity: &[f64], quality: &[f64], price: &[f64]) -> Result<Self, NeteconError> {
        let t = dims.triples();
        for len in [quantity.len(), quality.len(), price.len()] {
            if len != t {
                return Err(NeteconError::Dimension { expected: t, actual: len });
            }
        }
        let x = DVector::from_iterator(3 * t, quantity.iter().chain(quality).chain(price).copied());
        Self::new(dims, x)
    }

    pub fn get(&self, var: VarRef) -> f64 {
        self.x[self.dims.index(var)]
    }

    pub fn quantity(&self) -> &[f64] {
        &self.x.as_slice()[..self.dims.triples()]
    }
    pub fn quality(&self) -> &[f64] {
        let t = self.dims.triples();
        &self.x.as_slice()[t..2 * t]
    }
    pub fn price(&self) -> &[f64] {
        let t = self.dims.triples();
        &self.x.as_slice()[2 * t..]
    }
}

/// Per-agent utilities: service providers `u1`, network providers `u2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Utilities {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NetworkEconomyModel {
    dims: Dims,
    /// `f_i`, one per service provider.
    pub production: Vec<ScalarFn>,
    /// `rho_ijk`, in cell order.
    pub demand_price: Vec<ScalarFn>,
    /// `c_ijk`, in cell order.
    pub delivery_cost: Vec<ScalarFn>,
    /// `oc_ijk`, in cell order.
    pub opportunity_cost: Vec<ScalarFn>,
}

impl NetworkEconomyModel {
    pub fn new(
        dims: Dims,
        production: Vec<ScalarFn>,
        demand_price: Vec<ScalarFn>,
        delivery_cost: Vec<ScalarFn>,
        opportunity_cost: Vec<ScalarFn>,
    ) -> Result<Self, NeteconError> {
        let model = Self { dims, production, demand_price, delivery_cost, opportunity_cost };
        model.validate()?;
        Ok(model)
    }

    /// Every function identically zero.
    pub fn zero(dims: Dims) -> Self {
        let t = dims.triples();
        Self {
            dims,
            production: vec![ScalarFn::zero(); dims.m],
            demand_price: vec![ScalarFn::zero(); t],
            delivery_cost: vec![ScalarFn::zero(); t],
            opportunity_cost: vec![ScalarFn::zero(); t],
        }
    }

    pub fn validate(&self) -> Result<(), NeteconError> {
        let d = &self.dims;
        if d.m == 0 || d.n == 0 || d.o == 0 {
            return Err(NeteconError::Model("m, n and o must be positive".into()));
        }
        let t = d.triples();
        let checks = [
            ("production", self.production.len(), d.m),
            ("demand_price", self.demand_price.len(), t),
            ("delivery_cost", self.delivery_cost.len(), t),
            ("opportunity_cost", self.opportunity_cost.len(), t),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(NeteconError::Model(format!("{name} has {got} functions, expected {want}")));
            }
        }
        for f in self.all_functions() {
            if let ScalarFn::Poly(p) = f {
                p.validate(d)?;
            }
        }
        Ok(())
    }

    fn all_functions(&self) -> impl Iterator<Item = &ScalarFn> {
        self.production.iter().chain(&self.demand_price).chain(&self.delivery_cost).chain(&self.opportunity_cost)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.dim()
    }

    /// True when some derivative is taken by finite differences.
    pub fn uses_finite_differences(&self) -> bool {
        self.all_functions().any(|f| !f.has_analytic_gradient())
    }

    /// True when every function is a polynomial, so the Jacobian is exact.
    pub fn all_polynomial(&self) -> bool {
        self.all_functions().all(|f| f.as_poly().is_some())
    }

    /// `F` is affine when costs are at most quadratic and prices at most linear.
    pub fn is_affine(&self) -> bool {
        self.all_polynomial()
            && self.demand_price.iter().all(|f| f.as_poly().is_some_and(|p| p.degree() <= 1))
            && self
                .production
                .iter()
                .chain(&self.delivery_cost)
                .chain(&self.opportunity_cost)
                .all(|f| f.as_poly().is_some_and(|p| p.degree() <= 2))
    }

    fn check(&self, x: &DVector<f64>) -> Result<(), NeteconError> {
        EconomyPoint::new(self.dims, x.clone()).map(|_| ())
    }

    /// `F(X) = (F1, F2, F3)`; requires `X >= 0`.
    pub fn f_mapping(&self, x: &DVector<f64>) -> Result<DVector<f64>, NeteconError> {
        self.check(x)?;
        Ok(self.f_unchecked(x))
    }

    fn f_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = self.dims;
        let t = d.triples();
        let mut out = DVector::zeros(3 * t);
        for i in 0..d.m {
            for j in 0..d.n {
                for k in 0..d.o {
                    let c = d.cell(i, j, k);
                    let qv = d.index(VarRef::quantity(i, j, k));
                    let sv = d.index(VarRef::quality(i, j, k));
                    let pv = d.index(VarRef::price(i, j, k));
                    let mut f1 = self.production[i].partial(&d, x, qv) + x[pv]
                        - self.demand_price[c].value(&d, x);
                    let mut f2 = 0.0;
                    for h in 0..d.n {
                        for l in 0..d.o {
                            let ihl = d.cell(i, h, l);
                            f1 -= self.demand_price[ihl].partial(&d, x, qv) * x[ihl];
                        }
                    }
                    for h in 0..d.m {
                        for l in 0..d.o {
                            f2 += self.delivery_cost[d.cell(h, j, l)].partial(&d, x, sv);
                        }
                    }
                    out[c] = f1;
                    out[t + c] = f2;
                    out[2 * t + c] = -x[qv] + self.opportunity_cost[c].partial(&d, x, pv);
                }
            }
        }
        out
    }

    /// Jacobian of `F`; exact for polynomial models, central differences otherwise.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, NeteconError> {
        self.check(x)?;
        Ok(self.jacobian_unchecked(x))
    }

    fn jacobian_unchecked(&self, x: &DVector<f64>) -> DMatrix<f64> {
        if !self.all_polynomial() {
            let this = self.clone();
            let f = move |y: &DVector<f64>| this.f_unchecked(y);
            return finite_difference_jacobian(&f, x, FD_STEP);
        }
        let d = self.dims;
        let t = d.triples();
        let poly = |f: &ScalarFn| f.as_poly().cloned().expect("all functions polynomial");
        let production: Vec<Poly> = self.production.iter().map(poly).collect();
        let rho: Vec<Poly> = self.demand_price.iter().map(poly).collect();
        let cost: Vec<Poly> = self.delivery_cost.iter().map(poly).collect();
        let oc: Vec<Poly> = self.opportunity_cost.iter().map(poly).collect();
        let mut jac = DMatrix::zeros(3 * t, 3 * t);
        for i in 0..d.m {
            for j in 0..d.n {
                for k in 0..d.o {
                    let c = d.cell(i, j, k);
                    let qv = d.index(VarRef::quantity(i, j, k));
                    let sv = d.index(VarRef::quality(i, j, k));
                    let pv = d.index(VarRef::price(i, j, k));
                    for v in 0..3 * t {
                        let mut f1 = production[i].second_partial(&d, x, qv, v) - rho[c].partial(&d, x, v);
                        if v == pv {
                            f1 += 1.0;
                        }
                        let mut f2 = 0.0;
                        for h in 0..d.n {
                            for l in 0..d.o {
                                let ihl = d.cell(i, h, l);
                                f1 -= rho[ihl].second_partial(&d, x, qv, v) * x[ihl];
                                if v == ihl {
                                    f1 -= rho[ihl].partial(&d, x, qv);
                                }
                            }
                        }
                        for h in 0..d.m {
                            for l in 0..d.o {
                                f2 += cost[d.cell(h, j, l)].second_partial(&d, x, sv, v);
                            }
                        }
                        let mut f3 = oc[c].second_partial(&d, x, pv, v);
                        if v == qv {
                            f3 -= 1.0;
                        }
                        jac[(c, v)] = f1;
                        jac[(t + c, v)] = f2;
                        jac[(2 * t + c, v)] = f3;
                    }
                }
            }
        }
        jac
    }

    /// `U1_i = sum rho Q - f_i - sum pi Q` and
    /// `U2_j = sum pi Q - sum (c + oc)`.
    pub fn utilities(&self, x: &DVector<f64>) -> Result<Utilities, NeteconError> {
        self.check(x)?;
        Ok(self.utilities_unchecked(x))
    }

    fn utilities_unchecked(&self, x: &DVector<f64>) -> Utilities {
        let d = self.dims;
        let t = d.triples();
        let mut u1: Vec<f64> = (0..d.m).map(|i| -self.production[i].value(&d, x)).collect();
        let mut u2 = vec![0.0; d.n];
        for i in 0..d.m {
            for j in 0..d.n {
                for k in 0..d.o {
                    let c = d.cell(i, j, k);
                    let quantity = x[c];
                    let price = x[2 * t + c];
                    u1[i] += (self.demand_price[c].value(&d, x) - price) * quantity;
                    u2[j] += price * quantity
                        - self.delivery_cost[c].value(&d, x)
                        - self.opportunity_cost[c].value(&d, x);
                }
            }
        }
        Utilities { u1, u2 }
    }

    /// Compiles the game into `VI(F, R^{3mno}_+)` with the orthant split
    /// into single-coordinate blocks. For affine models `mu` and `L` are set
    /// from the (constant) Jacobian.
    pub fn assemble_vi(&self) -> Result<ViProblem, NeteconError> {
        let n = self.dim();
        let this = self.clone();
        let field: VectorField = Arc::new(move |x: &DVector<f64>| this.f_unchecked(x));
        let mut p = ViProblem::new(n, field, FeasibleSet::orthant_blocks(n))?;
        if self.all_polynomial() {
            let this = self.clone();
            p = p.with_jacobian(Arc::new(move |x: &DVector<f64>| this.jacobian_unchecked(x)));
        }
        if self.is_affine() {
            let jac = self.jacobian_unchecked(&DVector::zeros(n));
            let (mu, l) = monotonicity_constants(&jac);
            p = p.with_constants(Some(mu), Some(l));
        }
        Ok(p)
    }

    pub fn to_json(&self) -> Result<serde_json::Value, NeteconError> {
        let poly = |f: &ScalarFn| {
            f.as_poly().cloned().ok_or_else(|| NeteconError::Model("closure-based functions cannot be serialized".into()))
        };
        let collect = |fs: &[ScalarFn]| fs.iter().map(poly).collect::<Result<Vec<_>, _>>();
        let json = ModelJson {
            m: self.dims.m,
            n: self.dims.n,
            o: self.dims.o,
            production: collect(&self.production)?,
            demand_price: collect(&self.demand_price)?,
            delivery_cost: collect(&self.delivery_cost)?,
            opportunity_cost: collect(&self.opportunity_cost)?,
        };
        Ok(serde_json::to_value(json).expect("model serializes"))
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, NeteconError> {
        let json: ModelJson =
            serde_json::from_value(value.clone()).map_err(|e| NeteconError::Model(e.to_string()))?;
        let wrap = |ps: Vec<Poly>| ps.into_iter().map(ScalarFn::Poly).collect();
        Self::new(
            Dims::new(json.m, json.n, json.o),
            wrap(json.production),
            wrap(json.demand_price),
            wrap(json.delivery_cost),
            wrap(json.opportunity_cost),
        )
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelJson {
    m: usize,
    n: usize,
    o: usize,
    production: Vec<Poly>,
    demand_price: Vec<Poly>,
    delivery_cost: Vec<Poly>,
    opportunity_cost: Vec<Poly>,
}

/// Strong-monotonicity modulus (least eigenvalue of the symmetric part) and
/// Lipschitz constant (spectral norm) of an affine map with matrix `jac`.
pub fn monotonicity_constants(jac: &DMatrix<f64>) -> (f64, f64) {
    let sym = (jac + jac.transpose()) * 0.5;
    let mu = SymmetricEigen::new(sym).eigenvalues.min();
    let l = jac.clone().svd(false, false).singular_values.max();
    (mu, l)
}

/// Two service providers, one network provider, one demand market; all
/// noise terms zero.
pub fn paper_instance() -> NetworkEconomyModel {
    let dims = Dims::new(2, 1, 1);
    let qn = |i| VarRef::quantity(i, 0, 0);
    let ql = |i| VarRef::quality(i, 0, 0);
    let pr = |i| VarRef::price(i, 0, 0);
    let production = vec![
        Poly::new(vec![Term::new(qn(0), 2, 1.0), Term::new(qn(0), 1, 1.0)]),
        Poly::new(vec![Term::new(qn(1), 2, 2.0), Term::new(qn(1), 1, 1.0)]),
    ];
    let demand_price = vec![
        Poly::new(vec![
            Term::new(qn(0), 1, -1.0),
            Term::new(qn(1), 1, -0.5),
            Term::new(ql(0), 1, 0.5),
            Term::constant(100.0),
        ]),
        Poly::new(vec![
            Term::new(qn(1), 1, -1.0),
            Term::new(qn(0), 1, -0.5),
            Term::new(ql(1), 1, 0.5),
            Term::constant(200.0),
        ]),
    ];
    // 0.5 (q - a)^2 expanded
    let half_square = |i, a: f64| Poly::new(vec![Term::new(ql(i), 2, 0.5), Term::new(ql(i), 1, -a), Term::constant(0.5 * a * a)]);
    let delivery_cost = vec![half_square(0, 20.0), half_square(1, 10.0)];
    let opportunity_cost = vec![Poly::new(vec![Term::new(pr(0), 2, 1.0)]), Poly::new(vec![Term::new(pr(1), 2, 1.0)])];
    let wrap = |ps: Vec<Poly>| ps.into_iter().map(ScalarFn::Poly).collect();
    NetworkEconomyModel::new(dims, wrap(production), wrap(demand_price), wrap(delivery_cost), wrap(opportunity_cost))
        .expect("fixture is well formed")
}

/// One of each agent: `f = Q^2`, `rho = 10`, `c = q^2 / 2`, `oc = pi^2`.
pub fn toy_instance() -> NetworkEconomyModel {
    let dims = Dims::new(1, 1, 1);
    NetworkEconomyModel::new(
        dims,
        vec![Poly::new(vec![Term::new(VarRef::quantity(0, 0, 0), 2, 1.0)]).into()],
        vec![Poly::new(vec![Term::constant(10.0)]).into()],
        vec![Poly::new(vec![Term::new(VarRef::quality(0, 0, 0), 2, 0.5)]).into()],
        vec![Poly::new(vec![Term::new(VarRef::price(0, 0, 0), 2, 1.0)]).into()],
    )
    .expect("fixture is well formed")
}
