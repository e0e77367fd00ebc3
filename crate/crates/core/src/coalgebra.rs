//! Coalgebras of the functor `P(A x X)` (finite labelled transition
//! systems), bisimulations between them, stream unfolding, and MDP
//! homomorphisms.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoalgebraError {
    /// `path` is a JSON-pointer style location of the offending item.
    #[error("{path}: {message}")]
    Validation { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> CoalgebraError {
    CoalgebraError::Validation { path: path.into(), message: message.into() }
}

/// Finite LTS with named states and labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lts {
    states: Vec<String>,
    labels: Vec<String>,
    trans: BTreeSet<(usize, usize, usize)>,
    /// `succ[s][a]`: sorted targets.
    succ: Vec<Vec<Vec<usize>>>,
}

impl Lts {
    pub fn new(states: Vec<String>, labels: Vec<String>, trans: &[(String, String, String)]) -> Result<Self, CoalgebraError> {
        let index = |names: &[String], what: &str| -> Result<HashMap<String, usize>, CoalgebraError> {
            let mut map = HashMap::new();
            for (i, n) in names.iter().enumerate() {
                if map.insert(n.clone(), i).is_some() {
                    return Err(invalid(format!("/{what}/{i}"), format!("duplicate name {n:?}")));
                }
            }
            Ok(map)
        };
        let si = index(&states, "states")?;
        let li = index(&labels, "labels")?;
        let mut idx = Vec::with_capacity(trans.len());
        for (k, (s, a, t)) in trans.iter().enumerate() {
            let s = *si.get(s).ok_or_else(|| invalid(format!("/trans/{k}/0"), format!("unknown state {s:?}")))?;
            let a = *li.get(a).ok_or_else(|| invalid(format!("/trans/{k}/1"), format!("unknown label {a:?}")))?;
            let t = *si.get(t).ok_or_else(|| invalid(format!("/trans/{k}/2"), format!("unknown state {t:?}")))?;
            idx.push((s, a, t));
        }
        Ok(Self::build(states, labels, idx))
    }

    /// States `s0..`, labels `a0..`.
    pub fn from_indices(n_states: usize, n_labels: usize, trans: &[(usize, usize, usize)]) -> Result<Self, CoalgebraError> {
        for (k, &(s, a, t)) in trans.iter().enumerate() {
            if s >= n_states || t >= n_states || a >= n_labels {
                return Err(invalid(format!("/trans/{k}"), "index out of range"));
            }
        }
        Ok(Self::build(
            (0..n_states).map(|i| format!("s{i}")).collect(),
            (0..n_labels).map(|i| format!("a{i}")).collect(),
            trans.to_vec(),
        ))
    }

    fn build(states: Vec<String>, labels: Vec<String>, trans: Vec<(usize, usize, usize)>) -> Self {
        let trans: BTreeSet<_> = trans.into_iter().collect();
        let mut succ = vec![vec![Vec::new(); labels.len()]; states.len()];
        for &(s, a, t) in &trans {
            succ[s][a].push(t);
        }
        Self { states, labels, trans, succ }
    }

    pub fn from_json(v: &Value) -> Result<Self, CoalgebraError> {
        let names = |key: &str| -> Result<Vec<String>, CoalgebraError> {
            let arr = v.get(key).ok_or_else(|| invalid("", format!("missing key \"{key}\"")))?;
            let arr = arr.as_array().ok_or_else(|| invalid(format!("/{key}"), "expected an array"))?;
            arr.iter()
                .enumerate()
                .map(|(i, x)| json_name(x).ok_or_else(|| invalid(format!("/{key}/{i}"), "expected a string or number")))
                .collect()
        };
        let states = names("states")?;
        let labels = names("labels")?;
        let raw = v.get("trans").ok_or_else(|| invalid("", "missing key \"trans\""))?;
        let raw = raw.as_array().ok_or_else(|| invalid("/trans", "expected an array"))?;
        let mut trans = Vec::with_capacity(raw.len());
        for (k, t) in raw.iter().enumerate() {
            let parts = t.as_array().filter(|p| p.len() == 3).ok_or_else(|| invalid(format!("/trans/{k}"), "expected [state, label, state]"))?;
            let get = |i: usize| json_name(&parts[i]).ok_or_else(|| invalid(format!("/trans/{k}/{i}"), "expected a string"));
            trans.push((get(0)?, get(1)?, get(2)?));
        }
        Self::new(states, labels, &trans)
    }

    pub fn to_json(&self) -> Value {
        let trans: Vec<Value> = self
            .trans
            .iter()
            .map(|&(s, a, t)| serde_json::json!([self.states[s], self.labels[a], self.states[t]]))
            .collect();
        serde_json::json!({ "states": self.states, "labels": self.labels, "trans": trans })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn label_name(&self, a: usize) -> &str {
        &self.labels[a]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn successors(&self, s: usize, a: usize) -> &[usize] {
        &self.succ[s][a]
    }

    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.trans.iter().copied()
    }
}

fn json_name(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Label correspondence: for each label of `l1`, its index in `l2` if present,
/// and the labels of `l2` missing from `l1`. A label absent from one system
/// simply has no transitions there.
fn align_labels(l1: &Lts, l2: &Lts) -> (Vec<Option<usize>>, Vec<usize>) {
    let fwd: Vec<Option<usize>> = l1.labels.iter().map(|a| l2.labels.iter().position(|b| b == a)).collect();
    let only_right = (0..l2.labels.len()).filter(|b| !fwd.contains(&Some(*b))).collect();
    (fwd, only_right)
}

/// A relation `R` between the states of two systems.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateRelation {
    pub left: usize,
    pub right: usize,
    pairs: BTreeSet<(usize, usize)>,
}

impl StateRelation {
    pub fn new(left: usize, right: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, CoalgebraError> {
        let pairs: BTreeSet<_> = pairs.into_iter().collect();
        if let Some(&(s, t)) = pairs.iter().find(|&&(s, t)| s >= left || t >= right) {
            return Err(invalid("/relation", format!("pair ({s}, {t}) references an unknown state")));
        }
        Ok(Self { left, right, pairs })
    }

    pub fn empty(left: usize, right: usize) -> Self {
        Self { left, right, pairs: BTreeSet::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self { left: n, right: n, pairs: (0..n).map(|i| (i, i)).collect() }
    }

    pub fn full(left: usize, right: usize) -> Self {
        Self { left, right, pairs: (0..left).flat_map(|s| (0..right).map(move |t| (s, t))).collect() }
    }

    /// Graph `{(s, f(s))}` of a map.
    pub fn graph(f: &[usize], right: usize) -> Result<Self, CoalgebraError> {
        Self::new(f.len(), right, f.iter().enumerate().map(|(s, &t)| (s, t)))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn contains(&self, s: usize, t: usize) -> bool {
        self.pairs.contains(&(s, t))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_subset(&self, other: &StateRelation) -> bool {
        self.pairs.is_subset(&other.pairs)
    }

    pub fn inverse(&self) -> Self {
        Self { left: self.right, right: self.left, pairs: self.pairs.iter().map(|&(s, t)| (t, s)).collect() }
    }

    /// `{(x, z) | (x, y) in self, (y, z) in other}`.
    pub fn compose(&self, other: &StateRelation) -> Result<Self, CoalgebraError> {
        if self.right != other.left {
            return Err(invalid("/relation", "composed relations do not share a middle system"));
        }
        let mut by_left: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(y, z) in &other.pairs {
            by_left.entry(y).or_default().push(z);
        }
        let pairs = self
            .pairs
            .iter()
            .flat_map(|&(x, y)| by_left.get(&y).into_iter().flatten().map(move |&z| (x, z)))
            .collect();
        Ok(Self { left: self.left, right: other.right, pairs })
    }

    pub fn union(&self, other: &StateRelation) -> Result<Self, CoalgebraError> {
        if (self.left, self.right) != (other.left, other.right) {
            return Err(invalid("/relation", "union of relations over different systems"));
        }
        Ok(Self { left: self.left, right: self.right, pairs: self.pairs.union(&other.pairs).copied().collect() })
    }

    pub fn is_equivalence(&self) -> bool {
        if self.left != self.right {
            return false;
        }
        let reflexive = (0..self.left).all(|i| self.contains(i, i));
        let symmetric = self.pairs.iter().all(|&(s, t)| self.contains(t, s));
        let transitive = self
            .pairs
            .iter()
            .all(|&(x, y)| self.pairs.range((y, 0)..(y + 1, 0)).all(|&(_, z)| self.contains(x, z)));
        reflexive && symmetric && transitive
    }

    /// Pairs as names, for reporting.
    pub fn to_json(&self, l1: &Lts, l2: &Lts) -> Value {
        Value::Array(
            self.pairs.iter().map(|&(s, t)| serde_json::json!([l1.state_name(s), l2.state_name(t)])).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    /// `s -a-> s'` in the first system has no matching step from `t`.
    Left,
    /// `t -a-> t'` in the second system has no matching step from `s`.
    Right,
}

/// A pair `(s, t)` of the relation and the unmatched transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BisimCounterexample {
    pub s: usize,
    pub t: usize,
    pub label: String,
    pub target: usize,
    pub side: Side,
}

impl BisimCounterexample {
    pub fn describe(&self, l1: &Lts, l2: &Lts) -> String {
        let (s, t) = (l1.state_name(self.s), l2.state_name(self.t));
        match self.side {
            Side::Left => format!(
                "pair ({s}, {t}): {s} -{}-> {} has no related {}-successor of {t}",
                self.label,
                l1.state_name(self.target),
                self.label
            ),
            Side::Right => format!(
                "pair ({s}, {t}): {t} -{}-> {} has no related {}-successor of {s}",
                self.label,
                l2.state_name(self.target),
                self.label
            ),
        }
    }
}

fn check_pair(
    l1: &Lts,
    l2: &Lts,
    labels: &(Vec<Option<usize>>, Vec<usize>),
    rel: &StateRelation,
    s: usize,
    t: usize,
) -> Option<BisimCounterexample> {
    let (fwd, only_right) = labels;
    for (a, b) in fwd.iter().enumerate() {
        let right: &[usize] = match b {
            Some(b) => l2.successors(t, *b),
            None => &[],
        };
        let left = l1.successors(s, a);
        if let Some(&s2) = left.iter().find(|&&s2| !right.iter().any(|&t2| rel.contains(s2, t2))) {
            return Some(BisimCounterexample { s, t, label: l1.labels[a].clone(), target: s2, side: Side::Left });
        }
        if let Some(&t2) = right.iter().find(|&&t2| !left.iter().any(|&s2| rel.contains(s2, t2))) {
            return Some(BisimCounterexample { s, t, label: l1.labels[a].clone(), target: t2, side: Side::Right });
        }
    }
    for &b in only_right {
        if let Some(&t2) = l2.successors(t, b).first() {
            return Some(BisimCounterexample { s, t, label: l2.labels[b].clone(), target: t2, side: Side::Right });
        }
    }
    None
}

fn check_dims(l1: &Lts, l2: &Lts, rel: &StateRelation) -> Result<(), CoalgebraError> {
    if rel.left != l1.num_states() || rel.right != l2.num_states() {
        return Err(invalid(
            "/relation",
            format!(
                "relation is over {}x{} states, systems have {} and {}",
                rel.left,
                rel.right,
                l1.num_states(),
                l2.num_states()
            ),
        ));
    }
    Ok(())
}

/// Checks both transfer clauses for every pair; returns the first violation.
pub fn is_bisimulation(l1: &Lts, l2: &Lts, rel: &StateRelation) -> Result<Option<BisimCounterexample>, CoalgebraError> {
    check_dims(l1, l2, rel)?;
    let labels = align_labels(l1, l2);
    Ok(rel.pairs().find_map(|(s, t)| check_pair(l1, l2, &labels, rel, s, t)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub relation: StateRelation,
    /// Number of deletion sweeps, including the final one that removed nothing.
    pub sweeps: usize,
    pub removed_per_sweep: Vec<usize>,
}

/// Largest bisimulation between `l1` and `l2`: start from all pairs and
/// delete violating pairs until a sweep removes nothing.
pub fn greatest_bisimulation(l1: &Lts, l2: &Lts) -> Refinement {
    let labels = align_labels(l1, l2);
    let mut rel = StateRelation::full(l1.num_states(), l2.num_states());
    let mut removed_per_sweep = Vec::new();
    loop {
        let bad: Vec<(usize, usize)> =
            rel.pairs().filter(|&(s, t)| check_pair(l1, l2, &labels, &rel, s, t).is_some()).collect();
        removed_per_sweep.push(bad.len());
        if bad.is_empty() {
            break;
        }
        for p in bad {
            rel.pairs.remove(&p);
        }
    }
    Refinement { relation: rel, sweeps: removed_per_sweep.len(), removed_per_sweep }
}

/// Why a state map fails to be an LTS homomorphism.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum HomViolation {
    /// `s -a-> s'` but not `f(s) -a-> f(s')`.
    Forward { s: usize, label: String, target: usize },
    /// `f(s) -a-> u` but no `s -a-> s'` with `f(s') = u`.
    Converse { s: usize, label: String, image_target: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomCheck {
    pub violation: Option<HomViolation>,
    /// When the map is a homomorphism, whether its graph passed
    /// [`is_bisimulation`] (always expected to).
    pub graph_is_bisimulation: Option<bool>,
}

impl HomCheck {
    pub fn holds(&self) -> bool {
        self.violation.is_none()
    }
}

fn check_map(f: &[usize], domain: usize, codomain: usize, what: &str) -> Result<(), CoalgebraError> {
    if f.len() != domain {
        return Err(invalid(format!("/{what}"), format!("map defined on {} of {domain} states", f.len())));
    }
    if let Some((s, &t)) = f.iter().enumerate().find(|(_, &t)| t >= codomain) {
        return Err(invalid(format!("/{what}/{s}"), format!("image {t} outside the codomain")));
    }
    Ok(())
}

/// Checks `F(f) . alpha_S = alpha_T . f` for `f: l1 -> l2`.
pub fn check_homomorphism(f: &[usize], l1: &Lts, l2: &Lts) -> Result<HomCheck, CoalgebraError> {
    check_map(f, l1.num_states(), l2.num_states(), "map")?;
    let (fwd, only_right) = align_labels(l1, l2);
    let violation = (|| {
        for (s, a, s2) in l1.transitions() {
            let ok = fwd[a].is_some_and(|b| l2.successors(f[s], b).contains(&f[s2]));
            if !ok {
                return Some(HomViolation::Forward { s, label: l1.labels[a].clone(), target: s2 });
            }
        }
        for s in 0..l1.num_states() {
            for (a, b) in fwd.iter().enumerate() {
                let Some(b) = b else { continue };
                for &u in l2.successors(f[s], *b) {
                    if !l1.successors(s, a).iter().any(|&s2| f[s2] == u) {
                        return Some(HomViolation::Converse { s, label: l1.labels[a].clone(), image_target: u });
                    }
                }
            }
            for &b in &only_right {
                if let Some(&u) = l2.successors(f[s], b).first() {
                    return Some(HomViolation::Converse { s, label: l2.labels[b].clone(), image_target: u });
                }
            }
        }
        None
    })();
    let graph_is_bisimulation = if violation.is_none() {
        let graph = StateRelation::graph(f, l2.num_states())?;
        Some(is_bisimulation(l1, l2, &graph)?.is_none())
    } else {
        None
    };
    Ok(HomCheck { violation, graph_is_bisimulation })
}

/// Image `{(f(t), g(t))}` of a span of homomorphisms `S <- T -> U`.
pub fn span_image_bisimulation(
    t: &Lts,
    s: &Lts,
    u: &Lts,
    f: &[usize],
    g: &[usize],
) -> Result<StateRelation, CoalgebraError> {
    if let Some(v) = check_homomorphism(f, t, s)?.violation {
        return Err(invalid("/f", format!("not a homomorphism: {v:?}")));
    }
    if let Some(v) = check_homomorphism(g, t, u)?.violation {
        return Err(invalid("/g", format!("not a homomorphism: {v:?}")));
    }
    StateRelation::new(s.num_states(), u.num_states(), (0..t.num_states()).map(|x| (f[x], g[x])))
}

/// Kernel `{(x, y) | f(x) = f(y)}` of a map on `n` states.
pub fn kernel_relation(f: &[usize]) -> StateRelation {
    let n = f.len();
    StateRelation {
        left: n,
        right: n,
        pairs: (0..n).flat_map(|x| (0..n).filter(move |&y| f[x] == f[y]).map(move |y| (x, y))).collect(),
    }
}

/// Stream coalgebra `X -> N x X`.
pub struct StreamCoalgebra<X> {
    pub observe: Box<dyn Fn(&X) -> u64>,
    pub next: Box<dyn Fn(&X) -> X>,
}

impl<X> StreamCoalgebra<X> {
    pub fn new(observe: impl Fn(&X) -> u64 + 'static, next: impl Fn(&X) -> X + 'static) -> Self {
        Self { observe: Box::new(observe), next: Box::new(next) }
    }
}

impl<X> fmt::Debug for StreamCoalgebra<X> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StreamCoalgebra")
    }
}

/// First `k` observations along the orbit of `x0`.
pub fn unfold_stream<X>(c: &StreamCoalgebra<X>, x0: X, k: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(k);
    let mut x = x0;
    for i in 0..k {
        out.push((c.observe)(&x));
        if i + 1 < k {
            x = (c.next)(&x);
        }
    }
    out
}

pub const PROB_TOL: f64 = 1e-9;

/// Finite MDP `<S, A, Psi, P, R>`. `Psi` is the set of `(s, a)` with a
/// reward; each admissible pair has a transition distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    states: Vec<String>,
    actions: Vec<String>,
    /// Admissible pair -> sparse successor distribution.
    p: BTreeMap<(usize, usize), BTreeMap<usize, f64>>,
    r: BTreeMap<(usize, usize), f64>,
}

#[derive(Deserialize)]
struct MdpJson {
    states: Vec<Value>,
    actions: Vec<Value>,
    #[serde(rename = "P")]
    p: Vec<(Value, Value, Value, f64)>,
    #[serde(rename = "R")]
    r: Vec<(Value, Value, f64)>,
}

impl Mdp {
    /// Indices throughout. Duplicate `(s, a, s')` entries are summed.
    pub fn new(
        states: Vec<String>,
        actions: Vec<String>,
        p: &[(usize, usize, usize, f64)],
        r: &[(usize, usize, f64)],
    ) -> Result<Self, CoalgebraError> {
        let (ns, na) = (states.len(), actions.len());
        let mut rewards = BTreeMap::new();
        for (k, &(s, a, val)) in r.iter().enumerate() {
            if s >= ns || a >= na {
                return Err(invalid(format!("/R/{k}"), "state or action out of range"));
            }
            if !val.is_finite() {
                return Err(invalid(format!("/R/{k}/2"), "reward must be finite"));
            }
            if rewards.insert((s, a), val).is_some() {
                return Err(invalid(format!("/R/{k}"), "duplicate reward for the same state-action pair"));
            }
        }
        let mut probs: BTreeMap<(usize, usize), BTreeMap<usize, f64>> = BTreeMap::new();
        for (k, &(s, a, t, q)) in p.iter().enumerate() {
            if s >= ns || a >= na || t >= ns {
                return Err(invalid(format!("/P/{k}"), "state or action out of range"));
            }
            if !(0.0..=1.0).contains(&q) {
                return Err(invalid(format!("/P/{k}/3"), format!("probability {q} outside [0, 1]")));
            }
            if !rewards.contains_key(&(s, a)) {
                return Err(invalid(format!("/P/{k}"), "transition for a pair without a reward (not admissible)"));
            }
            *probs.entry((s, a)).or_default().entry(t).or_insert(0.0) += q;
        }
        for &(s, a) in rewards.keys() {
            let total: f64 = probs.get(&(s, a)).map(|d| d.values().sum()).unwrap_or(0.0);
            if (total - 1.0).abs() > PROB_TOL {
                return Err(invalid(
                    "/P",
                    format!("row ({}, {}) sums to {total}, expected 1", states[s], actions[a]),
                ));
            }
        }
        Ok(Self { states, actions, p: probs, r: rewards })
    }

    /// `{"states", "actions", "P": [[s, a, s', p]], "R": [[s, a, r]]}`.
    pub fn from_json(v: &Value) -> Result<Self, CoalgebraError> {
        for key in ["states", "actions", "P", "R"] {
            if v.get(key).is_none() {
                return Err(invalid("", format!("missing key \"{key}\"")));
            }
        }
        let raw: MdpJson = serde_json::from_value(v.clone()).map_err(|e| invalid("", e.to_string()))?;
        let names = |xs: &[Value], key: &str| -> Result<Vec<String>, CoalgebraError> {
            xs.iter()
                .enumerate()
                .map(|(i, x)| json_name(x).ok_or_else(|| invalid(format!("/{key}/{i}"), "expected a string")))
                .collect()
        };
        let states = names(&raw.states, "states")?;
        let actions = names(&raw.actions, "actions")?;
        let find = |names: &[String], x: &Value, path: String| -> Result<usize, CoalgebraError> {
            let n = json_name(x).ok_or_else(|| invalid(path.clone(), "expected a string"))?;
            names.iter().position(|s| *s == n).ok_or_else(|| invalid(path, format!("unknown name {n:?}")))
        };
        let mut p = Vec::new();
        for (k, (s, a, t, q)) in raw.p.iter().enumerate() {
            p.push((
                find(&states, s, format!("/P/{k}/0"))?,
                find(&actions, a, format!("/P/{k}/1"))?,
                find(&states, t, format!("/P/{k}/2"))?,
                *q,
            ));
        }
        let mut r = Vec::new();
        for (k, (s, a, val)) in raw.r.iter().enumerate() {
            r.push((find(&states, s, format!("/R/{k}/0"))?, find(&actions, a, format!("/R/{k}/1"))?, *val));
        }
        Self::new(states, actions, &p, &r)
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn is_admissible(&self, s: usize, a: usize) -> bool {
        self.r.contains_key(&(s, a))
    }

    pub fn admissible(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.r.keys().copied()
    }

    pub fn admissible_actions(&self, s: usize) -> Vec<usize> {
        self.r.range((s, 0)..(s + 1, 0)).map(|(&(_, a), _)| a).collect()
    }

    pub fn prob(&self, s: usize, a: usize, t: usize) -> f64 {
        self.p.get(&(s, a)).and_then(|d| d.get(&t)).copied().unwrap_or(0.0)
    }

    pub fn reward(&self, s: usize, a: usize) -> Option<f64> {
        self.r.get(&(s, a)).copied()
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn action_name(&self, a: usize) -> &str {
        &self.actions[a]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MdpViolation {
    /// `(f(s), g_s(a))` is not admissible in the image MDP.
    Admissibility { s: usize, a: usize },
    /// Block probability mismatch for the image state `block`.
    Transition { s: usize, a: usize, block: usize, expected: f64, actual: f64 },
    Reward { s: usize, a: usize, expected: f64, actual: f64 },
}

/// Checks the stochastic substitution property and reward preservation for
/// `(f, {g_s})`. `g[s][a]` is the image action of admissible `(s, a)`.
pub fn check_mdp_homomorphism(
    m: &Mdp,
    m2: &Mdp,
    f: &[usize],
    g: &[BTreeMap<usize, usize>],
) -> Result<Option<MdpViolation>, CoalgebraError> {
    check_map(f, m.num_states(), m2.num_states(), "f")?;
    let image: BTreeSet<usize> = f.iter().copied().collect();
    if image.len() != m2.num_states() {
        return Err(invalid("/f", "state map is not surjective"));
    }
    if g.len() != m.num_states() {
        return Err(invalid("/g", format!("need one action map per state ({})", m.num_states())));
    }
    for s in 0..m.num_states() {
        for a in m.admissible_actions(s) {
            match g[s].get(&a) {
                None => return Err(invalid(format!("/g/{s}"), format!("action {} unmapped", m.action_name(a)))),
                Some(&b) if b >= m2.num_actions() => {
                    return Err(invalid(format!("/g/{s}/{a}"), "image action out of range"))
                }
                _ => {}
            }
        }
        let hit: BTreeSet<usize> = m.admissible_actions(s).iter().map(|a| g[s][a]).collect();
        let want: BTreeSet<usize> = m2.admissible_actions(f[s]).into_iter().collect();
        if !want.is_subset(&hit) {
            return Err(invalid(format!("/g/{s}"), "action map is not surjective onto the image state's actions"));
        }
    }
    for (s, a) in m.admissible() {
        let b = g[s][&a];
        let fs = f[s];
        if !m2.is_admissible(fs, b) {
            return Ok(Some(MdpViolation::Admissibility { s, a }));
        }
        let mut block = vec![0.0; m2.num_states()];
        for t in 0..m.num_states() {
            block[f[t]] += m.prob(s, a, t);
        }
        for (u, &expected) in block.iter().enumerate() {
            let actual = m2.prob(fs, b, u);
            if (expected - actual).abs() > PROB_TOL {
                return Ok(Some(MdpViolation::Transition { s, a, block: u, expected, actual }));
            }
        }
        let expected = m.reward(s, a).expect("admissible");
        let actual = m2.reward(fs, b).expect("admissible");
        if (expected - actual).abs() > PROB_TOL {
            return Ok(Some(MdpViolation::Reward { s, a, expected, actual }));
        }
    }
    Ok(None)
}

/// Identity action maps for every admissible pair of `m`.
pub fn identity_action_maps(m: &Mdp) -> Vec<BTreeMap<usize, usize>> {
    (0..m.num_states()).map(|s| m.admissible_actions(s).into_iter().map(|a| (a, a)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn self_loop() -> Lts {
        Lts::from_indices(1, 1, &[(0, 0, 0)]).unwrap()
    }

    fn two_cycle() -> Lts {
        Lts::from_indices(2, 1, &[(0, 0, 1), (1, 0, 0)]).unwrap()
    }

    fn step_then_deadlock() -> Lts {
        Lts::from_indices(2, 1, &[(0, 0, 1)]).unwrap()
    }

    #[test]
    fn identity_is_bisimulation() {
        let l = two_cycle();
        assert!(is_bisimulation(&l, &l, &StateRelation::identity(2)).unwrap().is_none());
    }

    #[test]
    fn loop_and_cycle_are_bisimilar() {
        let full = StateRelation::full(1, 2);
        assert!(is_bisimulation(&self_loop(), &two_cycle(), &full).unwrap().is_none());
        let g = greatest_bisimulation(&two_cycle(), &self_loop());
        assert_eq!(g.relation, StateRelation::full(2, 1));
    }

    #[test]
    fn deadlock_counterexample() {
        let rel = StateRelation::new(1, 2, [(0, 0), (0, 1)]).unwrap();
        let cx = is_bisimulation(&self_loop(), &step_then_deadlock(), &rel).unwrap().unwrap();
        // pair (s0, s1): the loop can step, the deadlock state cannot
        assert_eq!((cx.s, cx.t, cx.side), (0, 1, Side::Left));
        let only_init = StateRelation::new(1, 2, [(0, 0)]).unwrap();
        let cx = is_bisimulation(&self_loop(), &step_then_deadlock(), &only_init).unwrap().unwrap();
        assert_eq!(cx.target, 0);
        assert!(cx.describe(&self_loop(), &step_then_deadlock()).contains("s0 -a0-> s0"));
        assert!(greatest_bisimulation(&self_loop(), &step_then_deadlock()).relation.is_empty());
    }

    #[test]
    fn relation_validation() {
        assert!(StateRelation::new(1, 1, [(0, 1)]).is_err());
        let rel = StateRelation::identity(3);
        assert!(is_bisimulation(&two_cycle(), &two_cycle(), &rel).is_err());
    }

    #[test]
    fn homomorphisms() {
        let l = two_cycle();
        let id = check_homomorphism(&[0, 1], &l, &l).unwrap();
        assert!(id.holds() && id.graph_is_bisimulation == Some(true));
        let collapse = check_homomorphism(&[0, 0], &two_cycle(), &self_loop()).unwrap();
        assert!(collapse.holds() && collapse.graph_is_bisimulation == Some(true));
        // deadlock state s1 sent onto the looping state
        let bad = check_homomorphism(&[0, 0], &step_then_deadlock(), &self_loop()).unwrap();
        assert_eq!(bad.violation, Some(HomViolation::Converse { s: 1, label: "a0".into(), image_target: 0 }));
        assert!(check_homomorphism(&[0], &two_cycle(), &self_loop()).is_err());
    }

    #[test]
    fn span_images() {
        let l = two_cycle();
        let id = span_image_bisimulation(&l, &l, &l, &[0, 1], &[0, 1]).unwrap();
        assert_eq!(id, StateRelation::identity(2));
        let swap = span_image_bisimulation(&l, &l, &l, &[0, 1], &[1, 0]).unwrap();
        assert!(is_bisimulation(&l, &l, &swap).unwrap().is_none());
        let full = span_image_bisimulation(&l, &l, &l, &[0, 1], &[0, 1]).unwrap().union(&swap).unwrap();
        assert_eq!(full, StateRelation::full(2, 2));
        assert!(span_image_bisimulation(&step_then_deadlock(), &self_loop(), &self_loop(), &[0, 0], &[0, 0]).is_err());
        let k = kernel_relation(&[0, 0]);
        assert!(k.is_equivalence());
        assert!(is_bisimulation(&l, &l, &k).unwrap().is_none());
    }

    #[test]
    fn streams() {
        let constant = StreamCoalgebra::new(|_: &()| 7, |_| ());
        assert_eq!(unfold_stream(&constant, (), 3), vec![7, 7, 7]);
        let counter = StreamCoalgebra::new(|n: &u64| *n, |n| n + 1);
        assert_eq!(unfold_stream(&counter, 0, 4), vec![0, 1, 2, 3]);
        let fib = StreamCoalgebra::new(|p: &(u64, u64)| p.0, |p| (p.1, p.0 + p.1));
        assert_eq!(unfold_stream(&fib, (0, 1), 5), vec![0, 1, 1, 2, 3]);
        assert!(unfold_stream(&fib, (0, 1), 0).is_empty());
    }

    #[test]
    fn json_round_trip_and_errors() {
        let v = serde_json::json!({"states": ["p", "q"], "labels": ["a"], "trans": [["p", "a", "q"], ["q", "a", "p"]]});
        let l = Lts::from_json(&v).unwrap();
        assert_eq!(Lts::from_json(&l.to_json()).unwrap(), l);
        let missing = serde_json::json!({"states": ["p"], "labels": ["a"]});
        assert_eq!(
            Lts::from_json(&missing).unwrap_err(),
            CoalgebraError::Validation { path: "".into(), message: "missing key \"trans\"".into() }
        );
        let bad = serde_json::json!({"states": ["p"], "labels": ["a"], "trans": [["p", "b", "p"]]});
        assert!(matches!(Lts::from_json(&bad), Err(CoalgebraError::Validation { path, .. }) if path == "/trans/0/1"));
    }

    fn two_state_mdp(r0: f64, r1: f64, p0: f64, p1: f64) -> Mdp {
        Mdp::new(
            vec!["x".into(), "y".into()],
            vec!["go".into()],
            &[(0, 0, 0, p0), (0, 0, 1, 1.0 - p0), (1, 0, 0, p1), (1, 0, 1, 1.0 - p1)],
            &[(0, 0, r0), (1, 0, r1)],
        )
        .unwrap()
    }

    fn one_state_mdp(r: f64) -> Mdp {
        Mdp::new(vec!["z".into()], vec!["go".into()], &[(0, 0, 0, 1.0)], &[(0, 0, r)]).unwrap()
    }

    #[test]
    fn mdp_homomorphisms() {
        let m = two_state_mdp(1.0, 1.0, 0.3, 0.6);
        assert_eq!(check_mdp_homomorphism(&m, &m, &[0, 1], &identity_action_maps(&m)).unwrap(), None);
        let g = vec![BTreeMap::from([(0, 0)]), BTreeMap::from([(0, 0)])];
        // every block sum is 1 when the whole space collapses
        assert_eq!(check_mdp_homomorphism(&m, &one_state_mdp(1.0), &[0, 0], &g).unwrap(), None);
        let broken = two_state_mdp(1.0, 2.0, 0.3, 0.6);
        assert!(matches!(
            check_mdp_homomorphism(&broken, &one_state_mdp(1.0), &[0, 0], &g).unwrap(),
            Some(MdpViolation::Reward { s: 1, .. })
        ));
        // collapsing onto a two-state image requires equal block sums
        let target = two_state_mdp(1.0, 1.0, 0.3, 0.3);
        let m3 = Mdp::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["go".into()],
            &[(0, 0, 0, 0.3), (0, 0, 1, 0.4), (0, 0, 2, 0.3), (1, 0, 0, 0.3), (1, 0, 2, 0.7), (2, 0, 0, 0.3), (2, 0, 1, 0.7)],
            &[(0, 0, 1.0), (1, 0, 1.0), (2, 0, 1.0)],
        )
        .unwrap();
        let g3 = vec![BTreeMap::from([(0, 0)]); 3];
        assert_eq!(check_mdp_homomorphism(&m3, &target, &[0, 1, 1], &g3).unwrap(), None);
        let skewed = two_state_mdp(1.0, 1.0, 0.3, 0.5);
        assert!(matches!(
            check_mdp_homomorphism(&m3, &skewed, &[0, 1, 1], &g3).unwrap(),
            Some(MdpViolation::Transition { .. })
        ));
        assert!(check_mdp_homomorphism(&m, &m, &[0, 0], &identity_action_maps(&m)).is_err());
    }

    #[test]
    fn mdp_validation() {
        let bad = Mdp::new(vec!["x".into()], vec!["a".into()], &[(0, 0, 0, 0.9)], &[(0, 0, 0.0)]);
        assert!(matches!(bad, Err(CoalgebraError::Validation { message, .. }) if message.contains("sums to 0.9")));
        let v = serde_json::json!({"states": ["x"], "actions": ["a"], "P": [["x", "a", "x", 1.0]], "R": [["x", "a", 2.5]]});
        let m = Mdp::from_json(&v).unwrap();
        assert_eq!(m.reward(0, 0), Some(2.5));
    }
}
