//! Abstract conditional independence (separoids) and discovery of partial
//! orders on mutation events from genotype data.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Read;

use rand::Rng;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CausalError {
    #[error("invalid separoid structure: {0}")]
    Structure(String),
    #[error("joint table sums to {0}, expected 1")]
    NotNormalized(f64),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("row {row}, column {column}: {message}")]
    Csv { row: usize, column: String, message: String },
    #[error("empty dataset")]
    Empty,
}

/// `(S, <=, join, meet?, ci)` over indexed elements; `ci` holds triples
/// `(x, y, z)` read as `x _||_ y | z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Separoid {
    pub names: Vec<String>,
    leq: Vec<Vec<bool>>,
    join: Vec<Vec<usize>>,
    meet: Option<Vec<Vec<usize>>>,
    ci: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Axiom {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
}

/// A failed axiom instance; `witness` lists the quantified elements in the
/// order `x, y, z, w` (as many as the axiom uses).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomViolation {
    pub axiom: Axiom,
    pub witness: Vec<usize>,
}

impl AxiomViolation {
    pub fn describe(&self, s: &Separoid) -> String {
        let names: Vec<&str> = self.witness.iter().map(|&i| s.names[i].as_str()).collect();
        format!("{:?} fails at ({})", self.axiom, names.join(", "))
    }
}

impl Separoid {
    pub fn new(
        names: Vec<String>,
        leq: Vec<Vec<bool>>,
        join: Vec<Vec<usize>>,
        meet: Option<Vec<Vec<usize>>>,
        ci: impl IntoIterator<Item = (usize, usize, usize)>,
    ) -> Result<Self, CausalError> {
        let k = names.len();
        let square = |m: &Vec<Vec<usize>>| m.len() == k && m.iter().all(|r| r.len() == k && r.iter().all(|&v| v < k));
        if leq.len() != k || leq.iter().any(|r| r.len() != k) || !square(&join) || meet.as_ref().is_some_and(|m| !square(m)) {
            return Err(CausalError::Structure(format!("tables must be {k}x{k} over valid elements")));
        }
        let mut table = vec![false; k * k * k];
        for (x, y, z) in ci {
            if x >= k || y >= k || z >= k {
                return Err(CausalError::Structure(format!("triple ({x}, {y}, {z}) out of range")));
            }
            table[(x * k + y) * k + z] = true;
        }
        Ok(Self { names, leq, join, meet, ci: table })
    }

    /// Chain `0 <= 1 <= ... <= k-1` with max/min as join/meet.
    pub fn chain(k: usize, ci: impl IntoIterator<Item = (usize, usize, usize)>) -> Result<Self, CausalError> {
        Self::new(
            (0..k).map(|i| i.to_string()).collect(),
            (0..k).map(|a| (0..k).map(|b| a <= b).collect()).collect(),
            (0..k).map(|a| (0..k).map(|b| a.max(b)).collect()).collect(),
            Some((0..k).map(|a| (0..k).map(|b| a.min(b)).collect()).collect()),
            ci,
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ci(&self, x: usize, y: usize, z: usize) -> bool {
        let k = self.len();
        self.ci[(x * k + y) * k + z]
    }

    pub fn ci_triples(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let k = self.len();
        (0..k * k * k).filter(|&i| self.ci[i]).map(move |i| (i / (k * k), i / k % k, i % k))
    }

    pub fn leq(&self, a: usize, b: usize) -> bool {
        self.leq[a][b]
    }

    pub fn join(&self, a: usize, b: usize) -> usize {
        self.join[a][b]
    }

    /// Preorder, least upper bound and (if present) greatest lower bound checks.
    pub fn check_structure(&self) -> Result<(), CausalError> {
        let k = self.len();
        for a in 0..k {
            if !self.leq[a][a] {
                return Err(CausalError::Structure(format!("<= is not reflexive at {}", self.names[a])));
            }
            for b in 0..k {
                for c in 0..k {
                    if self.leq[a][b] && self.leq[b][c] && !self.leq[a][c] {
                        return Err(CausalError::Structure(format!(
                            "<= is not transitive at ({}, {}, {})",
                            self.names[a], self.names[b], self.names[c]
                        )));
                    }
                }
            }
        }
        for a in 0..k {
            for b in 0..k {
                let j = self.join[a][b];
                let upper = self.leq[a][j] && self.leq[b][j];
                let least = (0..k).all(|c| !(self.leq[a][c] && self.leq[b][c]) || self.leq[j][c]);
                if !(upper && least) {
                    return Err(CausalError::Structure(format!(
                        "join({}, {}) = {} is not a least upper bound",
                        self.names[a], self.names[b], self.names[j]
                    )));
                }
                if let Some(meet) = &self.meet {
                    let m = meet[a][b];
                    let lower = self.leq[m][a] && self.leq[m][b];
                    let greatest = (0..k).all(|c| !(self.leq[c][a] && self.leq[c][b]) || self.leq[c][m]);
                    if !(lower && greatest) {
                        return Err(CausalError::Structure(format!(
                            "meet({}, {}) = {} is not a greatest lower bound",
                            self.names[a], self.names[b], self.names[m]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Checks P1-P5 (and P6 when `strong` and a meet is present) over all
/// tuples; returns every violation.
pub fn check_separoid(s: &Separoid, strong: bool) -> Result<Vec<AxiomViolation>, CausalError> {
    s.check_structure()?;
    let k = s.len();
    let mut out = Vec::new();
    let mut v = |axiom, witness: Vec<usize>| out.push(AxiomViolation { axiom, witness });
    for x in 0..k {
        for y in 0..k {
            if !s.ci(x, y, x) {
                v(Axiom::P1, vec![x, y]);
            }
        }
    }
    for (x, y, z) in s.ci_triples().collect::<Vec<_>>() {
        if !s.ci(y, x, z) {
            v(Axiom::P2, vec![x, y, z]);
        }
        for w in 0..k {
            if s.leq(w, y) {
                if !s.ci(x, w, z) {
                    v(Axiom::P3, vec![x, y, z, w]);
                }
                if !s.ci(x, y, s.join(z, w)) {
                    v(Axiom::P4, vec![x, y, z, w]);
                }
            }
            if s.ci(x, w, s.join(y, z)) && !s.ci(x, s.join(y, w), z) {
                v(Axiom::P5, vec![x, y, z, w]);
            }
        }
    }
    if let (true, Some(meet)) = (strong, &s.meet) {
        for (x, y, z) in s.ci_triples().collect::<Vec<_>>() {
            if !s.leq(z, y) {
                continue;
            }
            for w in 0..k {
                if s.leq(w, y) && s.ci(x, y, w) && !s.ci(x, y, meet[z][w]) {
                    v(Axiom::P6, vec![x, y, z, w]);
                }
            }
        }
    }
    Ok(out)
}

/// Largest number of binary variables for [`separoid_from_joint`].
pub const MAX_JOINT_VARS: usize = 5;
pub const CI_TOL: f64 = 1e-9;

/// Separoid on subsets of `vars` (bitmask order), with union/intersection,
/// where `X _||_ Y | Z` iff `p(XYZ) p(Z) = p(XZ) p(YZ)` for all assignments.
/// `table[a]` is the probability of the assignment whose bit `v` is the
/// value of variable `v`.
pub fn separoid_from_joint(vars: &[&str], table: &[f64]) -> Result<Separoid, CausalError> {
    let n = vars.len();
    if n > MAX_JOINT_VARS {
        return Err(CausalError::Parameter(format!("at most {MAX_JOINT_VARS} variables supported")));
    }
    if table.len() != 1 << n {
        return Err(CausalError::Parameter(format!("table needs {} entries", 1 << n)));
    }
    if table.iter().any(|&p| !(p >= 0.0)) {
        return Err(CausalError::Parameter("probabilities must be nonnegative".into()));
    }
    let total: f64 = table.iter().sum();
    if (total - 1.0).abs() > CI_TOL {
        return Err(CausalError::NotNormalized(total));
    }
    let k = 1usize << n;
    // marg[mask][a & mask]
    let marg: Vec<Vec<f64>> = (0..k)
        .map(|mask| {
            let mut m = vec![0.0; k];
            for (a, &p) in table.iter().enumerate() {
                m[a & mask] += p;
            }
            m
        })
        .collect();
    let independent = |x: usize, y: usize, z: usize| {
        let u = x | y | z;
        (0..k).filter(|a| a & !u == 0).all(|a| {
            let lhs = marg[u][a] * marg[z][a & z];
            let rhs = marg[x | z][a & (x | z)] * marg[y | z][a & (y | z)];
            (lhs - rhs).abs() <= CI_TOL
        })
    };
    let mut ci = Vec::new();
    for x in 0..k {
        for y in 0..k {
            for z in 0..k {
                if independent(x, y, z) {
                    ci.push((x, y, z));
                }
            }
        }
    }
    let names = (0..k)
        .map(|m| {
            let parts: Vec<&str> = (0..n).filter(|v| m >> v & 1 == 1).map(|v| vars[v]).collect();
            format!("{{{}}}", parts.join(","))
        })
        .collect();
    Separoid::new(
        names,
        (0..k).map(|a| (0..k).map(|b| a & !b == 0).collect()).collect(),
        (0..k).map(|a| (0..k).map(|b| a | b).collect()).collect(),
        Some((0..k).map(|a| (0..k).map(|b| a & b).collect()).collect()),
        ci,
    )
}

/// Events and one genotype (set of events) per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenotypeDataset {
    pub events: Vec<String>,
    pub samples: Vec<String>,
    pub genotypes: Vec<BTreeSet<usize>>,
}

impl GenotypeDataset {
    pub fn new(events: Vec<String>, samples: Vec<String>, genotypes: Vec<BTreeSet<usize>>) -> Result<Self, CausalError> {
        if samples.len() != genotypes.len() {
            return Err(CausalError::Parameter("one sample name per genotype required".into()));
        }
        if let Some(g) = genotypes.iter().find(|g| g.iter().any(|&e| e >= events.len())) {
            return Err(CausalError::Parameter(format!("genotype {g:?} references an unknown event")));
        }
        Ok(Self { events, samples, genotypes })
    }

    /// Builds from `(sample, event)` pairs; events and samples keep first-seen order.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut events: Vec<String> = Vec::new();
        let mut samples: Vec<String> = Vec::new();
        let mut genotypes: Vec<BTreeSet<usize>> = Vec::new();
        for (s, e) in pairs {
            let si = samples.iter().position(|x| x == s).unwrap_or_else(|| {
                samples.push(s.to_string());
                genotypes.push(BTreeSet::new());
                samples.len() - 1
            });
            let ei = events.iter().position(|x| x == e).unwrap_or_else(|| {
                events.push(e.to_string());
                events.len() - 1
            });
            genotypes[si].insert(ei);
        }
        Self { events, samples, genotypes }
    }

    /// Wide CSV (header of event names, optional leading `sample` column,
    /// 0/1 cells) or long CSV (header `sample,event`).
    pub fn from_csv<R: Read>(input: R) -> Result<Self, CausalError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| CausalError::Csv { row: 0, column: String::new(), message: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        let lower: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
        let records = rdr
            .records()
            .enumerate()
            .map(|(i, r)| r.map_err(|e| CausalError::Csv { row: i + 1, column: String::new(), message: e.to_string() }))
            .collect::<Result<Vec<_>, _>>()?;
        if lower == ["sample", "event"] {
            let pairs: Vec<(String, String)> = records.iter().map(|r| (r[0].to_string(), r[1].to_string())).collect();
            if let Some(i) = pairs.iter().position(|(s, e)| s.is_empty() || e.is_empty()) {
                return Err(CausalError::Csv { row: i + 1, column: "event".into(), message: "empty field".into() });
            }
            return Ok(Self::from_pairs(pairs.iter().map(|(s, e)| (s.as_str(), e.as_str()))));
        }
        let named = matches!(lower.first().map(String::as_str), Some("sample" | "id" | "tumor"));
        let offset = usize::from(named);
        let events: Vec<String> = header[offset..].to_vec();
        if events.is_empty() {
            return Err(CausalError::Csv { row: 0, column: String::new(), message: "no event columns".into() });
        }
        let mut samples = Vec::new();
        let mut genotypes = Vec::new();
        for (i, rec) in records.iter().enumerate() {
            let row = i + 1;
            samples.push(if named { rec[0].to_string() } else { format!("s{row}") });
            let mut g = BTreeSet::new();
            for (e, name) in events.iter().enumerate() {
                match &rec[e + offset] {
                    "1" => {
                        g.insert(e);
                    }
                    "0" => {}
                    other => {
                        return Err(CausalError::Csv {
                            row,
                            column: name.clone(),
                            message: format!("cell {other:?} is not 0 or 1"),
                        })
                    }
                }
            }
            genotypes.push(g);
        }
        Self::new(events, samples, genotypes)
    }

    pub fn event_index(&self, name: &str) -> Option<usize> {
        self.events.iter().position(|e| e == name)
    }
}

/// The four tumours of the pancreatic-cancer fragment.
pub fn pancreatic_fixture() -> GenotypeDataset {
    GenotypeDataset::from_pairs([
        ("Pa017C", "KRAS"),
        ("Pa017C", "TP53"),
        ("Pa019C", "KRAS"),
        ("Pa022C", "KRAS"),
        ("Pa022C", "SMAD4"),
        ("Pa022C", "TP53"),
        ("Pa032X", "CDKN2A"),
    ])
}

/// Decides whether `f` belongs to `F_e`, the ancestors of `e`.
pub trait AncestorOracle {
    fn is_ancestor(&self, data: &GenotypeDataset, f: usize, e: usize) -> bool;
}

/// `f` is an ancestor of `e` when at most a fraction `epsilon` of the
/// genotypes containing `e` lack `f`. Vacuously true for unobserved `e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportOracle {
    pub epsilon: f64,
}

impl SupportOracle {
    pub fn new(epsilon: f64) -> Result<Self, CausalError> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(CausalError::Parameter(format!("epsilon {epsilon} must lie in [0, 1)")));
        }
        Ok(Self { epsilon })
    }
}

impl AncestorOracle for SupportOracle {
    fn is_ancestor(&self, data: &GenotypeDataset, f: usize, e: usize) -> bool {
        let with_e = data.genotypes.iter().filter(|g| g.contains(&e));
        let (total, missing) = with_e.fold((0usize, 0usize), |(t, m), g| (t + 1, m + usize::from(!g.contains(&f))));
        missing as f64 <= self.epsilon * total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscoveredPoset {
    pub events: Vec<String>,
    /// Oracle output before closure: `ancestors[e]` is `F_e` (excluding `e`).
    pub ancestors: Vec<Vec<usize>>,
    /// Reflexive-transitive closure; `leq[f][e]` reads "f no later than e".
    pub leq: Vec<Vec<bool>>,
    /// Classes of mutually ancestral events, in order of first member.
    pub tie_classes: Vec<Vec<usize>>,
}

/// Builds `F_e` for every event with `oracle`, orients ancestors before
/// descendants, closes transitively and merges cycles into tie classes.
pub fn discover_poset(data: &GenotypeDataset, oracle: &dyn AncestorOracle) -> Result<DiscoveredPoset, CausalError> {
    if data.genotypes.is_empty() || data.events.is_empty() {
        return Err(CausalError::Empty);
    }
    let n = data.events.len();
    let ancestors: Vec<Vec<usize>> =
        (0..n).map(|e| (0..n).filter(|&f| f != e && oracle.is_ancestor(data, f, e)).collect()).collect();
    let mut leq = vec![vec![false; n]; n];
    for e in 0..n {
        leq[e][e] = true;
        for &f in &ancestors[e] {
            leq[f][e] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if leq[i][k] {
                for j in 0..n {
                    if leq[k][j] {
                        leq[i][j] = true;
                    }
                }
            }
        }
    }
    let mut class_of = vec![usize::MAX; n];
    let mut tie_classes: Vec<Vec<usize>> = Vec::new();
    for e in 0..n {
        if class_of[e] == usize::MAX {
            let members: Vec<usize> = (e..n).filter(|&f| leq[e][f] && leq[f][e]).collect();
            for &m in &members {
                class_of[m] = tie_classes.len();
            }
            tie_classes.push(members);
        }
    }
    Ok(DiscoveredPoset { events: data.events.clone(), ancestors, leq, tie_classes })
}

impl DiscoveredPoset {
    /// Strictly earlier: `a <= b` and not `b <= a`.
    pub fn less(&self, a: usize, b: usize) -> bool {
        self.leq[a][b] && !self.leq[b][a]
    }

    pub fn comparable(&self, a: usize, b: usize) -> bool {
        self.leq[a][b] || self.leq[b][a]
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.events.iter().position(|e| e == name)
    }

    pub fn class_label(&self, c: usize) -> String {
        self.tie_classes[c].iter().map(|&e| self.events[e].as_str()).collect::<Vec<_>>().join("|")
    }

    /// Hasse diagram on tie classes: `(a, b)` for covering pairs `a < b`.
    pub fn transitive_reduction(&self) -> Vec<(usize, usize)> {
        let reps: Vec<usize> = self.tie_classes.iter().map(|c| c[0]).collect();
        let k = reps.len();
        let lt = |a: usize, b: usize| self.less(reps[a], reps[b]);
        let mut edges = Vec::new();
        for a in 0..k {
            for b in 0..k {
                if lt(a, b) && !(0..k).any(|c| lt(a, c) && lt(c, b)) {
                    edges.push((a, b));
                }
            }
        }
        edges
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph poset {\n  rankdir=LR;\n");
        for c in 0..self.tie_classes.len() {
            let _ = writeln!(out, "  c{c} [label=\"{}\"];", self.class_label(c));
        }
        for (a, b) in self.transitive_reduction() {
            let _ = writeln!(out, "  c{a} -> c{b};");
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> Value {
        let classes: Vec<String> = (0..self.tie_classes.len()).map(|c| self.class_label(c)).collect();
        let edges: Vec<Value> = self
            .transitive_reduction()
            .into_iter()
            .map(|(a, b)| serde_json::json!([classes[a], classes[b]]))
            .collect();
        let order: Vec<Value> = (0..self.events.len())
            .flat_map(|a| (0..self.events.len()).map(move |b| (a, b)))
            .filter(|&(a, b)| self.less(a, b))
            .map(|(a, b)| serde_json::json!([self.events[a], self.events[b]]))
            .collect();
        serde_json::json!({
            "events": self.events,
            "tie_classes": classes,
            "less": order,
            "hasse": edges,
        })
    }
}

/// Random partial order on `n` events: `leq[a][b]` with `a <= b` only
/// for `a < b` in index order (edge probability `p`), transitively closed.
pub fn random_poset<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<Vec<bool>> {
    let mut leq = vec![vec![false; n]; n];
    for a in 0..n {
        leq[a][a] = true;
        for b in a + 1..n {
            leq[a][b] = rng.random_bool(p);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if leq[i][k] && leq[k][j] {
                    leq[i][j] = true;
                }
            }
        }
    }
    leq
}

/// Genotypes that are order ideals of `leq`: the down-closure of a random
/// subset of events per sample.
pub fn synthetic_genotypes<R: Rng + ?Sized>(leq: &[Vec<bool>], samples: usize, rng: &mut R) -> GenotypeDataset {
    let n = leq.len();
    let genotypes: Vec<BTreeSet<usize>> = (0..samples)
        .map(|_| {
            let picked: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
            (0..n).filter(|&f| picked.iter().any(|&e| leq[f][e])).collect()
        })
        .collect();
    GenotypeDataset {
        events: (0..n).map(|e| format!("e{e}")).collect(),
        samples: (0..samples).map(|s| format!("s{s}")).collect(),
        genotypes,
    }
}
