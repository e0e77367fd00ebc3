//! Diversity-based representation of Moore environments.
//!
//! A test `t = a p` is an action string followed by a predicate; it succeeds
//! in `q` when `gamma(q a, p)` holds. Two tests are equivalent when they
//! agree in every state. The equivalence classes, with edges `[t] -b-> [bt]`,
//! form an automaton that simulates the environment through
//! `(q b) t = q (b t)`.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiversityError {
    #[error("invalid environment: {0}")]
    Env(String),
    #[error("register size n={0} must lie in 1..=20")]
    Size(usize),
    #[error("cannot parse test {0:?}")]
    Test(String),
    #[error("initial values match no state of the environment")]
    Inconsistent,
    #[error("no reduced environment found after {0} attempts")]
    Exhausted(usize),
}

/// `E = (Q, B, P, q0, delta, gamma)` with indexed states, actions and predicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MooreEnv {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub predicates: Vec<String>,
    pub q0: usize,
    /// `delta[q][b]`.
    pub delta: Vec<Vec<usize>>,
    /// `gamma[q][p]`.
    pub gamma: Vec<Vec<bool>>,
}

impl MooreEnv {
    pub fn new(
        states: Vec<String>,
        actions: Vec<String>,
        predicates: Vec<String>,
        q0: usize,
        delta: Vec<Vec<usize>>,
        gamma: Vec<Vec<bool>>,
    ) -> Result<Self, DiversityError> {
        let n = states.len();
        if n == 0 {
            return Err(DiversityError::Env("at least one state required".into()));
        }
        if q0 >= n {
            return Err(DiversityError::Env(format!("initial state {q0} out of range")));
        }
        if delta.len() != n || gamma.len() != n {
            return Err(DiversityError::Env("delta and gamma need one row per state".into()));
        }
        for (q, row) in delta.iter().enumerate() {
            if row.len() != actions.len() || row.iter().any(|&t| t >= n) {
                return Err(DiversityError::Env(format!("delta row {q} is not a total map into the states")));
            }
        }
        for (q, row) in gamma.iter().enumerate() {
            if row.len() != predicates.len() {
                return Err(DiversityError::Env(format!("gamma row {q} needs one entry per predicate")));
            }
        }
        Ok(Self { states, actions, predicates, q0, delta, gamma })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn step(&self, q: usize, b: usize) -> usize {
        self.delta[q][b]
    }

    /// Explicit tables `{"states","actions","predicates","q0","delta","gamma"}`
    /// (`q0` by name or index, `delta` entries by name or index), or a
    /// builder `{"builder": "register:n=3"}`.
    pub fn from_json(v: &Value) -> Result<Self, DiversityError> {
        if let Some(b) = v.get("builder") {
            let spec = b.as_str().ok_or_else(|| DiversityError::Env("\"builder\" must be a string".into()))?;
            return from_builder(spec);
        }
        let err = |m: &str| DiversityError::Env(m.to_string());
        let names = |key: &str| -> Result<Vec<String>, DiversityError> {
            v.get(key)
                .and_then(Value::as_array)
                .ok_or_else(|| err(&format!("missing array \"{key}\"")))?
                .iter()
                .map(|x| x.as_str().map(str::to_string).ok_or_else(|| err(&format!("\"{key}\" entries must be strings"))))
                .collect()
        };
        let states = names("states")?;
        let actions = names("actions")?;
        let predicates = names("predicates")?;
        let state_ref = |x: &Value| -> Result<usize, DiversityError> {
            match x {
                Value::Number(n) => n.as_u64().map(|i| i as usize).ok_or_else(|| err("state index must be a natural number")),
                Value::String(s) => states.iter().position(|t| t == s).ok_or_else(|| err(&format!("unknown state {s:?}"))),
                _ => Err(err("state must be a name or an index")),
            }
        };
        let q0 = match v.get("q0") {
            Some(x) => state_ref(x)?,
            None => 0,
        };
        let rows = |key: &str| -> Result<&Vec<Value>, DiversityError> {
            v.get(key).and_then(Value::as_array).ok_or_else(|| err(&format!("missing array \"{key}\"")))
        };
        let delta = rows("delta")?
            .iter()
            .map(|r| {
                r.as_array().ok_or_else(|| err("delta rows must be arrays"))?.iter().map(state_ref).collect()
            })
            .collect::<Result<Vec<Vec<usize>>, _>>()?;
        let gamma = rows("gamma")?
            .iter()
            .map(|r| {
                r.as_array()
                    .ok_or_else(|| err("gamma rows must be arrays"))?
                    .iter()
                    .map(|b| b.as_bool().ok_or_else(|| err("gamma entries must be booleans")))
                    .collect()
            })
            .collect::<Result<Vec<Vec<bool>>, _>>()?;
        Self::new(states, actions, predicates, q0, delta, gamma)
    }

    pub fn to_json(&self) -> Value {
        serde_json::json!({
            "states": self.states,
            "actions": self.actions,
            "predicates": self.predicates,
            "q0": self.q0,
            "delta": self.delta,
            "gamma": self.gamma,
        })
    }
}

/// Parses builder specs such as `register:n=3` (or `register:3`).
pub fn from_builder(spec: &str) -> Result<MooreEnv, DiversityError> {
    let bad = || DiversityError::Env(format!("unknown builder {spec:?} (expected register:n=<k>)"));
    let rest = spec.trim().strip_prefix("register:").ok_or_else(bad)?.trim();
    let n = rest.strip_prefix("n=").unwrap_or(rest).parse::<usize>().map_err(|_| bad())?;
    make_register_env(n)
}

/// Largest register handled (2^20 states).
pub const MAX_REGISTER_BITS: usize = 20;

/// `n`-bit register with rotate-left `L`, rotate-right `R`, flip-leftmost
/// `F` and the predicate `1` ("leftmost bit is set"). States are named by
/// their bit strings, leftmost first; `q0` is all zeros.
pub fn make_register_env(n: usize) -> Result<MooreEnv, DiversityError> {
    if n == 0 || n > MAX_REGISTER_BITS {
        return Err(DiversityError::Size(n));
    }
    let size = 1usize << n;
    let mask = size - 1;
    let top = 1usize << (n - 1);
    let delta = (0..size)
        .map(|x| vec![((x << 1) | (x >> (n - 1))) & mask, (x >> 1) | ((x & 1) << (n - 1)), x ^ top])
        .collect();
    let gamma = (0..size).map(|x| vec![x & top != 0]).collect();
    MooreEnv::new(
        (0..size).map(|x| format!("{x:0n$b}")).collect(),
        vec!["L".into(), "R".into(), "F".into()],
        vec!["1".into()],
        0,
        delta,
        gamma,
    )
}

/// Action string followed by a predicate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Test {
    pub actions: Vec<usize>,
    pub predicate: usize,
}

impl Test {
    /// Parses names written back to back (`"LF1"`), matching the longest
    /// action name first; the remainder must be a predicate name.
    pub fn parse(env: &MooreEnv, s: &str) -> Result<Self, DiversityError> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut rest = s.as_str();
        let mut actions = Vec::new();
        loop {
            if let Some(p) = env.predicates.iter().position(|p| p == rest) {
                return Ok(Test { actions, predicate: p });
            }
            let best = env
                .actions
                .iter()
                .enumerate()
                .filter(|(_, a)| !a.is_empty() && rest.starts_with(a.as_str()))
                .max_by_key(|(_, a)| a.len());
            match best {
                Some((b, a)) => {
                    actions.push(b);
                    rest = &rest[a.len()..];
                }
                None => return Err(DiversityError::Test(s.clone())),
            }
        }
    }

    pub fn render(&self, env: &MooreEnv) -> String {
        let mut out: String = self.actions.iter().map(|&b| env.actions[b].as_str()).collect();
        out.push_str(&env.predicates[self.predicate]);
        out
    }
}

/// Whether test `t` succeeds in state `q`.
pub fn test_value(env: &MooreEnv, q: usize, t: &Test) -> bool {
    let end = t.actions.iter().fold(q, |s, &b| env.step(s, b));
    env.gamma[end][t.predicate]
}

/// Packed truth table `Q -> bool`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ValueVector(Vec<u64>);

impl ValueVector {
    fn from_fn(n: usize, f: impl Fn(usize) -> bool) -> Self {
        let mut words = vec![0u64; n.div_ceil(64)];
        for q in 0..n {
            if f(q) {
                words[q / 64] |= 1 << (q % 64);
            }
        }
        ValueVector(words)
    }

    pub fn get(&self, q: usize) -> bool {
        self.0[q / 64] >> (q % 64) & 1 == 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestClass {
    pub values: ValueVector,
    pub representative: Test,
}

/// Test classes with the update graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiversityAutomaton {
    pub num_states: usize,
    pub classes: Vec<TestClass>,
    /// `edges[c][b]` is the class of `b t` for `t` in class `c`.
    pub edges: Vec<Vec<usize>>,
    /// Class of the bare predicate `p`.
    pub predicate_classes: Vec<usize>,
}

/// Closure of the bare predicates under prepending actions.
pub fn compute_classes(env: &MooreEnv) -> DiversityAutomaton {
    let n = env.num_states();
    let mut classes: Vec<TestClass> = Vec::new();
    let mut index: HashMap<ValueVector, usize> = HashMap::new();
    let mut intern = |classes: &mut Vec<TestClass>, values: ValueVector, t: Test| -> usize {
        if let Some(&c) = index.get(&values) {
            return c;
        }
        index.insert(values.clone(), classes.len());
        classes.push(TestClass { values, representative: t });
        classes.len() - 1
    };
    let predicate_classes: Vec<usize> = (0..env.predicates.len())
        .map(|p| {
            let values = ValueVector::from_fn(n, |q| env.gamma[q][p]);
            intern(&mut classes, values, Test { actions: Vec::new(), predicate: p })
        })
        .collect();
    let mut edges: Vec<Vec<usize>> = Vec::new();
    let mut next = 0;
    while next < classes.len() {
        let mut row = Vec::with_capacity(env.actions.len());
        for b in 0..env.actions.len() {
            let src = classes[next].values.clone();
            let values = ValueVector::from_fn(n, |q| src.get(env.step(q, b)));
            let mut t = classes[next].representative.clone();
            t.actions.insert(0, b);
            row.push(intern(&mut classes, values, t));
        }
        edges.push(row);
        next += 1;
    }
    DiversityAutomaton { num_states: n, classes, edges, predicate_classes }
}

/// `D(E)`, the number of test classes.
pub fn diversity(env: &MooreEnv) -> usize {
    compute_classes(env).classes.len()
}

/// True iff distinct states are distinguished by some test.
pub fn is_reduced(env: &MooreEnv) -> bool {
    let da = compute_classes(env);
    let mut seen = std::collections::HashSet::new();
    (0..env.num_states()).all(|q| seen.insert(da.signature(q)))
}

/// `(log2 |Q|, D, 2^|Q|)`; the upper bound saturates at `f64::INFINITY`.
pub fn diversity_bounds(env: &MooreEnv) -> (f64, usize, f64) {
    let n = env.num_states();
    (((n as f64).log2()), diversity(env), 2f64.powi(n.min(1100) as i32))
}

impl DiversityAutomaton {
    /// Value of every class in state `q`.
    pub fn signature(&self, q: usize) -> Vec<bool> {
        self.classes.iter().map(|c| c.values.get(q)).collect()
    }

    /// Class values in `q`, as the initial condition of [`Self::simulate`].
    pub fn initial_values(&self, q: usize) -> Vec<bool> {
        self.signature(q)
    }

    /// Runs `actions` from the given class values and returns the predicate
    /// values after each action.
    pub fn simulate(&self, init: &[bool], actions: &[usize]) -> Result<Vec<Vec<bool>>, DiversityError> {
        if init.len() != self.classes.len() || !(0..self.num_states).any(|q| self.signature(q) == init) {
            return Err(DiversityError::Inconsistent);
        }
        let mut cur = init.to_vec();
        let mut out = Vec::with_capacity(actions.len());
        for &b in actions {
            if b >= self.edges.first().map_or(0, Vec::len) {
                return Err(DiversityError::Test(format!("action index {b}")));
            }
            cur = self.edges.iter().map(|row| cur[row[b]]).collect();
            out.push(self.predicate_classes.iter().map(|&c| cur[c]).collect());
        }
        Ok(out)
    }

    pub fn to_json(&self, env: &MooreEnv) -> Value {
        let classes: Vec<Value> = self
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let values: String = (0..self.num_states).map(|q| if c.values.get(q) { '1' } else { '0' }).collect();
                let edges: serde_json::Map<String, Value> = env
                    .actions
                    .iter()
                    .enumerate()
                    .map(|(b, name)| (name.clone(), Value::from(self.edges[i][b])))
                    .collect();
                serde_json::json!({ "id": i, "test": c.representative.render(env), "values": values, "edges": edges })
            })
            .collect();
        let predicates: serde_json::Map<String, Value> = env
            .predicates
            .iter()
            .zip(&self.predicate_classes)
            .map(|(p, &c)| (p.clone(), Value::from(c)))
            .collect();
        serde_json::json!({ "diversity": self.classes.len(), "states": self.num_states, "classes": classes, "predicates": predicates })
    }
}

/// Ground truth predicate values of `env` after each action from `q`.
pub fn run_env(env: &MooreEnv, q: usize, actions: &[usize]) -> Vec<Vec<bool>> {
    let mut s = q;
    actions
        .iter()
        .map(|&b| {
            s = env.step(s, b);
            env.gamma[s].clone()
        })
        .collect()
}

/// Uniformly random tables.
pub fn random_env<R: Rng + ?Sized>(states: usize, actions: usize, predicates: usize, rng: &mut R) -> MooreEnv {
    let delta = (0..states).map(|_| (0..actions).map(|_| rng.random_range(0..states)).collect()).collect();
    let gamma = (0..states).map(|_| (0..predicates).map(|_| rng.random_bool(0.5)).collect()).collect();
    MooreEnv::new(
        (0..states).map(|q| format!("q{q}")).collect(),
        (0..actions).map(|b| format!("b{b}")).collect(),
        (0..predicates).map(|p| format!("p{p}")).collect(),
        0,
        delta,
        gamma,
    )
    .expect("generated tables are total")
}

/// Rejection-samples a reduced random environment.
pub fn random_reduced_env<R: Rng + ?Sized>(
    states: usize,
    actions: usize,
    predicates: usize,
    rng: &mut R,
    max_attempts: usize,
) -> Result<MooreEnv, DiversityError> {
    for _ in 0..max_attempts {
        let env = random_env(states, actions, predicates, rng);
        if is_reduced(&env) {
            return Ok(env);
        }
    }
    Err(DiversityError::Exhausted(max_attempts))
}

impl fmt::Display for DiversityAutomaton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} classes over {} states", self.classes.len(), self.num_states)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn register_tests_from_101() {
        let env = make_register_env(3).unwrap();
        let q = env.states.iter().position(|s| s == "101").unwrap();
        for t in ["1", "LF1", "R1"] {
            assert!(test_value(&env, q, &Test::parse(&env, t).unwrap()), "{t}");
        }
        assert!(!test_value(&env, q, &Test::parse(&env, "F1").unwrap()));
        assert!(Test::parse(&env, "X1").is_err());
        assert_eq!(Test::parse(&env, "LF1").unwrap().render(&env), "LF1");
    }

    #[test]
    fn register_transitions() {
        let env = make_register_env(3).unwrap();
        let id = |s: &str| env.states.iter().position(|x| x == s).unwrap();
        assert_eq!(env.states[env.step(id("101"), 0)], "011");
        assert_eq!(env.states[env.step(id("101"), 1)], "110");
        assert_eq!(env.states[env.step(id("101"), 2)], "001");
        assert_eq!(env.states[env.q0], "000");
    }

    #[test]
    fn register_diversity_is_2n() {
        for n in 1..=5 {
            let env = make_register_env(n).unwrap();
            assert_eq!(env.num_states(), 1 << n);
            assert_eq!(diversity(&env), 2 * n);
            assert!(is_reduced(&env));
        }
        assert_eq!(make_register_env(0), Err(DiversityError::Size(0)));
        assert_eq!(make_register_env(21), Err(DiversityError::Size(21)));
    }

    #[test]
    fn single_state_and_duplicate_state() {
        let one = MooreEnv::new(vec!["q".into()], vec!["a".into()], vec!["p".into()], 0, vec![vec![0]], vec![vec![true]])
            .unwrap();
        assert_eq!(diversity(&one), 1);
        assert!(is_reduced(&one));
        let dup = MooreEnv::new(
            vec!["x".into(), "y".into()],
            vec!["a".into()],
            vec!["p".into()],
            0,
            vec![vec![1], vec![0]],
            vec![vec![true], vec![true]],
        )
        .unwrap();
        assert!(!is_reduced(&dup));
    }

    #[test]
    fn exhaustive_two_bit_simulation() {
        let env = make_register_env(2).unwrap();
        let da = compute_classes(&env);
        for q in 0..4 {
            let init = da.initial_values(q);
            assert!(da.simulate(&init, &[]).unwrap().is_empty());
            for k in 0..=4u32 {
                for code in 0..3usize.pow(k) {
                    let actions: Vec<usize> = (0..k).map(|i| code / 3usize.pow(i) % 3).collect();
                    assert_eq!(da.simulate(&init, &actions).unwrap(), run_env(&env, q, &actions));
                }
            }
        }
    }

    #[test]
    fn inconsistent_initial_values() {
        let env = make_register_env(2).unwrap();
        let da = compute_classes(&env);
        // bit i and its negation cannot both hold
        assert_eq!(da.simulate(&[true; 4], &[0]), Err(DiversityError::Inconsistent));
        assert_eq!(da.simulate(&[true], &[0]), Err(DiversityError::Inconsistent));
    }

    #[test]
    fn random_reduced_envs_respect_bounds() {
        let mut rng = stream_rng(5, 0);
        for _ in 0..20 {
            let env = random_reduced_env(4, 2, 1, &mut rng, 10_000).unwrap();
            let (lo, d, hi) = diversity_bounds(&env);
            assert!(lo <= d as f64 && d as f64 <= hi);
        }
    }

    #[test]
    fn json_forms() {
        let env = from_builder("register:n=2").unwrap();
        assert_eq!(MooreEnv::from_json(&env.to_json()).unwrap(), env);
        assert_eq!(MooreEnv::from_json(&serde_json::json!({"builder": "register:n=3"})).unwrap().num_states(), 8);
        assert!(from_builder("ring:n=2").is_err());
        let da = compute_classes(&env);
        let j = da.to_json(&env);
        assert_eq!(j["diversity"], 4);
        assert_eq!(j["classes"][0]["test"], "1");
    }
}
