//! Loading and schema checks for every input file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use equigame::causal::{separoid_from_joint, CausalError, GenotypeDataset, Separoid};
use equigame::coalgebra::{CoalgebraError, Lts, Mdp, StateRelation};
use equigame::diversity::{from_builder, MooreEnv};
use equigame::metricyoneda::{GenMetricSpace, Weight};
use equigame::netecon::{paper_instance, NetworkEconomyModel};
use equigame::vi::{AffineViSpec, ViProblem};
use num_rational::Ratio;
use serde_json::Value;

use crate::args::{BisimCmd, Cli, Command, DiversityCmd, EnvArgs, ModelArgs, NeteconCmd, PosetCmd, SeparoidCmd, ViCmd, YonedaCmd};

/// A problem with one input: the file, a location inside it and what is wrong.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub file: String,
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(file: &Path, path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { file: file.display().to_string(), path: path.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}: {}", self.file, self.message)
        } else {
            write!(f, "{}: {}: {}", self.file, self.path, self.message)
        }
    }
}

fn read(file: &Path) -> Result<String, Diagnostic> {
    fs::read_to_string(file).map_err(|e| Diagnostic::new(file, "", format!("cannot read: {e}")))
}

pub fn load_json(file: &Path) -> Result<Value, Diagnostic> {
    serde_json::from_str(&read(file)?).map_err(|e| {
        Diagnostic::new(file, format!("line {}, column {}", e.line(), e.column()), format!("invalid JSON: {e}"))
    })
}

fn coalgebra_diag(file: &Path, e: CoalgebraError) -> Diagnostic {
    let CoalgebraError::Validation { path, message } = e;
    Diagnostic::new(file, path, message)
}

pub fn load_lts(file: &Path) -> Result<Lts, Diagnostic> {
    Lts::from_json(&load_json(file)?).map_err(|e| coalgebra_diag(file, e))
}

pub fn load_mdp(file: &Path) -> Result<Mdp, Diagnostic> {
    Mdp::from_json(&load_json(file)?).map_err(|e| coalgebra_diag(file, e))
}

fn is_mdp(file: &Path) -> Result<bool, Diagnostic> {
    Ok(load_json(file)?.get("P").is_some())
}

/// `[["s", "t"], ...]` by state name.
pub fn load_relation(file: &Path, l1: &Lts, l2: &Lts) -> Result<StateRelation, Diagnostic> {
    let v = load_json(file)?;
    let rows = v.as_array().ok_or_else(|| Diagnostic::new(file, "", "expected an array of [left, right] pairs"))?;
    let mut pairs = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        let names: Vec<&str> = row.as_array().map(|r| r.iter().filter_map(Value::as_str).collect()).unwrap_or_default();
        if names.len() != 2 {
            return Err(Diagnostic::new(file, format!("/{k}"), "expected a pair of state names"));
        }
        let s = l1.state_index(names[0]).ok_or_else(|| {
            Diagnostic::new(file, format!("/{k}/0"), format!("unknown state {:?} of the left system", names[0]))
        })?;
        let t = l2.state_index(names[1]).ok_or_else(|| {
            Diagnostic::new(file, format!("/{k}/1"), format!("unknown state {:?} of the right system", names[1]))
        })?;
        pairs.push((s, t));
    }
    StateRelation::new(l1.num_states(), l2.num_states(), pairs).map_err(|e| coalgebra_diag(file, e))
}

pub type MdpMaps = (Vec<usize>, Vec<BTreeMap<usize, usize>>);

/// `{"f": {"s": "s'"}, "g": {"s": {"a": "a'"}}}` by name.
pub fn load_mdp_maps(file: &Path, m1: &Mdp, m2: &Mdp) -> Result<MdpMaps, Diagnostic> {
    let v = load_json(file)?;
    let state = |m: &Mdp, name: &str| (0..m.num_states()).find(|&s| m.state_name(s) == name);
    let action = |m: &Mdp, name: &str| (0..m.num_actions()).find(|&a| m.action_name(a) == name);
    let fmap = v.get("f").and_then(Value::as_object).ok_or_else(|| Diagnostic::new(file, "/f", "missing object"))?;
    let mut f = vec![usize::MAX; m1.num_states()];
    for (k, target) in fmap {
        let s = state(m1, k).ok_or_else(|| Diagnostic::new(file, format!("/f/{k}"), "unknown source state"))?;
        let t = target.as_str().and_then(|t| state(m2, t));
        f[s] = t.ok_or_else(|| Diagnostic::new(file, format!("/f/{k}"), "unknown target state"))?;
    }
    if let Some(s) = f.iter().position(|&t| t == usize::MAX) {
        return Err(Diagnostic::new(file, "/f", format!("state {:?} is not mapped", m1.state_name(s))));
    }
    let gmap = v.get("g").and_then(Value::as_object).ok_or_else(|| Diagnostic::new(file, "/g", "missing object"))?;
    let mut g = vec![BTreeMap::new(); m1.num_states()];
    for (k, inner) in gmap {
        let s = state(m1, k).ok_or_else(|| Diagnostic::new(file, format!("/g/{k}"), "unknown state"))?;
        let inner = inner.as_object().ok_or_else(|| Diagnostic::new(file, format!("/g/{k}"), "expected an object"))?;
        for (a, b) in inner {
            let ai = action(m1, a).ok_or_else(|| Diagnostic::new(file, format!("/g/{k}/{a}"), "unknown action"))?;
            let bi = b
                .as_str()
                .and_then(|b| action(m2, b))
                .ok_or_else(|| Diagnostic::new(file, format!("/g/{k}/{a}"), "unknown image action"))?;
            g[s].insert(ai, bi);
        }
    }
    Ok((f, g))
}

pub fn load_affine(file: &Path) -> Result<ViProblem, Diagnostic> {
    let v = load_json(file)?;
    let spec: AffineViSpec = serde_json::from_value(v).map_err(|e| Diagnostic::new(file, "", e.to_string()))?;
    spec.to_problem().map_err(|e| Diagnostic::new(file, "", e.to_string()))
}

pub fn load_model(args: &ModelArgs) -> Result<NetworkEconomyModel, Diagnostic> {
    match &args.model {
        Some(file) => {
            NetworkEconomyModel::from_json(&load_json(file)?).map_err(|e| Diagnostic::new(file, "", e.to_string()))
        }
        None => Ok(paper_instance()),
    }
}

pub fn load_env(args: &EnvArgs) -> Result<MooreEnv, Diagnostic> {
    match (&args.env, &args.env_file) {
        (Some(spec), _) => from_builder(spec).map_err(|e| Diagnostic::new(Path::new("--env"), "", e.to_string())),
        (None, Some(file)) => MooreEnv::from_json(&load_json(file)?).map_err(|e| Diagnostic::new(file, "", e.to_string())),
        (None, None) => unreachable!("clap requires one of --env, --env-file"),
    }
}

pub fn load_space<T: Weight>(file: &Path) -> Result<GenMetricSpace<T>, Diagnostic> {
    GenMetricSpace::from_json(&load_json(file)?).map_err(|e| Diagnostic::new(file, "", e.to_string()))
}

pub fn load_separoid(file: &Path) -> Result<Separoid, Diagnostic> {
    let v = load_json(file)?;
    let diag = |path: &str, msg: String| Diagnostic::new(file, path, msg);
    if let Some(joint) = v.get("joint") {
        let vars: Vec<&str> = joint
            .get("vars")
            .and_then(Value::as_array)
            .ok_or_else(|| diag("/joint/vars", "missing array".into()))?
            .iter()
            .map(|x| x.as_str().ok_or_else(|| diag("/joint/vars", "names must be strings".into())))
            .collect::<Result<_, _>>()?;
        let table: Vec<f64> = joint
            .get("table")
            .and_then(Value::as_array)
            .ok_or_else(|| diag("/joint/table", "missing array".into()))?
            .iter()
            .enumerate()
            .map(|(i, x)| x.as_f64().ok_or_else(|| diag(&format!("/joint/table/{i}"), "expected a number".into())))
            .collect::<Result<_, _>>()?;
        return separoid_from_joint(&vars, &table).map_err(|e| diag("/joint", e.to_string()));
    }
    let names: Vec<String> = v
        .get("elements")
        .and_then(Value::as_array)
        .ok_or_else(|| diag("/elements", "missing array".into()))?
        .iter()
        .map(|x| x.as_str().map(str::to_string).ok_or_else(|| diag("/elements", "names must be strings".into())))
        .collect::<Result<_, _>>()?;
    let k = names.len();
    let index = |x: &Value, path: String| -> Result<usize, Diagnostic> {
        x.as_str()
            .and_then(|s| names.iter().position(|n| n == s))
            .ok_or_else(|| Diagnostic::new(file, path, format!("unknown element {x}")))
    };
    let tuples = |key: &str, arity: usize| -> Result<Vec<Vec<usize>>, Diagnostic> {
        v.get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| diag(&format!("/{key}"), "missing array".into()))?
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let row = row.as_array().filter(|r| r.len() == arity).ok_or_else(|| {
                    Diagnostic::new(file, format!("/{key}/{i}"), format!("expected {arity} element names"))
                })?;
                row.iter().enumerate().map(|(j, x)| index(x, format!("/{key}/{i}/{j}"))).collect()
            })
            .collect()
    };
    let table = |key: &str| -> Result<Vec<Vec<usize>>, Diagnostic> {
        let rows = tuples(key, k)?;
        if rows.len() != k {
            return Err(diag(&format!("/{key}"), format!("expected {k} rows")));
        }
        Ok(rows)
    };
    let mut leq = vec![vec![false; k]; k];
    for p in tuples("leq", 2)? {
        leq[p[0]][p[1]] = true;
    }
    let join = table("join")?;
    let meet = if v.get("meet").is_some() { Some(table("meet")?) } else { None };
    let ci = tuples("ci", 3)?.into_iter().map(|t| (t[0], t[1], t[2]));
    let s = Separoid::new(names.clone(), leq, join, meet, ci).map_err(|e| diag("", e.to_string()))?;
    s.check_structure().map_err(|e| diag("", e.to_string()))?;
    Ok(s)
}

pub fn load_genotypes(file: &Path) -> Result<GenotypeDataset, Diagnostic> {
    GenotypeDataset::from_csv(read(file)?.as_bytes()).map_err(|e| match e {
        CausalError::Csv { row, column, message } if row > 0 => {
            Diagnostic::new(file, format!("row {row}, column {column:?}"), message)
        }
        other => Diagnostic::new(file, "", other.to_string()),
    })
}

fn collect<T>(out: &mut Vec<Diagnostic>, r: Result<T, Diagnostic>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(d) => {
            out.push(d);
            None
        }
    }
}

/// Schema-checks every input file named by `cli`, without running anything.
pub fn validate_inputs(cli: &Cli) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    match &cli.command {
        Command::Vi(ViCmd::Solve { input, .. }) => {
            collect(&mut out, load_affine(input));
        }
        Command::Netecon(NeteconCmd::Solve { model, .. } | NeteconCmd::Evolve { model, .. }) => {
            collect(&mut out, load_model(model));
        }
        Command::Moran(_) | Command::Evolve(_) => {}
        Command::Bisim(BisimCmd::Check { left, right, relation, map }) => {
            match collect(&mut out, is_mdp(left)) {
                Some(true) => {
                    let m1 = collect(&mut out, load_mdp(left));
                    let m2 = collect(&mut out, load_mdp(right));
                    match (m1, m2, map) {
                        (Some(m1), Some(m2), Some(map)) => {
                            collect(&mut out, load_mdp_maps(map, &m1, &m2));
                        }
                        (_, _, None) => out.push(Diagnostic::new(left, "", "MDP inputs need --map")),
                        _ => {}
                    }
                }
                Some(false) => {
                    let l1 = collect(&mut out, load_lts(left));
                    let l2 = collect(&mut out, load_lts(right));
                    match (l1, l2, relation) {
                        (Some(l1), Some(l2), Some(rel)) => {
                            collect(&mut out, load_relation(rel, &l1, &l2));
                        }
                        (_, _, None) => out.push(Diagnostic::new(left, "", "LTS inputs need --relation")),
                        _ => {}
                    }
                }
                None => {}
            }
        }
        Command::Bisim(BisimCmd::Greatest { left, right }) => {
            collect(&mut out, load_lts(left));
            collect(&mut out, load_lts(right));
        }
        Command::Diversity(DiversityCmd::Build { env } | DiversityCmd::Simulate { env, .. }) => {
            collect(&mut out, load_env(env));
        }
        Command::Yoneda(YonedaCmd::Check { space, exact }) => {
            if *exact {
                collect(&mut out, load_space::<Ratio<i64>>(space));
            } else {
                collect(&mut out, load_space::<f64>(space));
            }
        }
        Command::Separoid(SeparoidCmd::Check { input, .. }) => {
            collect(&mut out, load_separoid(input));
        }
        Command::Poset(PosetCmd::Discover { input, .. }) => {
            collect(&mut out, load_genotypes(input));
        }
    }
    out
}
