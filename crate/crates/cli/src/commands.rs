//! Subcommand runners. Each returns the rendered output and whether the
//! underlying computation converged.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use equigame::causal::{check_separoid, discover_poset, SupportOracle};
use equigame::coalgebra::{check_mdp_homomorphism, greatest_bisimulation, is_bisimulation, MdpViolation};
use equigame::diversity::{compute_classes, diversity_bounds, is_reduced, run_env, MooreEnv};
use equigame::evo::{
    evolutionary_vi_loop, evolve_conjunction, fixation_probability_exact, simulate_fixation, Conjunction, Distribution,
    EvoLoopConfig, EvolveOptions,
};
use equigame::metricyoneda::{GenMetricSpace, Weight};
use equigame::DVector;
use equigame::netecon::{EconomyPoint, NetworkEconomyModel};
use equigame::par::Execution;
use equigame::rng::stream_rng;
use equigame::vi::{
    solve_basic_projection, solve_extragradient, solve_stochastic_two_step, Solution, SolveOptions, StepSchedule,
    StochasticSampler, ViProblem,
};
use num_rational::Ratio;
use serde_json::{json, Value};

use crate::args::{
    Algo, BisimCmd, Cli, Command, DiversityCmd, EnvArgs, EvolveCmd, Format, MoranCmd, NeteconCmd, PosetCmd,
    SeparoidCmd, SolverArgs, ViCmd, YonedaCmd,
};
use crate::inputs::{self, Diagnostic};

/// Offset `c` of the stochastic schedule `alpha_k = a / (k + c)`.
const STOCHASTIC_OFFSET: f64 = 10.0;

#[derive(Debug)]
pub struct Output {
    pub text: String,
    pub converged: bool,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flag combination; exit 64.
    Usage(String),
    /// Invalid inputs or parameters; exit 1.
    Invalid(Vec<Diagnostic>),
    Failed(String),
}

impl CliError {
    fn param(flag: &str, message: impl ToString) -> Self {
        CliError::Invalid(vec![Diagnostic { file: flag.to_string(), path: String::new(), message: message.to_string() }])
    }
}

impl From<Diagnostic> for CliError {
    fn from(d: Diagnostic) -> Self {
        CliError::Invalid(vec![d])
    }
}

type Run = Result<Output, CliError>;

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn done(v: Value) -> Run {
    Ok(Output { text: pretty(&v), converged: true })
}

fn pick(cmd: &str, format: Option<Format>, default: Format, allowed: &[Format]) -> Result<Format, CliError> {
    let f = format.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        let names: Vec<&str> = allowed.iter().map(|f| format_name(*f)).collect();
        Err(CliError::Usage(format!("{cmd} supports --format {}, not {}", names.join("|"), format_name(f))))
    }
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Json => "json",
        Format::Csv => "csv",
        Format::Dot => "dot",
    }
}

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(buf)
}

fn csv_text(write: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>) -> Result<String, CliError> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        write(&mut w).map_err(|e| CliError::Failed(e.to_string()))?;
        w.flush().map_err(|e| CliError::Failed(e.to_string()))?;
    }
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

fn trace_text(sol: &Solution) -> Result<String, CliError> {
    let mut buf = Vec::new();
    sol.write_trace_csv(&mut buf).map_err(|e| CliError::Failed(e.to_string()))?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

fn write_trace_file(path: &Path, sol: &Solution) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
    sol.write_trace_csv(BufWriter::new(file)).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn solve(p: &ViProblem, s: &SolverArgs, seed: u64, want_trace: bool) -> Result<Solution, CliError> {
    let mut opts = SolveOptions::default().with_tol(s.tol).with_max_iter(s.max_iter);
    if want_trace || s.trace.is_some() {
        opts = opts.with_trace();
    }
    let sol = match s.algo {
        Algo::Extragradient => {
            let alpha = s
                .alpha
                .or_else(|| p.lipschitz().map(|l| 0.5 / l))
                .ok_or_else(|| CliError::param("--alpha", "no Lipschitz constant known; pass a step size"))?;
            solve_extragradient(p, alpha, &opts)
        }
        Algo::Projection => {
            let alpha = s
                .alpha
                .or_else(|| p.default_step())
                .ok_or_else(|| CliError::param("--alpha", "no default step known; pass a step size"))?;
            solve_basic_projection(p, &DVector::from_element(p.dim(), 1.0), alpha, &opts)
        }
        Algo::Stochastic => {
            if !(s.sigma >= 0.0) {
                return Err(CliError::param("--sigma", format!("{} must be nonnegative", s.sigma)));
            }
            let sampler =
                if s.sigma > 0.0 { StochasticSampler::gaussian(s.sigma) } else { StochasticSampler::zero_noise() };
            let sched = StepSchedule::harmonic(s.alpha.unwrap_or(0.5), STOCHASTIC_OFFSET, s.beta);
            solve_stochastic_two_step(p, &sampler, &sched, seed, s.iterations, None)
        }
    }
    .map_err(|e| CliError::param("solver", e))?;
    if let Some(path) = &s.trace {
        write_trace_file(path, &sol)?;
    }
    Ok(sol)
}

fn algo_name(a: Algo) -> &'static str {
    match a {
        Algo::Extragradient => "extragradient",
        Algo::Projection => "projection",
        Algo::Stochastic => "stochastic",
    }
}

fn solution_output(sol: &Solution, format: Format, json: Value) -> Run {
    let text = match format {
        Format::Csv => trace_text(sol)?,
        _ => pretty(&json),
    };
    Ok(Output { text, converged: sol.converged })
}

fn vi_solve(cli: &Cli, input: &Path, s: &SolverArgs) -> Run {
    let format = pick("vi solve", cli.format, Format::Json, &[Format::Json, Format::Csv])?;
    let p = inputs::load_affine(input)?;
    let sol = solve(&p, s, cli.seed, format == Format::Csv)?;
    let mut v = sol.to_json();
    v["algo"] = json!(algo_name(s.algo));
    solution_output(&sol, format, v)
}

fn netecon_solve(cli: &Cli, model: &NetworkEconomyModel, s: &SolverArgs) -> Run {
    let format = pick("netecon solve", cli.format, Format::Json, &[Format::Json, Format::Csv])?;
    let p = model.assemble_vi().map_err(|e| CliError::param("model", e))?;
    let sol = solve(&p, s, cli.seed, format == Format::Csv)?;
    let clamped = sol.point.map(|c| c.max(0.0));
    let u = model.utilities(&clamped).map_err(|e| CliError::Failed(e.to_string()))?;
    let pt = EconomyPoint::new(model.dims(), sol.point.clone()).map_err(|e| CliError::Failed(e.to_string()))?;
    let v = json!({
        "algo": algo_name(s.algo),
        "converged": sol.converged,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "point": sol.point.as_slice(),
        "Q": pt.quantity(),
        "q": pt.quality(),
        "pi": pt.price(),
        "utilities": u,
    });
    solution_output(&sol, format, v)
}

fn netecon_evolve(cli: &Cli, model: &NetworkEconomyModel, cfg: EvoLoopConfig) -> Run {
    let format = pick("netecon evolve", cli.format, Format::Csv, &[Format::Json, Format::Csv])?;
    let (trace, _) = evolutionary_vi_loop(model, &cfg, cli.seed).map_err(|e| CliError::param("netecon evolve", e))?;
    if let Some(d) = &trace.diagnostic {
        eprintln!("netecon evolve: {d}");
    }
    let text = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            trace.write_csv(&mut buf).map_err(|e| CliError::Failed(e.to_string()))?;
            String::from_utf8(buf).expect("CSV output is UTF-8")
        }
        _ => pretty(&serde_json::to_value(&trace).expect("trace serializes")),
    };
    Ok(Output { text, converged: trace.diagnostic.is_none() })
}

fn moran(cli: &Cli, cmd: &MoranCmd) -> Run {
    pick("moran", cli.format, Format::Json, &[Format::Json, Format::Csv])?;
    let csv = cli.format == Some(Format::Csv);
    let bad = |e: equigame::evo::EvoError| CliError::param("moran", e);
    match cmd {
        MoranCmd::Exact { params: a } => {
            let exact = fixation_probability_exact(a.n, a.r, a.i0).map_err(bad)?;
            if csv {
                let text = csv_text(|w| {
                    w.write_record(["N", "r", "i0", "exact"])?;
                    w.write_record([a.n.to_string(), a.r.to_string(), a.i0.to_string(), exact.to_string()])
                })?;
                return Ok(Output { text, converged: true });
            }
            done(json!({ "N": a.n, "r": a.r, "i0": a.i0, "exact": exact }))
        }
        MoranCmd::Simulate { params: a, replicas } => {
            let exact = fixation_probability_exact(a.n, a.r, a.i0).map_err(bad)?;
            let est = simulate_fixation(a.n, a.r, a.i0, *replicas, cli.seed, Execution::default()).map_err(bad)?;
            if csv {
                let text = csv_text(|w| {
                    w.write_record(["N", "r", "i0", "exact", "empirical", "stderr", "replicas", "seed"])?;
                    w.write_record([
                        a.n.to_string(),
                        a.r.to_string(),
                        a.i0.to_string(),
                        exact.to_string(),
                        est.rate.to_string(),
                        est.stderr.to_string(),
                        est.replicas.to_string(),
                        est.seed.to_string(),
                    ])
                })?;
                return Ok(Output { text, converged: true });
            }
            done(json!({
                "N": a.n, "r": a.r, "i0": a.i0, "exact": exact,
                "empirical": est.rate, "stderr": est.stderr, "replicas": est.replicas, "seed": est.seed,
            }))
        }
    }
}

fn evolve(cli: &Cli, cmd: &EvolveCmd) -> Run {
    let EvolveCmd::Conjunction { n, target, generations, tolerance, p } = cmd;
    let format = pick("evolve conjunction", cli.format, Format::Json, &[Format::Json, Format::Csv])?;
    let bad = |e: equigame::evo::EvoError| CliError::param("evolve conjunction", e);
    let target = Conjunction::new(*n, target).map_err(bad)?;
    let d = match p {
        Some(p) => Distribution::Product { p: vec![*p; *n] },
        None => Distribution::Uniform { n: *n },
    };
    d.validate().map_err(bad)?;
    let opts = EvolveOptions { generations: *generations, tolerance: *tolerance, ..EvolveOptions::default() };
    let mut rng = stream_rng(cli.seed, 0);
    let trace = evolve_conjunction(&target, &d, &opts, &mut rng).map_err(bad)?;
    let text = match format {
        Format::Csv => csv_text(|w| {
            w.write_record(["generation", "hypothesis", "perf"])?;
            for (g, (h, p)) in trace.hypotheses.iter().zip(&trace.perfs).enumerate() {
                w.write_record([g.to_string(), h.to_string(), p.to_string()])?;
            }
            Ok(())
        })?,
        _ => {
            let gens: Vec<Value> = trace
                .hypotheses
                .iter()
                .zip(&trace.perfs)
                .enumerate()
                .map(|(g, (h, p))| json!({ "generation": g, "hypothesis": h.to_string(), "perf": p }))
                .collect();
            pretty(&json!({
                "target": target.to_string(),
                "tolerance": trace.tolerance,
                "optimum_at": trace.optimum_at,
                "generations": gens,
            }))
        }
    };
    Ok(Output { text, converged: true })
}

fn bisim(cli: &Cli, cmd: &BisimCmd) -> Run {
    pick("bisim", cli.format, Format::Json, &[Format::Json])?;
    match cmd {
        BisimCmd::Check { left, right, relation: Some(rel), .. } => {
            let l1 = inputs::load_lts(left)?;
            let l2 = inputs::load_lts(right)?;
            let r = inputs::load_relation(rel, &l1, &l2)?;
            let cex = is_bisimulation(&l1, &l2, &r).map_err(|e| CliError::param("relation", e))?;
            done(json!({ "holds": cex.is_none(), "counterexample": cex.map(|c| c.describe(&l1, &l2)) }))
        }
        BisimCmd::Check { left, right, map: Some(map), .. } => {
            let m1 = inputs::load_mdp(left)?;
            let m2 = inputs::load_mdp(right)?;
            let (f, g) = inputs::load_mdp_maps(map, &m1, &m2)?;
            let v = check_mdp_homomorphism(&m1, &m2, &f, &g).map_err(|e| Diagnostic::new(map, "", e.to_string()))?;
            let describe = |v: MdpViolation| match v {
                MdpViolation::Admissibility { s, a } => format!(
                    "image of ({}, {}) is not admissible",
                    m1.state_name(s),
                    m1.action_name(a)
                ),
                MdpViolation::Transition { s, a, block, expected, actual } => format!(
                    "P(block {} | {}, {}) = {expected} but the image assigns {actual}",
                    m2.state_name(block),
                    m1.state_name(s),
                    m1.action_name(a)
                ),
                MdpViolation::Reward { s, a, expected, actual } => format!(
                    "R({}, {}) = {expected} but the image reward is {actual}",
                    m1.state_name(s),
                    m1.action_name(a)
                ),
            };
            done(json!({ "holds": v.is_none(), "counterexample": v.map(describe) }))
        }
        BisimCmd::Check { .. } => Err(CliError::Usage("bisim check needs --relation (LTS) or --map (MDP)".into())),
        BisimCmd::Greatest { left, right } => {
            let l1 = inputs::load_lts(left)?;
            let l2 = inputs::load_lts(right)?;
            let r = greatest_bisimulation(&l1, &l2);
            done(json!({
                "relation": r.relation.to_json(&l1, &l2),
                "sweeps": r.sweeps,
                "removed_per_sweep": r.removed_per_sweep,
            }))
        }
    }
}

fn diversity(cli: &Cli, cmd: &DiversityCmd) -> Run {
    match cmd {
        DiversityCmd::Build { env } => {
            pick("diversity build", cli.format, Format::Json, &[Format::Json])?;
            let env = inputs::load_env(env)?;
            let da = compute_classes(&env);
            let (lo, _, hi) = diversity_bounds(&env);
            let mut v = da.to_json(&env);
            v["bounds"] = json!({ "log2_states": lo, "pow2_states": hi });
            v["reduced"] = json!(is_reduced(&env));
            done(v)
        }
        DiversityCmd::Simulate { env, state, actions } => diversity_simulate(cli, env, state.as_deref(), actions),
    }
}

fn diversity_simulate(cli: &Cli, env: &EnvArgs, state: Option<&str>, actions: &[String]) -> Run {
    let format = pick("diversity simulate", cli.format, Format::Json, &[Format::Json, Format::Csv])?;
    let env: MooreEnv = inputs::load_env(env)?;
    let q = match state {
        None => env.q0,
        Some(s) => env
            .states
            .iter()
            .position(|n| n == s)
            .or_else(|| s.parse::<usize>().ok().filter(|&i| i < env.num_states()))
            .ok_or_else(|| CliError::param("--state", format!("unknown state {s:?}")))?,
    };
    let acts = actions
        .iter()
        .map(|a| {
            env.actions.iter().position(|n| n == a).ok_or_else(|| CliError::param("--actions", format!("unknown action {a:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let da = compute_classes(&env);
    let predicted = da.simulate(&da.initial_values(q), &acts).map_err(|e| CliError::Failed(e.to_string()))?;
    let actual = run_env(&env, q, &acts);
    let agrees = predicted == actual;
    let text = match format {
        Format::Csv => csv_text(|w| {
            let mut header = vec!["step".to_string(), "action".to_string()];
            header.extend(env.predicates.iter().cloned());
            w.write_record(&header)?;
            for (k, vals) in predicted.iter().enumerate() {
                let mut row = vec![(k + 1).to_string(), env.actions[acts[k]].clone()];
                row.extend(vals.iter().map(|&b| u8::from(b).to_string()));
                w.write_record(&row)?;
            }
            Ok(())
        })?,
        _ => {
            let rows: Vec<Value> = predicted
                .iter()
                .enumerate()
                .map(|(k, vals)| {
                    let preds: serde_json::Map<String, Value> =
                        env.predicates.iter().zip(vals).map(|(p, &b)| (p.clone(), json!(b))).collect();
                    json!({ "step": k + 1, "action": env.actions[acts[k]], "predicates": preds })
                })
                .collect();
            pretty(&json!({ "state": env.states[q], "rows": rows, "agrees_with_environment": agrees }))
        }
    };
    if !agrees {
        return Err(CliError::Failed("automaton prediction disagrees with the environment".into()));
    }
    Ok(Output { text, converged: true })
}

fn yoneda_report<T: Weight>(space: &GenMetricSpace<T>) -> Value {
    let violations: Vec<String> = space.validate().iter().map(|v| v.describe(space)).collect();
    let isometry = if violations.is_empty() {
        let r = space.isometry_deviation();
        json!({
            "holds": r.holds,
            "max_deviation": r.max_deviation,
            "worst": r.worst.map(|(x, y)| [space.points[x].clone(), space.points[y].clone()]),
        })
    } else {
        Value::Null
    };
    json!({ "valid": violations.is_empty(), "violations": violations, "isometry": isometry })
}

fn yoneda(cli: &Cli, cmd: &YonedaCmd) -> Run {
    let YonedaCmd::Check { space, exact } = cmd;
    pick("yoneda check", cli.format, Format::Json, &[Format::Json])?;
    if *exact {
        done(yoneda_report(&inputs::load_space::<Ratio<i64>>(space)?))
    } else {
        done(yoneda_report(&inputs::load_space::<f64>(space)?))
    }
}

fn separoid(cli: &Cli, cmd: &SeparoidCmd) -> Run {
    let SeparoidCmd::Check { input, strong } = cmd;
    pick("separoid check", cli.format, Format::Json, &[Format::Json])?;
    let s = inputs::load_separoid(input)?;
    let violations = check_separoid(&s, *strong).map_err(|e| Diagnostic::new(input, "", e.to_string()))?;
    done(json!({
        "separoid": violations.is_empty(),
        "elements": s.names,
        "ci_triples": s.ci_triples().count(),
        "violations": violations.iter().map(|v| v.describe(&s)).collect::<Vec<_>>(),
    }))
}

fn poset(cli: &Cli, cmd: &PosetCmd) -> Run {
    let PosetCmd::Discover { input, epsilon } = cmd;
    let format = pick("poset discover", cli.format, Format::Json, &[Format::Json, Format::Csv, Format::Dot])?;
    let oracle = SupportOracle::new(*epsilon).map_err(|e| CliError::param("--epsilon", e))?;
    let data = inputs::load_genotypes(input)?;
    let p = discover_poset(&data, &oracle).map_err(|e| Diagnostic::new(input, "", e.to_string()))?;
    let text = match format {
        Format::Dot => p.to_dot(),
        Format::Csv => csv_text(|w| {
            w.write_record(["earlier", "later"])?;
            for a in 0..p.events.len() {
                for b in 0..p.events.len() {
                    if p.less(a, b) {
                        w.write_record([&p.events[a], &p.events[b]])?;
                    }
                }
            }
            Ok(())
        })?,
        Format::Json => pretty(&p.to_json()),
    };
    Ok(Output { text, converged: true })
}

pub fn run(cli: &Cli) -> Run {
    match &cli.command {
        Command::Vi(ViCmd::Solve { input, solver }) => vi_solve(cli, input, solver),
        Command::Netecon(NeteconCmd::Solve { model, solver }) => {
            netecon_solve(cli, &inputs::load_model(model)?, solver)
        }
        Command::Netecon(NeteconCmd::Evolve { model, rounds, delta, tol, max_iter, alpha }) => {
            let cfg = EvoLoopConfig { rounds: *rounds, delta: *delta, alpha: *alpha, tol: *tol, max_iter: *max_iter };
            netecon_evolve(cli, &inputs::load_model(model)?, cfg)
        }
        Command::Moran(cmd) => moran(cli, cmd),
        Command::Evolve(cmd) => evolve(cli, cmd),
        Command::Bisim(cmd) => bisim(cli, cmd),
        Command::Diversity(cmd) => diversity(cli, cmd),
        Command::Yoneda(cmd) => yoneda(cli, cmd),
        Command::Separoid(cmd) => separoid(cli, cmd),
        Command::Poset(cmd) => poset(cli, cmd),
    }
}
