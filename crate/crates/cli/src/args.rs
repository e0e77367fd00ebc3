use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "equigame", version, about = "Equilibria, evolutionary dynamics and coinductive structures")]
pub struct Cli {
    /// Seed for every random draw; reruns with the same seed are byte-identical.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format; each subcommand lists the ones it supports.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Dot,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Affine variational inequalities.
    #[command(subcommand)]
    Vi(ViCmd),
    /// Network economy equilibria and the extinction-imitation loop.
    #[command(subcommand)]
    Netecon(NeteconCmd),
    /// Moran birth-death process.
    #[command(subcommand)]
    Moran(MoranCmd),
    /// Evolvability of monotone conjunctions.
    #[command(subcommand)]
    Evolve(EvolveCmd),
    /// Bisimulations of labelled transition systems, MDP homomorphisms.
    #[command(subcommand)]
    Bisim(BisimCmd),
    /// Diversity automata of Moore environments.
    #[command(subcommand)]
    Diversity(DiversityCmd),
    /// Generalized metric spaces and the Yoneda embedding.
    #[command(subcommand)]
    Yoneda(YonedaCmd),
    /// Separoid axiom checks.
    #[command(subcommand)]
    Separoid(SeparoidCmd),
    /// Event orders from genotype data.
    #[command(subcommand)]
    Poset(PosetCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Extragradient,
    Projection,
    Stochastic,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = Algo::Extragradient)]
    pub algo: Algo,
    /// Natural-residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 100_000)]
    pub max_iter: usize,
    /// Step size. Default: mu/L^2 (projection), 0.5/L (extragradient);
    /// for the stochastic solver the numerator a of alpha_k = a/(k+10), default 0.5.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Relaxation beta of the stochastic solver.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Iterations of the stochastic solver.
    #[arg(long, default_value_t = 100_000)]
    pub iterations: usize,
    /// Standard deviation of the additive Gaussian noise (stochastic solver).
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Also write the residual trace as CSV (k,residual) to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ViCmd {
    /// Solve VI(F, K) for F(x) = M x + q.
    ///
    /// Input JSON: {"n": 2, "M": [[2,0],[0,2]], "q": [-2,4],
    /// "set": {"kind": "orthant"}} or "set": {"kind": "box", "lo": [..], "hi": [..]}.
    /// Output JSON: {"point", "residual", "iterations", "converged"}; --format csv
    /// writes the residual trace (k,residual). Exit code 2 if not converged.
    #[command(verbatim_doc_comment)]
    Solve {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct ModelArgs {
    /// Use the built-in two-provider instance.
    #[arg(long = "paper-instance")]
    pub paper_instance: bool,
    /// Model JSON: {"m","n","o","production","demand_price","delivery_cost",
    /// "opportunity_cost"}, each function a list of terms
    /// {"var": "Q[1,1,1]", "pow": 2, "coef": 1.0} (var omitted for constants).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum NeteconCmd {
    /// Compute the equilibrium of a network economy.
    ///
    /// Output JSON: {"algo", "converged", "iterations", "residual", "point",
    /// "Q", "q", "pi", "utilities": {"u1", "u2"}}; --format csv writes the
    /// residual trace. Exit code 2 if not converged.
    #[command(verbatim_doc_comment)]
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Repeated extinction of the least fit provider and imitation of a survivor.
    ///
    /// Output CSV (default): round,fitness_1..fitness_m,extinct,residual.
    /// --format json writes the full trace. Exit code 2 if a round fails to solve.
    #[command(verbatim_doc_comment)]
    Evolve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 50)]
        rounds: usize,
        /// Half-width of the multiplicative cost jitter.
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long = "max-iter", default_value_t = 100_000)]
        max_iter: usize,
        /// Extragradient step (default 0.5/L per round).
        #[arg(long)]
        alpha: Option<f64>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct MoranArgs {
    /// Population size.
    #[arg(long = "N")]
    pub n: usize,
    /// Relative fitness of the mutant.
    #[arg(long)]
    pub r: f64,
    /// Initial number of mutants.
    #[arg(long, default_value_t = 1)]
    pub i0: usize,
}

#[derive(Debug, Subcommand)]
pub enum MoranCmd {
    /// Exact fixation probability. Output JSON: {"N", "r", "i0", "exact"}.
    Exact {
        #[command(flatten)]
        params: MoranArgs,
    },
    /// Monte Carlo fixation rate.
    ///
    /// Output JSON: {"N", "r", "i0", "exact", "empirical", "stderr", "replicas", "seed"}.
    Simulate {
        #[command(flatten)]
        params: MoranArgs,
        #[arg(long, default_value_t = 100_000)]
        replicas: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvolveCmd {
    /// Mutation-selection towards a monotone conjunction target.
    ///
    /// Output JSON: {"target", "tolerance", "optimum_at", "generations":
    /// [{"generation", "hypothesis", "perf"}]}; --format csv writes
    /// generation,hypothesis,perf.
    #[command(verbatim_doc_comment)]
    Conjunction {
        /// Number of variables.
        #[arg(long)]
        n: usize,
        /// Target literals, 1-based and comma separated (empty for "true").
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        target: Vec<usize>,
        #[arg(long, default_value_t = 500)]
        generations: usize,
        /// Neutrality tolerance t (default 2^-(n+1)).
        #[arg(long)]
        tolerance: Option<f64>,
        /// Product distribution with P(x_i = 1) = p (default uniform).
        #[arg(long)]
        p: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum BisimCmd {
    /// Check a relation between two LTSs, or a homomorphism between two MDPs.
    ///
    /// LTS JSON: {"states": [..], "labels": [..], "trans": [["s","a","t"], ..]}.
    /// Relation JSON: [["s","t"], ..] (state names, left system first).
    /// MDP JSON: {"states", "actions", "P": [["s","a","t",p]], "R": [["s","a",r]]};
    /// map JSON: {"f": {"s": "s'"}, "g": {"s": {"a": "a'"}}}.
    /// Output JSON: {"holds", "counterexample"}.
    #[command(verbatim_doc_comment)]
    Check {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        /// Relation file (LTS inputs).
        #[arg(long, conflicts_with = "map")]
        relation: Option<PathBuf>,
        /// State and action maps (MDP inputs).
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Greatest bisimulation between two LTSs.
    ///
    /// Output JSON: {"relation": [["s","t"], ..], "sweeps", "removed_per_sweep"}.
    Greatest {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct EnvArgs {
    /// Named builder, e.g. register:3.
    #[arg(long)]
    pub env: Option<String>,
    /// Environment JSON: {"states", "actions", "predicates", "q0",
    /// "delta": [[next per action]], "gamma": [[bool per predicate]]}
    /// or {"builder": "register:n=3"}.
    #[arg(long = "env-file")]
    pub env_file: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DiversityCmd {
    /// Build the diversity automaton.
    ///
    /// Output JSON: {"diversity", "states", "classes": [{"id", "test", "values",
    /// "edges"}], "predicates", "bounds": {"log2_states", "pow2_states"}, "reduced"}.
    #[command(verbatim_doc_comment)]
    Build {
        #[command(flatten)]
        env: EnvArgs,
    },
    /// Run an action string through the automaton and the environment.
    ///
    /// Output CSV/JSON rows: step, action, one column per predicate.
    Simulate {
        #[command(flatten)]
        env: EnvArgs,
        /// Start state, by name or index (default q0).
        #[arg(long)]
        state: Option<String>,
        /// Comma-separated action names.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        actions: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum YonedaCmd {
    /// Validate a generalized metric space and check the Yoneda isometry.
    ///
    /// Space JSON: {"points": [..], "d": [[..]], "inf": "INF"}; with --exact,
    /// distances may be rationals "p/q". Output JSON: {"valid", "violations",
    /// "isometry": {"holds", "max_deviation", "worst"}}.
    #[command(verbatim_doc_comment)]
    Check {
        #[arg(long)]
        space: PathBuf,
        /// Exact rational arithmetic.
        #[arg(long)]
        exact: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum SeparoidCmd {
    /// Check the separoid axioms P1-P5 (P6 with --strong).
    ///
    /// Input JSON, either a joint table of binary variables
    ///   {"joint": {"vars": ["x","y"], "table": [p00, p10, p01, p11]}}
    /// (bit v of the table index is variable v), or an explicit structure
    ///   {"elements": [..], "leq": [["a","b"], ..], "join": [[..]],
    ///    "meet": [[..]] (optional), "ci": [["x","y","z"], ..]}.
    /// Output JSON: {"separoid", "elements", "ci_triples", "violations"}.
    #[command(verbatim_doc_comment)]
    Check {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        strong: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum PosetCmd {
    /// Infer the order of events from genotypes.
    ///
    /// Input CSV: wide (optional "sample" column, one 0/1 column per event)
    /// or long ("sample,event" rows). Output JSON: {"events", "tie_classes",
    /// "less", "hasse"}; --format dot writes the Hasse diagram, --format csv
    /// writes earlier,later pairs.
    #[command(verbatim_doc_comment)]
    Discover {
        #[arg(long)]
        input: PathBuf,
        /// Allowed fraction of genotypes with e but without an ancestor f.
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
    },
}
