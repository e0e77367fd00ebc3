//! Acceptance suite. Runs every criterion in sequence, prints one
//! PASS/FAIL line each and fails if any criterion fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use equigame::causal::{
    check_separoid, discover_poset, pancreatic_fixture, random_poset, separoid_from_joint, synthetic_genotypes, Axiom,
    GenotypeDataset, Separoid, SupportOracle,
};
use equigame::coalgebra::{check_homomorphism, greatest_bisimulation, is_bisimulation, kernel_relation, Lts, StateRelation};
use equigame::diversity::{compute_classes, diversity, diversity_bounds, make_register_env, random_reduced_env, run_env, MooreEnv};
use equigame::evo::{
    evolve_conjunction, fixation_probability_exact, perf, simulate_fixation, Conjunction, Distribution, EvolveOptions,
    Negated, PerfMode,
};
use equigame::metricyoneda::{
    hausdorff_powerset_space, nonneg_real_space, preorder_space, random_space, string_prefix_space, GenMetricSpace,
};
use equigame::netecon::paper_instance;
use equigame::par::Execution;
use equigame::rng::stream_rng;
use equigame::vi::{
    natural_residual, solve_basic_projection, solve_extragradient, solve_stochastic_batch, solve_stochastic_two_step,
    FeasibleSet, SolveOptions, StepSchedule, StochasticSampler, ViProblem,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_rational::Ratio;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const REFERENCE_JACOBIAN: [f64; 36] = [
    4.0, 0.5, -0.5, 0.0, 1.0, 0.0, //
    0.5, 6.0, 0.0, -0.5, 0.0, 1.0, //
    0.0, 0.0, 1.0, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.0, 1.0, 0.0, 0.0, //
    -1.0, 0.0, 0.0, 0.0, 2.0, 0.0, //
    0.0, -1.0, 0.0, 0.0, 0.0, 2.0,
];

fn reference_jacobian() -> DMatrix<f64> {
    DMatrix::from_row_slice(6, 6, &REFERENCE_JACOBIAN)
}

/// Interior equilibrium from `J x = -F(0)`, solved independently.
fn reference_equilibrium() -> DVector<f64> {
    let f0 = DVector::from_vec(vec![-99.0, -199.0, -20.0, -10.0, 0.0, 0.0]);
    reference_jacobian().lu().solve(&(-f0)).expect("nonsingular")
}

fn criterion_1() -> Outcome {
    let model = paper_instance();
    let expected = reference_jacobian();
    let mut rng = stream_rng(1, 0);
    for trial in 0..20 {
        let x = if trial == 0 {
            DVector::zeros(6)
        } else {
            DVector::from_fn(6, |_, _| rng.random_range(0.0..50.0))
        };
        let j = model.jacobian(&x).map_err(|e| e.to_string())?;
        ensure(j == expected, || format!("jacobian at {x:?} is {j}"))?;
    }
    let sym = (&expected + expected.transpose()) * 0.5;
    let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
    ensure(min_eig > 0.0, || format!("symmetric part has eigenvalue {min_eig}"))?;
    Ok(format!("exact 6x6 match, min eigenvalue of symmetric part {min_eig:.4}"))
}

fn criterion_2() -> Outcome {
    let p = paper_instance().assemble_vi().map_err(|e| e.to_string())?;
    let x_star = reference_equilibrium();
    ensure(x_star.iter().all(|&c| c > 0.0), || "reference equilibrium is not interior".into())?;
    let l = p.lipschitz().ok_or("missing Lipschitz constant")?;
    let opts = SolveOptions::default().with_tol(1e-11);
    let eg = solve_extragradient(&p, 0.5 / l, &opts).map_err(|e| e.to_string())?;
    let alpha = p.default_step().ok_or("missing default step")?;
    let bp = solve_basic_projection(&p, &DVector::from_element(6, 1.0), alpha, &opts).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (name, sol) in [("extragradient", &eg), ("basic projection", &bp)] {
        let r = natural_residual(&p, &sol.point, 1.0).map_err(|e| e.to_string())?;
        ensure(sol.converged && r <= 1e-8, || format!("{name}: residual {r}"))?;
        let err = (&sol.point - &x_star).amax();
        worst = worst.max(err);
        ensure(err <= 1e-5, || format!("{name}: max coordinate error {err}"))?;
    }
    Ok(format!("eg {} iters, bp {} iters, max error {worst:.2e}", eg.iterations, bp.iterations))
}

fn criterion_3() -> Outcome {
    let p = paper_instance().assemble_vi().map_err(|e| e.to_string())?;
    let x_star = reference_equilibrium();
    let sched = StepSchedule::harmonic(0.5, 10.0, 1.0);

    // zero noise on a single-block copy of the problem is plain projection
    let field = p.field().clone();
    let single = ViProblem::new(6, field, FeasibleSet::product(vec![FeasibleSet::Orthant { dim: 6 }]).unwrap())
        .map_err(|e| e.to_string())?;
    let steps = 2_000;
    let sto = solve_stochastic_two_step(&single, &StochasticSampler::zero_noise(), &sched, 7, steps, None)
        .map_err(|e| e.to_string())?;
    let mut x = DVector::zeros(6);
    for k in 0..steps {
        let z = &x - p.eval(&x) * (0.5 / (k as f64 + 10.0));
        x = z.map(|c| c.max(0.0));
    }
    ensure(sto.point == x, || format!("zero-noise iterate {} differs from projection {}", sto.point, x))?;

    let seeds: Vec<u64> = (0..20).map(|i| 42 + i).collect();
    let sols = solve_stochastic_batch(&p, &StochasticSampler::gaussian(1.0), &sched, &seeds, 200_000, Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let mut errs: Vec<f64> = sols.iter().map(|s| (&s.point - &x_star).norm()).collect();
    errs.sort_by(f64::total_cmp);
    let median = (errs[9] + errs[10]) / 2.0;
    ensure(median <= 5e-2, || format!("median final error {median:.4} > 5e-2 (min {:.4}, max {:.4})", errs[0], errs[19]))?;
    Ok(format!("zero-noise trajectory exact, median error {median:.4}"))
}

fn criterion_4() -> Outcome {
    for n in [2, 5, 10, 37] {
        for i0 in 0..=n {
            let p = fixation_probability_exact(n, 1.0, i0).map_err(|e| e.to_string())?;
            let want = i0 as f64 / n as f64;
            ensure((p - want).abs() <= 1e-12, || format!("r=1, N={n}, i0={i0}: {p} vs {want}"))?;
        }
    }
    let r: f64 = 1.2;
    let closed = (1.0 - 1.0 / r) / (1.0 - r.powi(-10));
    let exact = fixation_probability_exact(10, r, 1).map_err(|e| e.to_string())?;
    ensure((exact - closed).abs() <= 1e-12, || format!("absorbing solve {exact} vs closed form {closed}"))?;
    let est = simulate_fixation(10, r, 1, 100_000, 42, Execution::Parallel).map_err(|e| e.to_string())?;
    let z = (est.rate - exact).abs() / est.stderr;
    ensure(z <= 3.0, || format!("simulated {} is {z:.2} standard errors from {exact}", est.rate))?;
    Ok(format!("closed form {closed:.6}, simulated {:.5} ({z:.2} se)", est.rate))
}

fn automaton_matches(env: &MooreEnv, strings: usize, rng: &mut impl Rng) -> Result<(), String> {
    let da = compute_classes(env);
    for _ in 0..strings {
        let q = rng.random_range(0..env.num_states());
        let actions: Vec<usize> = (0..50).map(|_| rng.random_range(0..env.actions.len())).collect();
        let sim = da.simulate(&da.initial_values(q), &actions).map_err(|e| e.to_string())?;
        ensure(sim == run_env(env, q, &actions), || format!("automaton disagrees from state {q} on {actions:?}"))?;
    }
    Ok(())
}

fn criterion_5() -> Outcome {
    let mut rng = stream_rng(5, 0);
    for n in 1..=4 {
        let env = make_register_env(n).map_err(|e| e.to_string())?;
        ensure(env.num_states() == 1 << n, || format!("register {n}: {} states", env.num_states()))?;
        let d = diversity(&env);
        ensure(d == 2 * n, || format!("register {n}: diversity {d}"))?;
        automaton_matches(&env, 1000, &mut rng)?;
    }
    for _ in 0..100 {
        let env = random_reduced_env(4, 2, 1, &mut rng, 10_000).map_err(|e| e.to_string())?;
        let (lo, d, hi) = diversity_bounds(&env);
        ensure(lo <= d as f64 && d as f64 <= hi, || format!("bounds violated: {lo} <= {d} <= {hi}"))?;
        automaton_matches(&env, 1000, &mut rng)?;
    }
    Ok("register diversity 2n, bounds and simulation hold".into())
}

fn random_lts(rng: &mut impl Rng) -> Lts {
    let n = rng.random_range(1..=3);
    let mut trans = Vec::new();
    for s in 0..n {
        for a in 0..2 {
            for t in 0..n {
                if rng.random_bool(0.35) {
                    trans.push((s, a, t));
                }
            }
        }
    }
    Lts::from_indices(n, 2, &trans).expect("valid indices")
}

fn all_bisimulations(l1: &Lts, l2: &Lts) -> Vec<StateRelation> {
    let pairs: Vec<(usize, usize)> =
        (0..l1.num_states()).flat_map(|s| (0..l2.num_states()).map(move |t| (s, t))).collect();
    (0u32..1 << pairs.len())
        .map(|mask| {
            StateRelation::new(
                l1.num_states(),
                l2.num_states(),
                pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &p)| p),
            )
            .unwrap()
        })
        .filter(|r| is_bisimulation(l1, l2, r).unwrap().is_none())
        .collect()
}

fn quotient(l: &Lts, f: &[usize], classes: usize) -> Lts {
    let trans: BTreeSet<(usize, usize, usize)> = l.transitions().map(|(s, a, t)| (f[s], a, f[t])).collect();
    Lts::from_indices(classes, l.num_labels(), &trans.into_iter().collect::<Vec<_>>()).unwrap()
}

fn criterion_6() -> Outcome {
    let mut rng = stream_rng(6, 0);
    for trial in 0..200 {
        let (l1, l2, l3) = (random_lts(&mut rng), random_lts(&mut rng), random_lts(&mut rng));
        let bisims = all_bisimulations(&l1, &l2);
        let brute = bisims.iter().fold(StateRelation::empty(l1.num_states(), l2.num_states()), |acc, r| {
            acc.union(r).unwrap()
        });
        let greatest = greatest_bisimulation(&l1, &l2).relation;
        ensure(greatest == brute, || format!("trial {trial}: refinement {greatest:?} vs brute force {brute:?}"))?;

        let r = bisims.choose(&mut rng).unwrap();
        let r2 = bisims.choose(&mut rng).unwrap();
        let s = all_bisimulations(&l2, &l3);
        let s = s.choose(&mut rng).unwrap();
        let is_bisim = |a: &Lts, b: &Lts, rel: &StateRelation| is_bisimulation(a, b, rel).unwrap().is_none();
        ensure(is_bisim(&l2, &l1, &r.inverse()), || format!("trial {trial}: inverse"))?;
        ensure(is_bisim(&l1, &l3, &r.compose(s).unwrap()), || format!("trial {trial}: composition"))?;
        ensure(is_bisim(&l1, &l2, &r.union(r2).unwrap()), || format!("trial {trial}: union"))?;

        let e = greatest_bisimulation(&l1, &l1).relation;
        ensure(e.is_equivalence(), || format!("trial {trial}: self bisimilarity is not an equivalence"))?;
        let mut f = vec![usize::MAX; l1.num_states()];
        let mut classes = 0;
        for x in 0..l1.num_states() {
            if f[x] == usize::MAX {
                for y in 0..l1.num_states() {
                    if e.contains(x, y) {
                        f[y] = classes;
                    }
                }
                classes += 1;
            }
        }
        let q = quotient(&l1, &f, classes);
        ensure(check_homomorphism(&f, &l1, &q).unwrap().holds(), || format!("trial {trial}: quotient map"))?;
        let k = kernel_relation(&f);
        ensure(k == e && is_bisim(&l1, &l1, &k), || format!("trial {trial}: kernel"))?;
    }
    Ok("200 brute-force comparisons and closure checks".into())
}

fn criterion_7() -> Outcome {
    let mut rng = stream_rng(7, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        let s = random_space(n, 10.0, 0.25, &mut rng);
        let rep = s.check_isometry().map_err(|e| e.to_string())?;
        worst = worst.max(rep.max_deviation);
        ensure(rep.max_deviation <= 1e-9, || format!("deviation {} at {:?}", rep.max_deviation, rep.worst))?;
    }
    type Q = Ratio<i64>;
    let names = |k: usize| (0..k).map(|i| format!("p{i}")).collect::<Vec<_>>();
    let preorder: GenMetricSpace<Q> =
        preorder_space(names(4), &[(0, 0), (1, 1), (2, 2), (3, 3), (0, 1), (1, 2), (0, 2), (3, 2)]).unwrap();
    let prefix: GenMetricSpace<Q> = string_prefix_space(&["", "a", "ab", "abb", "b", "ba", "abab"]).unwrap();
    let reals: GenMetricSpace<Q> =
        nonneg_real_space(&[Q::new(0, 1), Q::new(1, 2), Q::new(3, 1), Q::new(7, 4), Q::new(10, 1)]).unwrap();
    let base: GenMetricSpace<Q> = nonneg_real_space(&[Q::new(0, 1), Q::new(1, 1), Q::new(5, 2)]).unwrap();
    let hausdorff = hausdorff_powerset_space(&base, &[vec![], vec![0], vec![1], vec![2], vec![0, 2], vec![0, 1, 2]]).unwrap();
    for (name, s) in [("preorder", preorder), ("prefix", prefix), ("reals", reals), ("hausdorff", hausdorff)] {
        let rep = s.check_isometry().map_err(|e| format!("{name}: {e}"))?;
        ensure(rep.holds && rep.max_deviation == 0.0, || format!("{name}: {rep:?}"))?;
    }
    Ok(format!("max float deviation {worst:.1e}, example spaces exact"))
}

/// Joint of three binary variables from a random DAG over a random order.
fn random_factored_joint(rng: &mut impl Rng) -> Vec<f64> {
    let mut order = [0usize, 1, 2];
    order.shuffle(rng);
    let mut parents: [Vec<usize>; 3] = Default::default();
    let mut cpt: [Vec<f64>; 3] = Default::default();
    for (pos, &v) in order.iter().enumerate() {
        parents[v] = order[..pos].iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        cpt[v] = (0..1 << parents[v].len()).map(|_| rng.random_range(0.05..0.95)).collect();
    }
    (0..8)
        .map(|a: usize| {
            (0..3)
                .map(|v| {
                    let idx = parents[v].iter().enumerate().fold(0, |acc, (i, &p)| acc | (a >> p & 1) << i);
                    let p1 = cpt[v][idx];
                    if a >> v & 1 == 1 {
                        p1
                    } else {
                        1.0 - p1
                    }
                })
                .product()
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let mut rng = stream_rng(8, 0);
    for trial in 0..100 {
        let table = random_factored_joint(&mut rng);
        let s = separoid_from_joint(&["x", "y", "z"], &table).map_err(|e| e.to_string())?;
        let v = check_separoid(&s, false).map_err(|e| e.to_string())?;
        ensure(v.is_empty(), || format!("trial {trial}: {}", v[0].describe(&s)))?;
    }
    let empty = Separoid::chain(2, []).unwrap();
    let v = check_separoid(&empty, false).map_err(|e| e.to_string())?;
    let p1 = v.iter().find(|x| x.axiom == Axiom::P1).ok_or("no P1 violation on the empty relation")?;
    ensure(p1.witness.len() == 2, || "P1 violation lacks a witness".into())?;
    Ok(format!("100 joints clean; empty relation: {}", p1.describe(&empty)))
}

fn criterion_9() -> Outcome {
    let eps0 = SupportOracle::new(0.0).unwrap();
    let chain = GenotypeDataset::from_pairs([("t1", "a"), ("t2", "a"), ("t2", "b"), ("t3", "a"), ("t3", "b"), ("t3", "c")]);
    let mut chain = chain;
    chain.samples.push("t0".into());
    chain.genotypes.push(BTreeSet::new());
    let p = discover_poset(&chain, &eps0).map_err(|e| e.to_string())?;
    let (a, b, c) = (p.index("a").unwrap(), p.index("b").unwrap(), p.index("c").unwrap());
    ensure(p.less(a, b) && p.less(b, c), || "chain fixture not recovered".into())?;

    let p = discover_poset(&pancreatic_fixture(), &eps0).map_err(|e| e.to_string())?;
    let id = |n: &str| p.index(n).unwrap();
    ensure(p.less(id("KRAS"), id("TP53")) && p.less(id("TP53"), id("SMAD4")), || "KRAS < TP53 < SMAD4 missing".into())?;
    ensure(["KRAS", "TP53", "SMAD4"].iter().all(|e| !p.comparable(id("CDKN2A"), id(e))), || "CDKN2A comparable".into())?;

    let mut rng = stream_rng(9, 0);
    let mut hits = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=6);
        let truth = random_poset(n, 0.4, &mut rng);
        let data = synthetic_genotypes(&truth, 200, &mut rng);
        let found = discover_poset(&data, &eps0).map_err(|e| e.to_string())?;
        if (0..n).all(|x| (0..n).all(|y| !truth[x][y] || found.leq[x][y])) {
            hits += 1;
        }
    }
    ensure(hits >= 95, || format!("superset recovered in {hits}/100 trials"))?;
    Ok(format!("fixtures recovered, synthetic superset in {hits}/100"))
}

fn criterion_10() -> Outcome {
    let d4 = Distribution::Uniform { n: 4 };
    let f = Conjunction::new(4, &[1, 3]).unwrap();
    let same = perf(&f, &f, &d4, PerfMode::Exact, Execution::Sequential).map_err(|e| e.to_string())?;
    let neg = perf(&Negated(f), &f, &d4, PerfMode::Exact, Execution::Sequential).map_err(|e| e.to_string())?;
    ensure(same == 1.0 && neg == -1.0, || format!("perf identities gave {same} and {neg}"))?;

    let mut rng = stream_rng(10, 0);
    let mut reached = 0;
    for run in 0..50u64 {
        let n = rng.random_range(1..=10);
        let lits: Vec<usize> = (1..=n).filter(|_| rng.random_bool(0.5)).collect();
        let target = Conjunction::new(n, &lits).unwrap();
        let opts = EvolveOptions { perf_mode: PerfMode::Exact, ..Default::default() };
        let mut evo_rng = stream_rng(1000 + run, 0);
        let trace = evolve_conjunction(&target, &Distribution::Uniform { n }, &opts, &mut evo_rng)
            .map_err(|e| e.to_string())?;
        if trace.optimum_at.is_some_and(|g| g <= 500) {
            reached += 1;
        }
    }
    ensure(reached * 100 >= 90 * 50, || format!("optimum reached in {reached}/50 runs"))?;
    Ok(format!("perf identities exact, optimum reached in {reached}/50"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("jacobian fidelity", criterion_1, Duration::from_secs(1)),
        ("equilibrium reproduction", criterion_2, Duration::from_secs(1)),
        ("stochastic two-step solver", criterion_3, Duration::from_secs(30)),
        ("moran fixation", criterion_4, Duration::from_secs(10)),
        ("diversity", criterion_5, Duration::from_secs(20)),
        ("bisimulation", criterion_6, Duration::from_secs(30)),
        ("metric yoneda isometry", criterion_7, Duration::from_secs(5)),
        ("separoid axioms", criterion_8, Duration::from_secs(10)),
        ("poset discovery", criterion_9, Duration::from_secs(10)),
        ("evolvability", criterion_10, Duration::from_secs(20)),
    ];
    let mut failed = Vec::new();
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > *limit => Err(format!("{msg}; took {elapsed:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("criterion {:2} {name}: PASS ({elapsed:.2?}) {msg}", i + 1),
            Err(msg) => {
                println!("criterion {:2} {name}: FAIL ({elapsed:.2?}) {msg}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
