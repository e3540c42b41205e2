//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use coopcheck::corpus::{default_selection, Benchmark};
use coopcheck::explorer::{
    explore, explore_with_hook, find_counterexample, replay, summarize, Exploration, ExploreOptions, Strategy,
    Verdict,
};
use coopcheck::model::{lower_sources, ModelProgram, RootSpec};
use coopcheck::semantics::{
    blocking_graph, detect_errors, find_cycle, ConditionClass, ConditionEvent, Configuration, EngineHook, ErrorClass,
    Options, Pid, RuleId, Status, Value,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn bench(s: &str) -> Benchmark {
    s.parse().unwrap_or_else(|e| panic!("{s}: {e}"))
}

fn lower(b: &Benchmark) -> ModelProgram {
    let p = lower_sources(&b.instantiate(), &b.root()).unwrap_or_else(|e| panic!("{b}: {e}"));
    assert!(p.warnings.is_empty(), "{b}: {:?}", p.warnings);
    p
}

fn base_options(token: bool) -> ExploreOptions {
    ExploreOptions {
        engine: Options { token, ..Options::default() },
        check_invariants: true,
        ..ExploreOptions::default()
    }
}

fn classes(e: &Exploration) -> BTreeSet<ErrorClass> {
    e.error_classes().into_iter().collect()
}

fn terminal_kinds(e: &Exploration) -> BTreeSet<String> {
    e.terminals()
        .map(|s| match &s.verdict {
            Verdict::Error { error } => error.class.as_str().to_string(),
            Verdict::OkIdle => "ok_idle".into(),
            Verdict::Stuck => "stuck".into(),
            Verdict::Nonterminal => "nonterminal".into(),
        })
        .collect()
}

/// Explorations shared between criteria, keyed by instance and token mode.
#[derive(Default)]
struct Runs {
    cache: HashMap<(String, bool), (ModelProgram, Exploration)>,
}

impl Runs {
    fn get(&mut self, b: &Benchmark, token: bool) -> &(ModelProgram, Exploration) {
        self.cache.entry((b.to_string(), token)).or_insert_with(|| {
            let p = lower(b);
            let e = explore(&p, &base_options(token));
            (p, e)
        })
    }
}

fn corpus() -> Vec<Benchmark> {
    let mut all = default_selection();
    for s in ["DP(3,2,eat)", "DP(4,1,eat)", "DP(2,1,eat,zero_id)", "DP(2,1,eat,broken_post)"] {
        all.push(bench(s));
    }
    all
}

fn is_cs(b: &Benchmark) -> bool {
    matches!(b, Benchmark::Cs { .. })
}

fn class_of_region(program: &ModelProgram, config: &Configuration, pid: Pid) -> Vec<String> {
    config
        .processor(pid)
        .region
        .iter()
        .map(|&o| program.classes[config.object(o).class as usize].name.clone())
        .collect()
}

fn deadlock_shape(program: &ModelProgram, config: &Configuration, n: usize) -> Result<(), String> {
    let err = config.error.clone().or_else(|| detect_errors(config)).ok_or("final state has no error")?;
    ensure!(err.class == ErrorClass::Deadlock, "final error is {}", err.class);
    let cycle = find_cycle(&blocking_graph(config)).ok_or("no cycle in the lock-wait graph")?;
    ensure!(cycle.len() == n, "cycle {cycle:?} does not involve all {n} philosophers");
    let is_fork = |p: Pid| class_of_region(program, config, p).iter().any(|c| c == "FORK");
    let held: Vec<Vec<Pid>> =
        cycle.iter().map(|&p| config.held_by(p).into_iter().filter(|&f| is_fork(f)).collect()).collect();
    for (i, &p) in cycle.iter().enumerate() {
        ensure!(
            class_of_region(program, config, p).iter().any(|c| c == "PHILOSOPHER"),
            "processor {p} in the cycle is not a philosopher"
        );
        ensure!(held[i].len() == 1, "philosopher {p} holds {} fork locks", held[i].len());
        let next = &held[(i + 1) % cycle.len()];
        match &config.processor(p).status {
            Status::AwaitingLocks(ws) => {
                ensure!(ws.contains(&next[0]), "philosopher {p} does not wait on the next philosopher's fork")
            }
            other => return Err(format!("philosopher {p} is {other:?}")),
        }
    }
    Ok(())
}

fn deadlock_reproduction(_: &mut Runs) -> Outcome {
    let mut details = Vec::new();
    for (s, n) in [("DP(2,1,bad_eat)", 2), ("DP(3,1,bad_eat)", 3)] {
        let b = bench(s);
        let p = lower(&b);
        let start = Instant::now();
        let e = explore(&p, &ExploreOptions::default());
        let secs = start.elapsed().as_secs_f64();
        ensure!(!e.stats.bounded, "{s}: bounded");
        ensure!(classes(&e).contains(&ErrorClass::Deadlock), "{s}: deadlock not reachable");
        let trace = e
            .traces
            .iter()
            .find(|t| t.verdict.error_class() == Some(ErrorClass::Deadlock))
            .ok_or(format!("{s}: no deadlock trace"))?;
        let last = replay(&p, Options::default(), trace).map_err(|err| format!("{s}: replay failed: {err:?}"))?;
        deadlock_shape(&p, &last, n).map_err(|err| format!("{s}: {err}"))?;
        ensure!(secs < 10.0, "{s}: {secs:.2}s exceeds 10s");
        details.push(format!("{s} {} steps {secs:.2}s", trace.steps.len()));
    }
    Ok(details.join(", "))
}

fn deadlock_freedom(_: &mut Runs) -> Outcome {
    let mut details = Vec::new();
    for s in ["DP(2,1,eat)", "DP(3,1,eat)", "DP(3,2,eat)", "DP(4,1,eat)"] {
        let p = lower(&bench(s));
        let start = Instant::now();
        let e = explore(&p, &ExploreOptions::default());
        let secs = start.elapsed().as_secs_f64();
        ensure!(!e.stats.bounded, "{s}: bounded");
        ensure!(classes(&e).is_empty(), "{s}: errors {:?}", classes(&e));
        ensure!(e.terminals().all(|t| t.verdict == Verdict::OkIdle), "{s}: non-ok terminal {:?}", terminal_kinds(&e));
        ensure!(secs < 60.0, "{s}: {secs:.2}s exceeds 60s");
        details.push(format!("{s} {} states {secs:.2}s", e.stats.states));
    }
    Ok(details.join(", "))
}

fn contract_checks(runs: &mut Runs) -> Outcome {
    for s in ["DP(1,1,eat)", "DP(2,1,eat)", "DP(3,1,eat)", "DP(2,1,bad_eat)", "DP(3,1,bad_eat)"] {
        let found = classes(&runs.get(&bench(s), true).1);
        ensure!(
            !found.contains(&ErrorClass::PreconditionFail) && !found.contains(&ErrorClass::PostconditionFail),
            "{s}: contract failure {found:?}"
        );
    }
    let zero = classes(&runs.get(&bench("DP(2,1,eat,zero_id)"), true).1);
    ensure!(zero.contains(&ErrorClass::PreconditionFail), "zero id: found {zero:?}");
    let broken = bench("DP(2,1,eat,broken_post)");
    let on = classes(&runs.get(&broken, true).1);
    ensure!(on.contains(&ErrorClass::PostconditionFail), "broken postcondition: found {on:?}");
    let p = lower(&broken);
    let off_opts =
        ExploreOptions { engine: Options { postconditions: false, token: true }, ..ExploreOptions::default() };
    let off = explore(&p, &off_opts);
    ensure!(!off.stats.bounded, "postconditions off: bounded");
    ensure!(
        !classes(&off).contains(&ErrorClass::PostconditionFail),
        "postconditions off still reports {:?}",
        classes(&off)
    );
    Ok(format!("zero id {zero:?}, broken postcondition {on:?}, postconditions off {:?}", classes(&off)))
}

fn wait_conditions(runs: &mut Runs) -> Outcome {
    let mut details = Vec::new();
    for s in ["DS(2,2,2,good)", "DS(2,2,2,bad)"] {
        let (_, e) = runs.get(&bench(s), true);
        ensure!(!e.stats.bounded, "{s}: bounded");
        ensure!(classes(e).is_empty(), "{s}: errors {:?}", classes(e));
        let cycle = e.lts.has_cycle_through(RuleId::FailWaitCondition);
        if s.ends_with("bad)") {
            ensure!(cycle, "{s}: no cycle through fail_wait_condition");
        }
        details.push(format!("{s} {} states, wait cycle {cycle}", e.stats.states));
    }
    Ok(details.join(", "))
}

#[derive(Default)]
struct Conditions(Vec<ConditionEvent>);

impl EngineHook for Conditions {
    fn on_condition(&mut self, event: &ConditionEvent) {
        self.0.push(event.clone());
    }
}

fn condition_classification(_: &mut Runs) -> Outcome {
    let mut details = Vec::new();
    for (s, want) in [("DS(2,2,2,good)", ConditionClass::Precondition), ("DS(2,2,2,bad)", ConditionClass::WaitCondition)]
    {
        let p = lower(&bench(s));
        let mut hook = Conditions::default();
        explore_with_hook(&p, &ExploreOptions::default(), &mut hook);
        let events: Vec<&ConditionEvent> =
            hook.0.iter().filter(|e| e.feature == "SAVAGE.get_serving_from_pot").collect();
        ensure!(!events.is_empty(), "{s}: get_serving_from_pot never evaluated its precondition");
        let other: Vec<_> = events.iter().filter(|e| e.class != want).collect();
        ensure!(other.is_empty(), "{s}: {} of {} evaluations classified otherwise", other.len(), events.len());
        let failing = events.iter().filter(|e| !e.holds).count();
        details.push(format!("{s} {} evaluations ({failing} failing) all {want:?}", events.len()));
    }
    Ok(details.join(", "))
}

fn cigarette_smokers(runs: &mut Runs) -> Outcome {
    let (_, e) = runs.get(&bench("CS(1)"), true);
    ensure!(!e.stats.bounded, "bounded");
    ensure!(classes(e).is_empty(), "errors {:?}", classes(e));
    Ok(format!("{} states {:.1}s", e.stats.states, e.stats.wall_time_secs))
}

fn token_reduction(runs: &mut Runs) -> Outcome {
    let dp = bench("DP(2,1,eat)");
    let on = runs.get(&dp, true).1.stats.states;
    let off = runs.get(&dp, false).1.stats.states;
    let ratio = off as f64 / on as f64;
    ensure!(ratio >= 3.0, "ratio {off}/{on} = {ratio:.2} below 3");
    let mut compared = 0;
    for b in corpus().iter().filter(|b| !is_cs(b)) {
        let (a, ka) = {
            let e = &runs.get(b, true).1;
            (classes(e), terminal_kinds(e))
        };
        let e = &runs.get(b, false).1;
        ensure!(!e.stats.bounded, "{b}: token off bounded");
        ensure!(a == classes(e), "{b}: token on {a:?}, off {:?}", classes(e));
        ensure!(ka == terminal_kinds(e), "{b}: terminal kinds differ");
        compared += 1;
    }
    Ok(format!("DP(2,1,eat) {off}/{on} = {ratio:.1}, verdicts equal on {compared} instances"))
}

fn determinism(runs: &mut Runs) -> Outcome {
    for b in corpus() {
        let (p, first) = runs.get(&b, true);
        let second = explore(p, &base_options(true));
        ensure!(first.stats.same_counts(&second.stats), "{b}: stats differ");
        ensure!(first.lts.key_set() == second.lts.key_set(), "{b}: state sets differ");
        ensure!(summarize(p, first).to_json() == summarize(p, &second).to_json(), "{b}: reports differ");
    }
    let mut details = Vec::new();
    for s in ["DP(2,1,eat)", "SEPC(5)"] {
        let p = lower(&bench(s));
        let bfs = explore(&p, &ExploreOptions::default());
        let dfs = explore(&p, &ExploreOptions { strategy: Strategy::Dfs, ..ExploreOptions::default() });
        ensure!(bfs.lts.key_set() == dfs.lts.key_set(), "{s}: BFS and DFS state sets differ");
        ensure!(bfs.lts.edge_set() == dfs.lts.edge_set(), "{s}: BFS and DFS edge sets differ");
        ensure!(classes(&bfs) == classes(&dfs), "{s}: verdicts differ");
        ensure!(terminal_kinds(&bfs) == terminal_kinds(&dfs), "{s}: terminal kinds differ");
        details.push(format!("{s} {} states", bfs.stats.states));
    }
    Ok(format!("{} instances repeated; bfs = dfs on {}", corpus().len(), details.join(", ")))
}

fn invariant_suite(runs: &mut Runs) -> Outcome {
    let mut states = 0;
    for b in corpus() {
        let (_, e) = runs.get(&b, true);
        ensure!(e.violations.is_empty(), "{b}: {}", e.violations[0]);
        states += e.stats.states;
    }
    Ok(format!("{} instances, {states} states checked", corpus().len()))
}

fn counterexample_parity(runs: &mut Runs) -> Outcome {
    let mut details = Vec::new();
    for s in ["DP(2,1,eat)", "DP(3,1,eat)", "DP(3,2,eat)", "DP(4,1,eat)", "DP(2,1,bad_eat)", "DP(3,1,bad_eat)"] {
        let b = bench(s);
        let (p, full) = runs.get(&b, true);
        let expected = classes(full).contains(&ErrorClass::Deadlock);
        let found = find_counterexample(p, &[ErrorClass::Deadlock], &ExploreOptions::default());
        ensure!(found.trace.is_some() == expected, "{s}: search says {}, full says {expected}", found.trace.is_some());
        if expected {
            ensure!(
                found.stats.states <= full.stats.states,
                "{s}: search explored {} > {}",
                found.stats.states,
                full.stats.states
            );
            details.push(format!("{s} {}/{}", found.stats.states, full.stats.states));
        }
    }
    Ok(format!("verdicts agree; bad_eat search/full states {}", details.join(", ")))
}

mod oracle {
    //! Generated single-processor programs and a direct interpreter for them.

    use proptest::collection::vec;
    use proptest::prelude::*;

    #[derive(Clone, Copy, Debug)]
    pub enum Op {
        Add,
        Sub,
        Mul,
    }

    #[derive(Clone, Debug)]
    pub enum E {
        Lit(i64),
        Var(usize),
        Bin(Op, Box<E>, Box<E>),
        Div(Box<E>, i64),
        Twice(Box<E>),
    }

    #[derive(Clone, Copy, Debug)]
    pub enum Cmp {
        Lt,
        Le,
        Eq,
        Ne,
    }

    #[derive(Clone, Debug)]
    pub enum B {
        Flag,
        Cmp(Cmp, E, E),
        Not(Box<B>),
        And(Box<B>, Box<B>),
        Or(Box<B>, Box<B>),
    }

    #[derive(Clone, Debug)]
    pub enum S {
        Assign(usize, E),
        SetFlag(B),
        Bump(E),
        If(B, Vec<S>, Vec<S>),
        Loop(i64, Vec<S>),
    }

    const VARS: [&str; 3] = ["a", "b", "c"];

    fn expr() -> impl Strategy<Value = E> {
        let leaf = prop_oneof![(0i64..10).prop_map(E::Lit), (0usize..3).prop_map(E::Var)];
        leaf.prop_recursive(3, 10, 2, |inner| {
            let op = prop_oneof![Just(Op::Add), Just(Op::Sub), Just(Op::Mul)];
            prop_oneof![
                3 => (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| E::Bin(o, Box::new(a), Box::new(b))),
                1 => (inner.clone(), 1i64..5).prop_map(|(a, d)| E::Div(Box::new(a), d)),
                1 => inner.prop_map(|a| E::Twice(Box::new(a))),
            ]
        })
    }

    fn cond() -> impl Strategy<Value = B> {
        let cmp = prop_oneof![Just(Cmp::Lt), Just(Cmp::Le), Just(Cmp::Eq), Just(Cmp::Ne)];
        let leaf = prop_oneof![
            1 => Just(B::Flag),
            3 => (cmp, expr(), expr()).prop_map(|(c, a, b)| B::Cmp(c, a, b)),
        ];
        leaf.prop_recursive(2, 6, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|b| B::Not(Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| B::And(Box::new(a), Box::new(b))),
                (inner.clone(), inner).prop_map(|(a, b)| B::Or(Box::new(a), Box::new(b))),
            ]
        })
    }

    pub fn block(depth: u32) -> BoxedStrategy<Vec<S>> {
        let simple = prop_oneof![
            3 => ((0usize..3), expr()).prop_map(|(v, e)| S::Assign(v, e)),
            1 => cond().prop_map(S::SetFlag),
            1 => expr().prop_map(S::Bump),
        ];
        if depth == 0 {
            return vec(simple, 1..4).boxed();
        }
        let nested = prop_oneof![
            4 => simple,
            1 => (cond(), block(depth - 1), block(depth - 1)).prop_map(|(c, t, e)| S::If(c, t, e)),
            1 => ((0i64..4), block(depth - 1)).prop_map(|(n, body)| S::Loop(n, body)),
        ];
        vec(nested, 1..5).boxed()
    }

    fn render_expr(e: &E) -> String {
        match e {
            E::Lit(v) => v.to_string(),
            E::Var(i) => VARS[*i].to_string(),
            E::Bin(op, a, b) => {
                let o = match op {
                    Op::Add => "+",
                    Op::Sub => "-",
                    Op::Mul => "*",
                };
                format!("({} {o} {})", render_expr(a), render_expr(b))
            }
            E::Div(a, d) => format!("({} // {d})", render_expr(a)),
            E::Twice(a) => format!("twice ({})", render_expr(a)),
        }
    }

    fn render_cond(b: &B) -> String {
        match b {
            B::Flag => "flag".into(),
            B::Cmp(c, x, y) => {
                let o = match c {
                    Cmp::Lt => "<",
                    Cmp::Le => "<=",
                    Cmp::Eq => "=",
                    Cmp::Ne => "/=",
                };
                format!("({} {o} {})", render_expr(x), render_expr(y))
            }
            B::Not(x) => format!("(not {})", render_cond(x)),
            B::And(x, y) => format!("({} and {})", render_cond(x), render_cond(y)),
            B::Or(x, y) => format!("({} or {})", render_cond(x), render_cond(y)),
        }
    }

    fn render_block(out: &mut String, body: &[S], indent: usize, loops: usize) {
        let pad = "\t".repeat(indent);
        for s in body {
            match s {
                S::Assign(v, e) => out.push_str(&format!("{pad}{} := {}\n", VARS[*v], render_expr(e))),
                S::SetFlag(b) => out.push_str(&format!("{pad}flag := {}\n", render_cond(b))),
                S::Bump(e) => out.push_str(&format!("{pad}bump ({})\n", render_expr(e))),
                S::If(c, t, e) => {
                    out.push_str(&format!("{pad}if {} then\n", render_cond(c)));
                    render_block(out, t, indent + 1, loops);
                    out.push_str(&format!("{pad}else\n"));
                    render_block(out, e, indent + 1, loops);
                    out.push_str(&format!("{pad}end\n"));
                }
                S::Loop(n, inner) => {
                    let k = format!("k{}", loops + 1);
                    out.push_str(&format!("{pad}from {k} := 0 until {k} >= {n} loop\n"));
                    render_block(out, inner, indent + 1, loops + 1);
                    out.push_str(&format!("{pad}\t{k} := {k} + 1\n{pad}end\n"));
                }
            }
        }
    }

    pub fn render(body: &[S]) -> String {
        let mut make = String::new();
        render_block(&mut make, body, 3, 0);
        format!(
            "class APPLICATION\ncreate make\nfeature\n\ta, b, c: INTEGER\n\tflag: BOOLEAN\n\tk1, k2: INTEGER\n\n\
             \tmake\n\t\tdo\n{make}\t\tend\n\n\
             \tbump (x: INTEGER)\n\t\tdo\n\t\t\ta := a + x\n\t\tend\n\n\
             \ttwice (x: INTEGER): INTEGER\n\t\tdo\n\t\t\tResult := x * 2\n\t\tend\nend\n"
        )
    }

    /// Final attribute values, or `None` on arithmetic overflow.
    #[derive(Clone, Debug, Default, PartialEq, Eq)]
    pub struct Store {
        pub ints: [i64; 3],
        pub flag: bool,
        pub counters: [i64; 2],
    }

    fn eval(st: &Store, e: &E) -> Option<i64> {
        match e {
            E::Lit(v) => Some(*v),
            E::Var(i) => Some(st.ints[*i]),
            E::Bin(op, a, b) => {
                let (x, y) = (eval(st, a)?, eval(st, b)?);
                match op {
                    Op::Add => x.checked_add(y),
                    Op::Sub => x.checked_sub(y),
                    Op::Mul => x.checked_mul(y),
                }
            }
            E::Div(a, d) => eval(st, a)?.checked_div(*d),
            E::Twice(a) => eval(st, a)?.checked_mul(2),
        }
    }

    fn test(st: &Store, b: &B) -> Option<bool> {
        Some(match b {
            B::Flag => st.flag,
            B::Cmp(c, x, y) => {
                let (x, y) = (eval(st, x)?, eval(st, y)?);
                match c {
                    Cmp::Lt => x < y,
                    Cmp::Le => x <= y,
                    Cmp::Eq => x == y,
                    Cmp::Ne => x != y,
                }
            }
            B::Not(x) => !test(st, x)?,
            B::And(x, y) => {
                let l = test(st, x)?;
                test(st, y)? && l
            }
            B::Or(x, y) => {
                let l = test(st, x)?;
                test(st, y)? || l
            }
        })
    }

    fn exec(st: &mut Store, body: &[S], loops: usize) -> Option<()> {
        for s in body {
            match s {
                S::Assign(v, e) => st.ints[*v] = eval(st, e)?,
                S::SetFlag(b) => st.flag = test(st, b)?,
                S::Bump(e) => {
                    let x = eval(st, e)?;
                    st.ints[0] = st.ints[0].checked_add(x)?;
                }
                S::If(c, t, e) => {
                    if test(st, c)? {
                        exec(st, t, loops)?
                    } else {
                        exec(st, e, loops)?
                    }
                }
                S::Loop(n, inner) => {
                    st.counters[loops] = 0;
                    while st.counters[loops] < *n {
                        exec(st, inner, loops + 1)?;
                        st.counters[loops] += 1;
                    }
                }
            }
        }
        Some(())
    }

    pub fn run(body: &[S]) -> Option<Store> {
        let mut st = Store::default();
        exec(&mut st, body, 0)?;
        Some(st)
    }
}

fn engine_store(program: &ModelProgram, config: &Configuration) -> Result<oracle::Store, String> {
    let root = config
        .objects
        .iter()
        .find(|o| program.classes[o.class as usize].name == "APPLICATION")
        .ok_or("no root object")?;
    let slots: BTreeMap<&str, Value> = program.classes[root.class as usize]
        .template
        .slots
        .iter()
        .zip(&root.slots)
        .map(|((name, _), v)| (name.as_str(), *v))
        .collect();
    let int = |n: &str| match slots.get(n) {
        Some(Value::Int(v)) => Ok(*v),
        other => Err(format!("slot {n} is {other:?}")),
    };
    Ok(oracle::Store {
        ints: [int("a")?, int("b")?, int("c")?],
        flag: match slots.get("flag") {
            Some(Value::Bool(b)) => *b,
            other => return Err(format!("slot flag is {other:?}")),
        },
        counters: [int("k1")?, int("k2")?],
    })
}

fn oracle_equivalence(_: &mut Runs) -> Outcome {
    use proptest::strategy::{Strategy as _, ValueTree};
    use proptest::test_runner::{Config, TestRng, TestRunner};

    let mut runner = TestRunner::new_with_rng(Config::default(), TestRng::deterministic_rng(Config::default().rng_algorithm));
    let strategy = oracle::block(2);
    let root: RootSpec = "APPLICATION.make".parse().map_err(|e| format!("{e}"))?;
    let (mut compared, mut overflows, mut generated) = (0, 0, 0);
    while compared < 20 {
        generated += 1;
        ensure!(generated <= 200, "only {compared} programs without overflow in 200");
        let body = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        let source = oracle::render(&body);
        let program = lower_sources(&[("application.e".into(), source.clone())], &root)
            .map_err(|e| format!("generated program rejected: {e}\n{source}"))?;
        let e = explore(&program, &ExploreOptions::default());
        let terminals: Vec<_> = e.terminals().collect();
        ensure!(terminals.len() == 1, "{} terminal states for\n{source}", terminals.len());
        let t = terminals[0];
        match oracle::run(&body) {
            None => {
                ensure!(
                    t.verdict.error_class() == Some(ErrorClass::IntOverflow),
                    "oracle overflows, engine ends {:?}\n{source}",
                    t.verdict
                );
                overflows += 1;
            }
            Some(want) => {
                ensure!(t.verdict == Verdict::OkIdle, "engine ends {:?}\n{source}", t.verdict);
                let config = t.config.as_ref().ok_or("terminal configuration not kept")?;
                let got = engine_store(&program, config)?;
                ensure!(got == want, "engine {got:?}, oracle {want:?}\n{source}");
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} programs equal, {overflows} overflow verdicts agree"))
}

type Criterion = fn(&mut Runs) -> Outcome;

fn main() {
    let criteria: [(&str, Criterion); 11] = [
        ("deadlock reproduction", deadlock_reproduction),
        ("deadlock freedom", deadlock_freedom),
        ("contract checks", contract_checks),
        ("wait-condition semantics", wait_conditions),
        ("precondition vs wait classification", condition_classification),
        ("cigarette smokers", cigarette_smokers),
        ("token reduction", token_reduction),
        ("determinism and strategy agreement", determinism),
        ("oracle equivalence", oracle_equivalence),
        ("engine invariant suite", invariant_suite),
        ("counterexample search parity", counterexample_parity),
    ];
    let mut runs = Runs::default();
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&mut runs)))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1}s): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
