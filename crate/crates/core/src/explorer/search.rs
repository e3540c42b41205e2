use std::collections::{HashMap, HashSet};
use std::time::Instant;

use rayon::prelude::*;

use crate::model::{ActionKind, ModelProgram};
use crate::semantics::{
    apply, check_invariants, check_transition, enabled, initial_configuration, successors_with_hook,
    Configuration, EngineHook, ErrorClass, Options, Pid, RuleId, Transition,
};

use super::canon::{canonical_key, canonical_key_debug, CanonicalKey};
use super::{ExploreOptions, Lts, StateRecord, Stats, Strategy, Trace, TraceStep, Verdict};

/// Result of a full (or bounded) exploration.
#[derive(Clone, Debug)]
pub struct Exploration {
    pub lts: Lts,
    pub stats: Stats,
    /// One trace per reachable error class in class order, then one to a
    /// stuck state if any.
    pub traces: Vec<Trace>,
    /// Engine invariant violations, when checking was requested.
    pub violations: Vec<String>,
    pub options: ExploreOptions,
}

impl Exploration {
    pub fn error_classes(&self) -> Vec<ErrorClass> {
        let mut v: Vec<ErrorClass> = self.lts.states.iter().filter_map(|s| s.verdict.error_class()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn terminals(&self) -> impl Iterator<Item = &StateRecord> {
        self.lts.states.iter().filter(|s| s.verdict.is_terminal())
    }
}

/// Result of an on-the-fly counterexample search.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub trace: Option<Trace>,
    pub stats: Stats,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("step {step}: {rule} on processor {pid} is not enabled")]
    Divergence { step: usize, rule: RuleId, pid: Pid },
    #[error("replay ends in state {found}, trace recorded {expected}")]
    KeyMismatch { expected: String, found: String },
}

struct Successor {
    t: Transition,
    folded: Vec<(RuleId, Pid)>,
    config: Configuration,
    key: CanonicalKey,
}

struct Expansion {
    succ: Vec<Successor>,
    verdict: Verdict,
    violations: Vec<String>,
}

fn key(opts: &ExploreOptions, c: &Configuration) -> CanonicalKey {
    if opts.debug_keys {
        canonical_key_debug(c)
    } else {
        canonical_key(c)
    }
}

fn check_step(program: &ModelProgram, config: &Configuration, succ: &[(Transition, Configuration)], out: &mut Vec<String>) {
    out.extend(check_invariants(config));
    if succ.windows(2).any(|w| w[0].0.level != w[1].0.level) {
        out.push("enabled transitions span several priority levels".into());
    }
    for (t, next) in succ {
        out.extend(check_transition(program, config, t, next));
    }
}

/// Longest run of folded steps before a state is stored anyway.
const MAX_FOLD: usize = 100_000;
/// Folded runs longer than this are watched for repeated states.
const WATCH_CYCLES: usize = 64;

fn expand(program: &ModelProgram, opts: &ExploreOptions, config: &Configuration, hook: &mut dyn EngineHook) -> Expansion {
    let mut violations = Vec::new();
    if let Some(error) = &config.error {
        if opts.check_invariants {
            violations.extend(check_invariants(config));
            if !enabled(program, config).is_empty() {
                violations.push("error state has enabled transitions".into());
            }
        }
        return Expansion { succ: Vec::new(), verdict: Verdict::Error { error: error.clone() }, violations };
    }
    let raw = successors_with_hook(program, config, hook);
    if opts.check_invariants {
        check_step(program, config, &raw, &mut violations);
    }
    let verdict = if !raw.is_empty() {
        Verdict::Nonterminal
    } else if config.all_idle() {
        Verdict::OkIdle
    } else {
        Verdict::Stuck
    };
    let mut succ = Vec::with_capacity(raw.len());
    for (t, mut c) in raw {
        let mut folded = Vec::new();
        let mut seen = HashSet::new();
        let mut k = None;
        while opts.fold && c.error.is_none() && folded.len() < MAX_FOLD {
            let mut next = successors_with_hook(program, &c, hook);
            if next.len() != 1 || next[0].0.rule == RuleId::FailWaitCondition {
                break;
            }
            if folded.len() >= WATCH_CYCLES {
                let here = key(opts, &c);
                if !seen.insert(here.digest) {
                    k = Some(here);
                    break;
                }
            }
            if opts.check_invariants {
                check_step(program, &c, &next, &mut violations);
            }
            let (t2, c2) = next.pop().unwrap();
            folded.push((t2.rule, t2.pid));
            c = c2;
        }
        let k = k.unwrap_or_else(|| key(opts, &c));
        succ.push(Successor { t, folded, config: c, key: k });
    }
    Expansion { succ, verdict, violations }
}

struct Search<'a> {
    program: &'a ModelProgram,
    opts: &'a ExploreOptions,
    lts: Lts,
    index: HashMap<u128, u32>,
    stats: Stats,
    violations: Vec<String>,
}

enum Admit {
    New(u32),
    Known(u32),
    Rejected,
}

impl<'a> Search<'a> {
    fn new(program: &'a ModelProgram, opts: &'a ExploreOptions) -> Self {
        Self { program, opts, lts: Lts::default(), index: HashMap::new(), stats: Stats::default(), violations: Vec::new() }
    }

    fn admit(
        &mut self,
        k: CanonicalKey,
        parent: Option<(u32, RuleId, Pid)>,
        folded: Vec<(RuleId, Pid)>,
        config: &Configuration,
    ) -> Admit {
        if let Some(&i) = self.index.get(&k.digest) {
            self.stats.dedup_hits += 1;
            return Admit::Known(i);
        }
        if self.opts.bound.is_some_and(|b| self.lts.states.len() >= b) {
            self.stats.bounded = true;
            return Admit::Rejected;
        }
        let i = self.lts.states.len() as u32;
        let depth = parent.map_or(0, |(p, _, _)| self.lts.states[p as usize].depth + 1);
        self.stats.max_depth = self.stats.max_depth.max(depth as usize);
        self.index.insert(k.digest, i);
        let keep = self.opts.keep_configs || config.error.is_some();
        self.lts.states.push(StateRecord {
            key: k,
            parent,
            folded,
            depth,
            verdict: Verdict::Nonterminal,
            config: keep.then(|| config.clone()),
        });
        Admit::New(i)
    }

    /// Records an expansion; returns the newly admitted successors and the
    /// first of them satisfying `stop`, if any.
    fn merge(
        &mut self,
        src: u32,
        src_config: &Configuration,
        e: Expansion,
        stop: &dyn Fn(&Configuration) -> bool,
    ) -> (Vec<(u32, Configuration)>, Option<u32>) {
        self.violations.extend(e.violations);
        let terminal = e.verdict.is_terminal();
        self.lts.states[src as usize].verdict = e.verdict;
        if terminal && self.lts.states[src as usize].config.is_none() {
            self.lts.states[src as usize].config = Some(src_config.clone());
        }
        let mut fresh = Vec::new();
        for Successor { t, folded, config: c, key: k } in e.succ {
            match self.admit(k, Some((src, t.rule, t.pid)), folded, &c) {
                Admit::Known(d) => self.lts.transitions.push((src, t.rule, t.pid, d)),
                Admit::New(d) => {
                    self.lts.transitions.push((src, t.rule, t.pid, d));
                    if stop(&c) {
                        self.record_terminal(d, &c);
                        return (fresh, Some(d));
                    }
                    fresh.push((d, c));
                }
                Admit::Rejected => {}
            }
        }
        (fresh, None)
    }

    fn record_terminal(&mut self, i: u32, c: &Configuration) {
        if let Some(error) = &c.error {
            self.lts.states[i as usize].verdict = Verdict::Error { error: error.clone() };
        }
    }

    fn run(&mut self, hook: Option<&mut dyn EngineHook>, stop: &dyn Fn(&Configuration) -> bool) -> Option<u32> {
        let init = initial_configuration(self.program, self.opts.engine);
        let k = key(self.opts, &init);
        let Admit::New(root) = self.admit(k, None, Vec::new(), &init) else { unreachable!() };
        if stop(&init) {
            self.record_terminal(root, &init);
            return Some(root);
        }
        match self.opts.strategy {
            Strategy::Bfs => self.bfs(root, init, hook, stop),
            Strategy::Dfs => self.dfs(root, init, hook, stop),
        }
    }

    fn bfs(
        &mut self,
        root: u32,
        init: Configuration,
        mut hook: Option<&mut dyn EngineHook>,
        stop: &dyn Fn(&Configuration) -> bool,
    ) -> Option<u32> {
        let mut level = vec![(root, init)];
        let parallel = self.opts.jobs > 1 && hook.is_none();
        let pool = parallel.then(|| rayon::ThreadPoolBuilder::new().num_threads(self.opts.jobs).build().ok()).flatten();
        while !level.is_empty() {
            self.stats.peak_frontier = self.stats.peak_frontier.max(level.len());
            let (program, opts) = (self.program, self.opts);
            let expansions: Vec<Expansion> = match (&pool, hook.as_deref_mut()) {
                (Some(pool), _) => {
                    pool.install(|| level.par_iter().map(|(_, c)| expand(program, opts, c, &mut ())).collect())
                }
                (None, Some(h)) => level.iter().map(|(_, c)| expand(program, opts, c, h)).collect(),
                (None, None) => level.iter().map(|(_, c)| expand(program, opts, c, &mut ())).collect(),
            };
            let mut next = Vec::new();
            for ((src, c), e) in level.iter().zip(expansions) {
                let (fresh, hit) = self.merge(*src, c, e, stop);
                if hit.is_some() {
                    return hit;
                }
                next.extend(fresh);
            }
            level = next;
        }
        None
    }

    fn dfs(
        &mut self,
        root: u32,
        init: Configuration,
        mut hook: Option<&mut dyn EngineHook>,
        stop: &dyn Fn(&Configuration) -> bool,
    ) -> Option<u32> {
        let mut stack = vec![(root, init)];
        while let Some((src, c)) = stack.pop() {
            let e = match hook.as_deref_mut() {
                Some(h) => expand(self.program, self.opts, &c, h),
                None => expand(self.program, self.opts, &c, &mut ()),
            };
            let (fresh, hit) = self.merge(src, &c, e, stop);
            if hit.is_some() {
                return hit;
            }
            stack.extend(fresh.into_iter().rev());
            self.stats.peak_frontier = self.stats.peak_frontier.max(stack.len());
        }
        None
    }

    fn trace_to(&self, i: u32) -> Trace {
        let moves = self.lts.path_to(i);
        let steps = describe(self.program, self.opts.engine, &moves);
        let rec = &self.lts.states[i as usize];
        Trace { steps, verdict: rec.verdict.clone(), final_key: rec.key.to_string() }
    }

    fn finish(mut self, started: Instant) -> (Lts, Stats, Vec<String>) {
        self.stats.states = self.lts.states.len();
        self.stats.transitions = self.lts.transitions.len();
        self.stats.wall_time_secs = started.elapsed().as_secs_f64();
        (self.lts, self.stats, self.violations)
    }
}

/// Human-readable descriptions for a sequence of moves, by replay.
fn describe(program: &ModelProgram, options: Options, moves: &[(RuleId, Pid)]) -> Vec<TraceStep> {
    let mut c = initial_configuration(program, options);
    let mut out = Vec::with_capacity(moves.len());
    for (n, &(rule, pid)) in moves.iter().enumerate() {
        out.push(TraceStep { step: n + 1, rule, proc: pid, desc: step_description(program, &c, rule, pid) });
        match apply(program, &c, rule, pid) {
            Ok(next) => c = next,
            Err(_) => break,
        }
    }
    out
}

fn step_description(program: &ModelProgram, c: &Configuration, rule: RuleId, pid: Pid) -> String {
    let p = c.processor(pid);
    match rule {
        RuleId::PassToken => return format!("token passes from processor {pid} to {}", pid + 1),
        RuleId::PassTokenFirst => return format!("token returns to processor {}", c.first_processor),
        RuleId::ResetToken => return format!("token reset to processor {}", c.first_processor),
        RuleId::CleanupToken => return format!("token removed from processor {pid}"),
        RuleId::QueueRemove => {
            if let Some(r) = p.queue.front() {
                return format!("processor {pid} starts {}", program.feature_label(r.feature));
            }
        }
        _ => {}
    }
    let Some(f) = p.top() else { return format!("processor {pid}: {rule}") };
    let g = program.feature(f.feature);
    let label = program.feature_label(f.feature);
    let action = match g.state(f.state).out.first() {
        Some(a) => match &g.action(*a).kind {
            ActionKind::Test { cond, .. } if rule == RuleId::Test => {
                format!("test {}", program.render_expr(f.feature, cond))
            }
            kind => program.render_action(f.feature, kind),
        },
        None => String::new(),
    };
    format!("processor {pid} in {label}: {action}")
}

pub fn explore(program: &ModelProgram, opts: &ExploreOptions) -> Exploration {
    run_exploration(program, opts, None)
}

/// Sequential exploration reporting every applied transition to `hook`.
pub fn explore_with_hook(program: &ModelProgram, opts: &ExploreOptions, hook: &mut dyn EngineHook) -> Exploration {
    run_exploration(program, opts, Some(hook))
}

fn run_exploration(program: &ModelProgram, opts: &ExploreOptions, hook: Option<&mut dyn EngineHook>) -> Exploration {
    let started = Instant::now();
    let mut s = Search::new(program, opts);
    s.run(hook, &|_| false);
    let mut traces = Vec::new();
    for class in ErrorClass::ALL {
        if let Some(i) = s.lts.states.iter().position(|r| r.verdict.error_class() == Some(class)) {
            traces.push(s.trace_to(i as u32));
        }
    }
    if let Some(i) = s.lts.states.iter().position(|r| r.verdict == Verdict::Stuck) {
        traces.push(s.trace_to(i as u32));
    }
    let (lts, stats, violations) = s.finish(started);
    Exploration { lts, stats, traces, violations, options: opts.clone() }
}

/// Stops at the first state whose error is in `classes`.
pub fn find_counterexample(program: &ModelProgram, classes: &[ErrorClass], opts: &ExploreOptions) -> SearchOutcome {
    let started = Instant::now();
    let mut s = Search::new(program, opts);
    let stop = |c: &Configuration| c.error.as_ref().is_some_and(|e| classes.contains(&e.class));
    let hit = s.run(None, &stop);
    let trace = hit.map(|i| s.trace_to(i));
    let (_, stats, _) = s.finish(started);
    SearchOutcome { trace, stats }
}

pub fn replay_steps(program: &ModelProgram, options: Options, moves: &[(RuleId, Pid)]) -> Result<Configuration, ReplayError> {
    let mut c = initial_configuration(program, options);
    for (n, &(rule, pid)) in moves.iter().enumerate() {
        c = apply(program, &c, rule, pid).map_err(|_| ReplayError::Divergence { step: n + 1, rule, pid })?;
    }
    Ok(c)
}

/// Replays `trace` and checks that it ends in the recorded state.
pub fn replay(program: &ModelProgram, options: Options, trace: &Trace) -> Result<Configuration, ReplayError> {
    let c = replay_steps(program, options, &trace.moves())?;
    let found = canonical_key(&c).to_string();
    if found != trace.final_key {
        return Err(ReplayError::KeyMismatch { expected: trace.final_key.clone(), found });
    }
    Ok(c)
}
