//! State-space construction over the engine: canonical keys, deduplicated
//! breadth- and depth-first search, counterexample search, replay and
//! reports.

mod canon;
mod report;
mod search;

use serde::Serialize;

use crate::semantics::{EngineError, ErrorClass, Pid, RuleId};

pub use canon::{canonical_form, canonical_key, canonical_key_debug, CanonicalKey};
pub use report::{summarize, summarize_search, ReportOptions, CheckVerdict, ErrorSummary, ModelSize, Report, TerminalCounts};
pub use search::{
    explore, explore_with_hook, find_counterexample, replay, replay_steps, Exploration, ReplayError, SearchOutcome,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Bfs,
    Dfs,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bfs" => Ok(Strategy::Bfs),
            "dfs" => Ok(Strategy::Dfs),
            other => Err(format!("unknown strategy `{other}` (expected bfs or dfs)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExploreOptions {
    pub strategy: Strategy,
    /// Maximum number of distinct states to admit.
    pub bound: Option<usize>,
    pub engine: crate::semantics::Options,
    /// Worker threads for breadth-first expansion.
    pub jobs: usize,
    /// Keep every representative configuration, not only terminal ones.
    pub keep_configs: bool,
    /// Keep full canonical serializations next to the digests.
    pub debug_keys: bool,
    /// Assert the engine invariants on every expanded state.
    pub check_invariants: bool,
    /// Follow single-successor steps without storing the states in between.
    pub fold: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        Self {
            strategy: Strategy::Bfs,
            bound: None,
            engine: crate::semantics::Options::default(),
            jobs: 1,
            keep_configs: false,
            debug_keys: false,
            check_invariants: false,
            fold: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Nonterminal,
    OkIdle,
    Stuck,
    Error { error: EngineError },
}

impl Verdict {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Verdict::Nonterminal)
    }

    pub fn error_class(&self) -> Option<ErrorClass> {
        match self {
            Verdict::Error { error } => Some(error.class),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub rule: RuleId,
    pub proc: Pid,
    pub desc: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    pub verdict: Verdict,
    /// Hex digest of the last state.
    pub final_key: String,
}

impl Trace {
    pub fn moves(&self) -> Vec<(RuleId, Pid)> {
        self.steps.iter().map(|s| (s.rule, s.proc)).collect()
    }

    /// JSON lines, one object per step.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let line = serde_json::json!({
                "step": s.step,
                "rule": s.rule.as_str(),
                "proc": s.proc,
                "desc": s.desc,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Stats {
    pub states: usize,
    pub transitions: usize,
    #[serde(skip)]
    pub wall_time_secs: f64,
    pub peak_frontier: usize,
    pub dedup_hits: usize,
    pub max_depth: usize,
    pub bounded: bool,
}

impl Stats {
    /// Comparison that ignores timing.
    pub fn same_counts(&self, other: &Stats) -> bool {
        let mut a = self.clone();
        a.wall_time_secs = other.wall_time_secs;
        a == *other
    }
}

#[derive(Clone, Debug)]
pub struct StateRecord {
    pub key: CanonicalKey,
    pub parent: Option<(u32, RuleId, Pid)>,
    /// Moves folded into the parent edge after its labelled first move.
    pub folded: Vec<(RuleId, Pid)>,
    pub depth: u32,
    pub verdict: Verdict,
    pub config: Option<crate::semantics::Configuration>,
}

/// Deduplicated state graph. State 0 is the initial state.
#[derive(Clone, Debug, Default)]
pub struct Lts {
    pub states: Vec<StateRecord>,
    pub transitions: Vec<(u32, RuleId, Pid, u32)>,
}

impl Lts {
    /// Moves from the initial state to state `i` along parent edges.
    pub fn path_to(&self, mut i: u32) -> Vec<(RuleId, Pid)> {
        let mut moves = Vec::new();
        while let Some((p, r, pid)) = self.states[i as usize].parent {
            moves.extend(self.states[i as usize].folded.iter().rev());
            moves.push((r, pid));
            i = p;
        }
        moves.reverse();
        moves
    }

    pub fn key_set(&self) -> std::collections::BTreeSet<u128> {
        self.states.iter().map(|s| s.key.digest).collect()
    }

    pub fn edge_set(&self) -> std::collections::BTreeSet<(u128, RuleId, Pid, u128)> {
        self.transitions
            .iter()
            .map(|&(a, r, p, b)| (self.states[a as usize].key.digest, r, p, self.states[b as usize].key.digest))
            .collect()
    }

    /// Strongly connected components (Tarjan, iterative); component id per state.
    pub fn components(&self) -> Vec<u32> {
        let n = self.states.len();
        let mut adj = vec![Vec::new(); n];
        for &(a, _, _, b) in &self.transitions {
            adj[a as usize].push(b as usize);
        }
        const UNSET: usize = usize::MAX;
        let mut index = vec![UNSET; n];
        let mut low = vec![0usize; n];
        let mut on_stack = vec![false; n];
        let mut comp = vec![u32::MAX; n];
        let mut stack = Vec::new();
        let mut next_index = 0;
        let mut next_comp = 0u32;
        for root in 0..n {
            if index[root] != UNSET {
                continue;
            }
            let mut call: Vec<(usize, usize)> = vec![(root, 0)];
            index[root] = next_index;
            low[root] = next_index;
            next_index += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (v, ref mut i)) = call.last_mut() {
                if *i < adj[v].len() {
                    let w = adj[v][*i];
                    *i += 1;
                    if index[w] == UNSET {
                        index[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    call.pop();
                    if let Some(&(u, _)) = call.last() {
                        low[u] = low[u].min(low[v]);
                    }
                    if low[v] == index[v] {
                        while let Some(w) = stack.pop() {
                            on_stack[w] = false;
                            comp[w] = next_comp;
                            if w == v {
                                break;
                            }
                        }
                        next_comp += 1;
                    }
                }
            }
        }
        comp
    }

    /// Is some transition labelled `rule` part of a cycle?
    pub fn has_cycle_through(&self, rule: RuleId) -> bool {
        let comp = self.components();
        self.transitions.iter().any(|&(a, r, _, b)| r == rule && comp[a as usize] == comp[b as usize])
    }
}
