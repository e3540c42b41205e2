use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::model::ModelProgram;
use crate::semantics::{ErrorClass, Options};

use super::{Exploration, ExploreOptions, SearchOutcome, Stats, Strategy, Trace, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CheckVerdict {
    Reachable,
    Unreachable,
    Unknown { bound: usize },
}

impl CheckVerdict {
    pub fn render(self) -> String {
        match self {
            CheckVerdict::Reachable => "REACHABLE".into(),
            CheckVerdict::Unreachable => "UNREACHABLE (full exploration)".into(),
            CheckVerdict::Unknown { bound } => format!("UNKNOWN (bounded at {bound} states)"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ModelSize {
    pub classes: usize,
    pub features: usize,
    pub states: usize,
    pub actions: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TerminalCounts {
    pub ok_idle: usize,
    pub stuck: usize,
    pub error: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ErrorSummary {
    pub class: ErrorClass,
    pub states: usize,
    /// Details of the first error state found.
    pub first: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReportOptions {
    pub strategy: Strategy,
    pub bound: Option<usize>,
    pub engine: Options,
    pub mode: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub options: ReportOptions,
    pub model: ModelSize,
    pub stats: Stats,
    pub bounded: bool,
    /// Keyed by error class name.
    pub verdicts: BTreeMap<&'static str, CheckVerdict>,
    pub terminals: TerminalCounts,
    pub errors: Vec<ErrorSummary>,
    pub traces: Vec<Trace>,
}

impl Report {
    pub fn verdict(&self, class: ErrorClass) -> CheckVerdict {
        self.verdicts[class.as_str()]
    }

    pub fn reachable(&self) -> Vec<ErrorClass> {
        ErrorClass::ALL.into_iter().filter(|c| self.verdict(*c) == CheckVerdict::Reachable).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text summary, one line per error class.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for class in ErrorClass::ALL {
            let _ = writeln!(out, "{}: {}", class.as_str(), self.verdict(class).render());
        }
        let s = &self.stats;
        let _ = writeln!(
            out,
            "states: {}, transitions: {}, max depth: {}, time: {:.2}s",
            s.states, s.transitions, s.max_depth, s.wall_time_secs
        );
        let t = &self.terminals;
        let _ = writeln!(out, "terminals: {} ok_idle, {} stuck, {} error", t.ok_idle, t.stuck, t.error);
        for e in &self.errors {
            let _ = writeln!(out, "{} ({} states): {}", e.class.as_str(), e.states, e.first);
        }
        for trace in &self.traces {
            let what = match &trace.verdict {
                Verdict::Error { error } => error.class.as_str(),
                Verdict::Stuck => "stuck",
                _ => "state",
            };
            let _ = writeln!(out, "trace to {what} ({} steps):", trace.steps.len());
            for step in &trace.steps {
                let _ = writeln!(out, "  {:>4}  {:<24} {}", step.step, step.rule.as_str(), step.desc);
            }
        }
        out
    }
}

fn model_size(program: &ModelProgram) -> ModelSize {
    ModelSize {
        classes: program.classes.len(),
        features: program.features.len(),
        states: program.state_count(),
        actions: program.action_count(),
    }
}

fn verdicts(found: &[ErrorClass], stats: &Stats) -> BTreeMap<&'static str, CheckVerdict> {
    ErrorClass::ALL
        .into_iter()
        .map(|c| {
            let v = if found.contains(&c) {
                CheckVerdict::Reachable
            } else if stats.bounded {
                CheckVerdict::Unknown { bound: stats.states }
            } else {
                CheckVerdict::Unreachable
            };
            (c.as_str(), v)
        })
        .collect()
}

fn report_options(opts: &ExploreOptions, mode: &'static str) -> ReportOptions {
    ReportOptions { strategy: opts.strategy, bound: opts.bound, engine: opts.engine, mode }
}

pub fn summarize(program: &ModelProgram, exploration: &Exploration) -> Report {
    let found = exploration.error_classes();
    let mut terminals = TerminalCounts::default();
    let mut errors: Vec<ErrorSummary> = Vec::new();
    for s in exploration.terminals() {
        match &s.verdict {
            Verdict::OkIdle => terminals.ok_idle += 1,
            Verdict::Stuck => terminals.stuck += 1,
            Verdict::Error { error } => {
                terminals.error += 1;
                match errors.iter_mut().find(|e| e.class == error.class) {
                    Some(e) => e.states += 1,
                    None => errors.push(ErrorSummary { class: error.class, states: 1, first: error.to_string() }),
                }
            }
            Verdict::Nonterminal => {}
        }
    }
    errors.sort_by_key(|e| e.class);
    Report {
        options: report_options(&exploration.options, "full"),
        model: model_size(program),
        stats: exploration.stats.clone(),
        bounded: exploration.stats.bounded,
        verdicts: verdicts(&found, &exploration.stats),
        terminals,
        errors,
        traces: exploration.traces.clone(),
    }
}

/// Report for a counterexample search. Classes not searched for stay unknown.
pub fn summarize_search(
    program: &ModelProgram,
    opts: &ExploreOptions,
    classes: &[ErrorClass],
    outcome: &SearchOutcome,
) -> Report {
    let found: Vec<ErrorClass> = outcome.trace.iter().filter_map(|t| t.verdict.error_class()).collect();
    let mut v = verdicts(&found, &outcome.stats);
    for c in ErrorClass::ALL {
        if !classes.contains(&c) || (!found.is_empty() && !found.contains(&c)) {
            v.insert(c.as_str(), CheckVerdict::Unknown { bound: outcome.stats.states });
        }
    }
    let errors = outcome
        .trace
        .iter()
        .filter_map(|t| match &t.verdict {
            Verdict::Error { error } => Some(ErrorSummary { class: error.class, states: 1, first: error.to_string() }),
            _ => None,
        })
        .collect();
    Report {
        options: report_options(opts, "counterexample"),
        model: model_size(program),
        stats: outcome.stats.clone(),
        bounded: outcome.stats.bounded,
        verdicts: v,
        terminals: TerminalCounts::default(),
        errors,
        traces: outcome.trace.iter().cloned().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_lines() {
        let mut stats = Stats::default();
        let v = verdicts(&[ErrorClass::Deadlock], &stats);
        assert_eq!(v["deadlock"].render(), "REACHABLE");
        assert_eq!(v["void_call"].render(), "UNREACHABLE (full exploration)");
        stats.bounded = true;
        stats.states = 7;
        let v = verdicts(&[], &stats);
        assert_eq!(v["deadlock"].render(), "UNKNOWN (bounded at 7 states)");
    }
}
