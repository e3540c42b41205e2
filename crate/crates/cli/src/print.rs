use std::fmt::Write as _;
use std::path::Path;

use coopcheck::explorer::{CheckVerdict, Report, Verdict};
use coopcheck::model::RootSpec;
use coopcheck::semantics::ErrorClass;

/// Line-oriented summary of a verification run.
pub fn print_report(
    report: &Report,
    inputs: &[String],
    root: &RootSpec,
    requested: &[ErrorClass],
    trace_path: Option<&Path>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "inputs: {}", inputs.join(" "));
    let _ = writeln!(out, "root: {}.{}", root.class, root.procedure);
    let o = &report.options;
    let bound = o.bound.map_or_else(|| "none".to_string(), |b| b.to_string());
    let _ = writeln!(
        out,
        "options: mode {}, strategy {:?}, bound {bound}, token {}, postconditions {}",
        o.mode,
        o.strategy,
        on_off(o.engine.token),
        on_off(o.engine.postconditions)
    );
    let m = &report.model;
    let _ = writeln!(
        out,
        "model: {} classes, {} features, {} states, {} actions",
        m.classes, m.features, m.states, m.actions
    );
    let s = &report.stats;
    let _ = writeln!(out, "explored: {} states, {} transitions, max depth {}", s.states, s.transitions, s.max_depth);
    let _ = writeln!(out, "time: {:.3}s", s.wall_time_secs);
    if report.bounded {
        let _ = writeln!(out, "bounded: exploration stopped at {} states", s.states);
    }
    let t = &report.terminals;
    if o.mode == "full" {
        let _ = writeln!(out, "terminals: {} ok_idle, {} stuck, {} error", t.ok_idle, t.stuck, t.error);
    }
    for class in ErrorClass::ALL {
        let v = report.verdict(class);
        if requested.contains(&class) || v == CheckVerdict::Reachable {
            let _ = writeln!(out, "{}: {}", class.as_str(), v.render());
        }
    }
    for e in &report.errors {
        let _ = writeln!(out, "error: {} ({} states)", e.first, e.states);
    }
    if let Some(trace) = report.traces.iter().find(|t| matches!(t.verdict, Verdict::Error { .. })) {
        let _ = writeln!(out, "counterexample: {} steps", trace.steps.len());
        for step in &trace.steps {
            let _ = writeln!(out, "  {:>4}  {:<24} {}", step.step, step.rule.as_str(), step.desc);
        }
        if let Some(path) = trace_path {
            let _ = writeln!(out, "trace written to {}", path.display());
        }
    }
    out
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}
