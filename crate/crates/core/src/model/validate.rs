use std::fmt;

use super::{ActionKind, Expr, FeatureGraph, ModelProgram, StateKind};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub feature: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.feature, self.message)
    }
}

/// Checks the structural invariants of every feature graph. Returns an
/// empty list iff the program is well formed.
pub fn validate_model(program: &ModelProgram) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if program.root as usize >= program.features.len() {
        out.push(Diagnostic { feature: "<root>".into(), message: "root feature does not exist".into() });
    }
    for (id, f) in program.features.iter().enumerate() {
        let label = program.feature_label(id as u32);
        for message in check_feature(program, f) {
            out.push(Diagnostic { feature: label.clone(), message });
        }
    }
    out
}

fn check_feature(program: &ModelProgram, f: &FeatureGraph) -> Vec<String> {
    let mut errs = Vec::new();
    let n_states = f.states.len() as u32;
    if f.init >= n_states || f.final_state >= n_states {
        errs.push("init or final state missing".into());
        return errs;
    }
    for (ai, a) in f.actions.iter().enumerate() {
        if a.out >= n_states {
            errs.push(format!("action {ai} has dangling out-state {}", a.out));
        }
        match &a.kind {
            ActionKind::Test { precondition_fail: true, retry_state, .. } => match retry_state {
                Some(r) if *r < n_states => {}
                _ => errs.push(format!("action {ai}: precondition_fail test without a valid retry state")),
            },
            ActionKind::Lock { targets } | ActionKind::UnlockExpr { targets } => {
                for t in targets {
                    let ty = match t {
                        Expr::Formal(i) => f.formals.get(*i as usize).map(|(_, t)| *t),
                        Expr::Local(i) => f.locals.get(*i as usize).map(|(_, t)| *t),
                        Expr::Attr(i) => program.class(f.class).slot_types.get(*i as usize).copied(),
                        _ => None,
                    };
                    if !ty.is_some_and(|t| t.is_separate()) {
                        errs.push(format!("action {ai}: lock target is not a separate reference"));
                    }
                }
            }
            _ => {}
        }
    }
    if errs.iter().any(|e| e.contains("dangling")) {
        return errs;
    }
    for (si, s) in f.states.iter().enumerate() {
        if s.out.iter().any(|a| *a as usize >= f.actions.len()) {
            errs.push(format!("state {si} lists a missing action"));
            continue;
        }
        match s.kind {
            StateKind::Final | StateKind::PostconditionFail if !s.out.is_empty() => {
                errs.push(format!("terminal state {si} has outgoing actions"))
            }
            StateKind::Normal if s.out.is_empty() => {
                errs.push(format!("state {si} has no outgoing action"))
            }
            _ => {}
        }
        match s.out.len() {
            0 | 1 => {}
            2 => {
                let a = &f.actions[s.out[0] as usize].kind;
                let b = &f.actions[s.out[1] as usize].kind;
                let complementary = match (a, b) {
                    (ActionKind::Test { cond: ca, .. }, ActionKind::Test { cond: cb, .. }) => {
                        matches!(cb, Expr::Not(inner) if **inner == *ca)
                    }
                    _ => false,
                };
                if !complementary {
                    errs.push(format!("state {si} branches without a complementary test pair"));
                }
            }
            n => errs.push(format!("state {si} has {n} outgoing actions")),
        }
        if let Some(p) = s.post_check {
            if p >= n_states {
                errs.push(format!("state {si} has a dangling postcondition link"));
            }
        }
    }
    if f.state(f.final_state).kind != StateKind::Final {
        errs.push("final state is not marked final".into());
    }

    let mut seen = vec![false; f.states.len()];
    let mut stack = vec![f.init];
    while let Some(s) = stack.pop() {
        if std::mem::replace(&mut seen[s as usize], true) {
            continue;
        }
        let node = f.state(s);
        stack.extend(node.out.iter().map(|a| f.action(*a).out));
        stack.extend(node.post_check.iter().copied().filter(|p| *p < n_states));
        for a in &node.out {
            if let ActionKind::Test { retry_state: Some(r), .. } = f.action(*a).kind {
                stack.push(r);
            }
        }
    }
    if let Some(s) = seen.iter().position(|v| !v) {
        errs.push(format!("state {s} is unreachable from init"));
    }
    errs
}
