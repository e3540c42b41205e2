use std::collections::BTreeMap;

use crate::model::ModelProgram;

use super::engine::planned_lock;
use super::{Configuration, EngineError, ErrorClass, LockState, Pid, RuleId, Status, Transition};

pub type WaitGraph = BTreeMap<Pid, Vec<Pid>>;

/// Some cycle of `graph`, rotated to start at its smallest node.
pub fn find_cycle(graph: &WaitGraph) -> Option<Vec<Pid>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut mark: BTreeMap<Pid, Mark> = BTreeMap::new();
    fn dfs(
        n: Pid,
        graph: &WaitGraph,
        mark: &mut BTreeMap<Pid, Mark>,
        path: &mut Vec<Pid>,
    ) -> Option<Vec<Pid>> {
        mark.insert(n, Mark::Active);
        path.push(n);
        for &m in graph.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
            match mark.get(&m).copied().unwrap_or(Mark::New) {
                Mark::Active => {
                    let start = path.iter().position(|x| *x == m).unwrap();
                    let mut cycle = path[start..].to_vec();
                    let min = cycle.iter().enumerate().min_by_key(|(_, v)| **v).unwrap().0;
                    cycle.rotate_left(min);
                    return Some(cycle);
                }
                Mark::New => {
                    if let Some(c) = dfs(m, graph, mark, path) {
                        return Some(c);
                    }
                }
                Mark::Done => {}
            }
        }
        path.pop();
        mark.insert(n, Mark::Done);
        None
    }
    for &n in graph.keys() {
        if mark.get(&n).copied().unwrap_or(Mark::New) == Mark::New {
            if let Some(c) = dfs(n, graph, &mut mark, &mut Vec::new()) {
                return Some(c);
            }
        }
    }
    None
}

fn add(graph: &mut WaitGraph, from: Pid, to: Pid) {
    let e = graph.entry(from).or_default();
    if !e.contains(&to) {
        e.push(to);
    }
}

/// Lock waits: a processor waiting for a lock points at whoever must act
/// for the lock to become free.
pub fn blocking_graph(config: &Configuration) -> WaitGraph {
    let mut g = WaitGraph::new();
    for p in &config.processors {
        if let Status::AwaitingLocks(blockers) = &p.status {
            for &b in blockers {
                match config.processor(b).lock {
                    LockState::LockedBy(h) => add(&mut g, p.id, h),
                    LockState::CreationLockedBy(_) => add(&mut g, p.id, b),
                    LockState::Unlocked => {}
                }
            }
        }
    }
    g
}

/// Lock waits plus result and lock-restore waits.
pub fn waits_for_graph(config: &Configuration) -> WaitGraph {
    let mut g = blocking_graph(config);
    for p in &config.processors {
        let wanted = match p.status {
            Status::AwaitingResult => |f: &super::Frame, pid| f.reply_to == Some(pid),
            Status::AwaitingLockRestore => |f: &super::Frame, pid| f.restore_to == Some(pid),
            _ => continue,
        };
        for q in &config.processors {
            if q.stack.iter().any(|f| wanted(f, p.id)) || q.queue.iter().any(|r| wanted(&r.frame, p.id)) {
                add(&mut g, p.id, q.id);
            }
        }
    }
    g
}

fn render(cycle: &[Pid]) -> String {
    let mut s: Vec<String> = cycle.iter().map(|p| p.to_string()).collect();
    s.push(cycle[0].to_string());
    format!("processors {}", s.join(" -> "))
}

/// Deadlock, then wait-condition deadlock, then internal inconsistencies.
pub fn detect_errors(config: &Configuration) -> Option<EngineError> {
    if let Some(c) = find_cycle(&blocking_graph(config)) {
        return Some(EngineError {
            class: ErrorClass::Deadlock,
            pid: Some(c[0]),
            feature: None,
            tag: None,
            detail: format!("lock wait cycle over {}", render(&c)),
        });
    }
    if let Some(c) = find_cycle(&waits_for_graph(config)) {
        return Some(EngineError {
            class: ErrorClass::WaitConditionDeadlock,
            pid: Some(c[0]),
            feature: None,
            tag: None,
            detail: format!("wait cycle over {}", render(&c)),
        });
    }
    let structural = structural_violations(config);
    structural.into_iter().next().map(|detail| EngineError {
        class: ErrorClass::InternalInvariant,
        pid: None,
        feature: None,
        tag: None,
        detail,
    })
}

fn structural_violations(config: &Configuration) -> Vec<String> {
    let mut out = Vec::new();
    let holders = config.processors.iter().filter(|p| p.has_token).count();
    if holders > 1 {
        out.push(format!("{holders} processors hold the token"));
    }
    let mut owner = vec![None; config.objects.len()];
    for p in &config.processors {
        for &o in &p.region {
            match owner.get_mut(o as usize) {
                Some(slot @ None) => *slot = Some(p.id),
                Some(Some(q)) => out.push(format!("object {o} is in the regions of {q} and {}", p.id)),
                None => out.push(format!("region of {} lists missing object {o}", p.id)),
            }
        }
    }
    for (o, obj) in config.objects.iter().enumerate() {
        if owner[o] != Some(obj.handler) {
            out.push(format!("object {o} has handler {} but region owner {:?}", obj.handler, owner[o]));
        }
    }
    out
}

/// Per-state engine invariants. Empty iff all hold.
pub fn check_invariants(config: &Configuration) -> Vec<String> {
    let mut out = structural_violations(config);
    let n = config.processors.len() as Pid;
    for p in &config.processors {
        match p.lock {
            LockState::LockedBy(h) | LockState::CreationLockedBy(h) if h >= n => {
                out.push(format!("processor {} is locked by missing processor {h}", p.id))
            }
            _ => {}
        }
        if (p.status == Status::Idle) != p.stack.is_empty() {
            out.push(format!("processor {} is {:?} with {} frames", p.id, p.status, p.stack.len()));
        }
        if p.queue.iter().zip(p.queue.iter().skip(1)).any(|(a, b)| a.seq >= b.seq) {
            out.push(format!("queue of processor {} is out of enqueue order", p.id));
        }
        if let Status::AwaitingLocks(w) = &p.status {
            if w.is_empty() {
                out.push(format!("processor {} waits on an empty lock set", p.id));
            }
        }
    }
    out
}

/// Checks that concern one step: atomic locking and front-of-queue service.
pub fn check_transition(program: &ModelProgram, before: &Configuration, t: &Transition, after: &Configuration) -> Vec<String> {
    let mut out = Vec::new();
    if t.rule == RuleId::Lock {
        if let Some(handlers) = planned_lock(program, before, t.pid) {
            for h in handlers {
                if after.processor(h).lock != LockState::LockedBy(t.pid) {
                    out.push(format!("lock by {} left processor {h} unacquired", t.pid));
                }
            }
        }
    }
    // A blocked processor keeps its locks, apart from locks passed in with a queued request.
    for p in &before.processors {
        if p.id == t.pid || !matches!(p.status, Status::AwaitingLocks(_)) {
            continue;
        }
        let (was, now) = (before.held_by(p.id), after.held_by(p.id));
        let passed_in = |h: &Pid| after.processor(p.id).queue.iter().any(|r| r.frame.passed_locks.contains(h));
        let only_passed_in = was.iter().all(|h| now.contains(h)) && now.iter().all(|h| was.contains(h) || passed_in(h));
        if !only_passed_in {
            out.push(format!(
                "blocked processor {} changed its locks from {was:?} to {now:?} during {} on processor {}",
                p.id, t.rule, t.pid
            ));
        }
    }
    if t.rule == RuleId::QueueRemove {
        let q0 = &before.processor(t.pid).queue;
        let q1 = &after.processor(t.pid).queue;
        let served_front = q0.len() == q1.len() + 1 && q0.iter().skip(1).zip(q1.iter()).all(|(a, b)| a.seq == b.seq);
        let grew = q1.len() >= q0.len();
        if !served_front && !grew {
            out.push(format!("processor {} did not serve its queue front", t.pid));
        }
    }
    out
}
