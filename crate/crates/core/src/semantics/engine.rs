use crate::model::{ActionKind, Expr, FeatureId, FeatureKind, ModelProgram, Place, StateId, StateKind};

use super::eval::{EvalFailure, Evaluator, Flow};
use super::{
    detect, level, Configuration, EngineError, ErrorClass, Frame, LockState, ObjId, ObjectInstance, Options, Pid,
    Processor, Request, RequestKind, RuleId, Status, Transition, Value,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConditionClass {
    Precondition,
    WaitCondition,
}

/// Emitted whenever a require clause is evaluated and classified.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionEvent {
    pub pid: Pid,
    pub feature: String,
    pub tag: Option<String>,
    pub class: ConditionClass,
    pub holds: bool,
}

/// Debug callbacks invoked while transitions are applied.
pub trait EngineHook {
    fn on_rule(&mut self, _transition: &Transition) {}
    fn on_condition(&mut self, _event: &ConditionEvent) {}
}

impl EngineHook for () {}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("{rule} on processor {pid} is not enabled")]
    NotEnabled { rule: RuleId, pid: Pid },
}

#[derive(Clone, Debug)]
enum Effect {
    Dequeue,
    Fail(EngineError),
    PushQuery { target: ObjId, feature: FeatureId, args: Vec<Value> },
    IssueQuery { handler: Pid, target: ObjId, feature: FeatureId, args: Vec<Value> },
    Assign { place: Place, value: Value, out: StateId },
    Goto { out: StateId },
    Satisfied { out: StateId, class: ConditionClass, tag: Option<String> },
    PushCommand { target: ObjId, feature: FeatureId, args: Vec<Value>, out: StateId },
    EnqueueCommand { handler: Pid, target: ObjId, feature: FeatureId, args: Vec<Value>, out: StateId, pass: bool },
    CreateLocal { place: Place, procedure: FeatureId, args: Vec<Value>, out: StateId },
    CreateSeparate { place: Place, procedure: FeatureId, args: Vec<Value>, out: StateId },
    Acquire { handlers: Vec<Pid>, out: StateId },
    Release { handlers: Vec<Pid>, out: StateId },
    ReleaseCreator { out: StateId },
    FailWait { retry: StateId, tag: Option<String> },
}

#[derive(Clone, Debug)]
struct Plan {
    rule: RuleId,
    level: u8,
    effect: Effect,
}

impl Plan {
    fn local(rule: RuleId, effect: Effect) -> Self {
        Self { rule, level: level::LOCAL, effect }
    }

    fn shared(rule: RuleId, effect: Effect) -> Self {
        Self { rule, level: level::INTERLEAVING, effect }
    }
}

fn error(program: &ModelProgram, pid: Pid, frame: &Frame, class: ErrorClass, tag: Option<String>, detail: String) -> EngineError {
    EngineError { class, pid: Some(pid), feature: Some(program.feature_label(frame.feature)), tag, detail }
}

fn eval_failure(program: &ModelProgram, pid: Pid, frame: &Frame, f: EvalFailure, tag: Option<String>) -> Plan {
    let rule = if f.void_query { RuleId::ErrorQueryVoidTarget } else { RuleId::ErrorArithmetic };
    Plan::local(rule, Effect::Fail(error(program, pid, frame, f.class, tag, f.detail)))
}

fn query_plan(config: &Configuration, pid: Pid, target: ObjId, feature: FeatureId, args: Vec<Value>) -> Plan {
    let handler = config.handler(target);
    if handler == pid {
        Plan::local(RuleId::QueryNonSeparate, Effect::PushQuery { target, feature, args })
    } else {
        Plan::shared(RuleId::QuerySeparate, Effect::IssueQuery { handler, target, feature, args })
    }
}

/// Handlers of the non-Void references among `values`, excluding `pid`.
fn handlers_of(config: &Configuration, pid: Pid, values: &[Value]) -> Vec<Pid> {
    let mut hs: Vec<Pid> =
        values.iter().filter_map(|v| v.as_ref()).map(|o| config.handler(o)).filter(|h| *h != pid).collect();
    hs.sort_unstable();
    hs.dedup();
    hs
}

fn simple_values(config: &Configuration, frame: &Frame, targets: &[Expr]) -> Vec<Value> {
    let mut ev = Evaluator::new(config, frame);
    targets
        .iter()
        .filter_map(|t| match ev.eval(t) {
            Ok(Flow::Done(v)) => Some(v),
            _ => None,
        })
        .collect()
}

/// Lock targets still to be taken by `pid` and those among them that are not
/// free. `None` if the active state is not a Lock.
pub(crate) fn lock_request(program: &ModelProgram, config: &Configuration, pid: Pid) -> Option<(Vec<Pid>, Vec<Pid>)> {
    let p = config.processor(pid);
    let frame = p.top()?;
    let g = program.feature(frame.feature);
    let node = g.state(frame.state);
    let [a] = node.out[..] else { return None };
    let ActionKind::Lock { targets } = &g.action(a).kind else { return None };
    let values = simple_values(config, frame, targets);
    let wanted: Vec<Pid> = handlers_of(config, pid, &values)
        .into_iter()
        .filter(|h| config.processor(*h).lock != LockState::LockedBy(pid))
        .collect();
    let blocked = wanted.iter().copied().filter(|h| config.processor(*h).lock != LockState::Unlocked).collect();
    Some((wanted, blocked))
}

fn plan(program: &ModelProgram, config: &Configuration, pid: Pid) -> Option<Plan> {
    let p = config.processor(pid);
    match p.status {
        Status::Idle => return (!p.queue.is_empty()).then(|| Plan::shared(RuleId::QueueRemove, Effect::Dequeue)),
        Status::AwaitingResult | Status::AwaitingLockRestore => return None,
        Status::Running | Status::AwaitingLocks(_) => {}
    }
    let frame = p.top()?;
    let g = program.feature(frame.feature);
    let node = g.state(frame.state);
    if node.out.len() == 2 {
        return plan_test(program, config, pid, frame, node.out[0], node.out[1]);
    }
    let &[aid] = &node.out[..] else { return None };
    let action = g.action(aid);
    let out = action.out;
    let mut ev = Evaluator::new(config, frame);
    macro_rules! eval {
        ($e:expr) => {
            match ev.eval($e) {
                Ok(Flow::Done(v)) => v,
                Ok(Flow::Need { target, feature, args }) => return Some(query_plan(config, pid, target, feature, args)),
                Err(f) => return Some(eval_failure(program, pid, frame, f, None)),
            }
        };
    }
    macro_rules! eval_all {
        ($es:expr) => {
            match ev.eval_all($es) {
                Ok(Ok(vs)) => vs,
                Ok(Err(Flow::Need { target, feature, args })) => {
                    return Some(query_plan(config, pid, target, feature, args))
                }
                Ok(Err(Flow::Done(_))) => unreachable!(),
                Err(f) => return Some(eval_failure(program, pid, frame, f, None)),
            }
        };
    }
    Some(match &action.kind {
        ActionKind::Noop => Plan::local(RuleId::Noop, Effect::Goto { out }),
        ActionKind::Assign { place, value } => {
            let value = eval!(value);
            Plan::local(RuleId::Assign, Effect::Assign { place: *place, value, out })
        }
        ActionKind::CommandCall { target, feature, args } => {
            let t = eval!(target);
            let args = eval_all!(args);
            let Some(target) = t.as_ref() else {
                let err = error(program, pid, frame, ErrorClass::VoidCall, None, format!(
                    "command {} on a Void target",
                    program.feature_label(*feature)
                ));
                return Some(Plan::local(RuleId::ErrorCommandVoidTarget, Effect::Fail(err)));
            };
            let handler = config.handler(target);
            if handler == pid {
                Plan::local(RuleId::CommandNonSeparate, Effect::PushCommand { target, feature: *feature, args, out })
            } else {
                let pass = should_pass_locks(program, config, pid, *feature, &args);
                Plan::shared(
                    RuleId::CommandSeparate,
                    Effect::EnqueueCommand { handler, target, feature: *feature, args, out, pass },
                )
            }
        }
        ActionKind::Create { place, procedure, args, separate, .. } => {
            let args = eval_all!(args);
            if *separate {
                Plan::shared(RuleId::NewSeparate, Effect::CreateSeparate { place: *place, procedure: *procedure, args, out })
            } else {
                Plan::local(RuleId::NewNonSeparate, Effect::CreateLocal { place: *place, procedure: *procedure, args, out })
            }
        }
        ActionKind::Lock { .. } => {
            let (wanted, blocked) = lock_request(program, config, pid)?;
            if !blocked.is_empty() {
                return None;
            }
            if wanted.is_empty() {
                Plan::local(RuleId::Lock, Effect::Acquire { handlers: wanted, out })
            } else {
                Plan::shared(RuleId::Lock, Effect::Acquire { handlers: wanted, out })
            }
        }
        ActionKind::UnlockExpr { targets } => {
            let values = simple_values(config, frame, targets);
            let handlers: Vec<Pid> =
                handlers_of(config, pid, &values).into_iter().filter(|h| frame.acquired.contains(h)).collect();
            if handlers.is_empty() {
                Plan::local(RuleId::UnlockExpr, Effect::Release { handlers, out })
            } else {
                Plan::shared(RuleId::UnlockExpr, Effect::Release { handlers, out })
            }
        }
        ActionKind::UnlockCreator => {
            if frame.creation && matches!(p.lock, LockState::CreationLockedBy(_)) {
                Plan::shared(RuleId::UnlockCreator, Effect::ReleaseCreator { out })
            } else {
                Plan::local(RuleId::UnlockCreator, Effect::Goto { out })
            }
        }
        ActionKind::Test { cond, .. } => {
            let v = eval!(cond);
            if v != Value::Bool(true) {
                return None;
            }
            Plan::local(RuleId::Test, Effect::Goto { out })
        }
    })
}

fn plan_test(
    program: &ModelProgram,
    config: &Configuration,
    pid: Pid,
    frame: &Frame,
    pos: u32,
    neg: u32,
) -> Option<Plan> {
    let g = program.feature(frame.feature);
    let (pos, neg) = (g.action(pos), g.action(neg));
    let ActionKind::Test { cond, .. } = &pos.kind else { return None };
    let ActionKind::Test { precondition_fail, postcondition, retry_state, tag, .. } = &neg.kind else {
        return None;
    };
    let mut ev = Evaluator::new(config, frame);
    let holds = match ev.eval(cond) {
        Ok(Flow::Done(v)) => v == Value::Bool(true),
        Ok(Flow::Need { target, feature, args }) => return Some(query_plan(config, pid, target, feature, args)),
        Err(f) => return Some(eval_failure(program, pid, frame, f, tag.clone())),
    };
    if holds && *precondition_fail {
        let class = classify_condition(config, pid, cond);
        return Some(Plan::local(RuleId::Test, Effect::Satisfied { out: pos.out, class, tag: tag.clone() }));
    }
    if holds {
        return Some(Plan::local(RuleId::Test, Effect::Goto { out: pos.out }));
    }
    if *precondition_fail {
        let retry = retry_state.unwrap_or(g.init);
        return Some(match classify_condition(config, pid, cond) {
            ConditionClass::Precondition => {
                let err = error(program, pid, frame, ErrorClass::PreconditionFail, tag.clone(), "require clause violated".into());
                Plan::local(RuleId::ErrorPrecondition, Effect::Fail(err))
            }
            ConditionClass::WaitCondition => {
                Plan::shared(RuleId::FailWaitCondition, Effect::FailWait { retry, tag: tag.clone() })
            }
        });
    }
    if *postcondition && g.state(neg.out).kind == StateKind::PostconditionFail {
        let err = error(program, pid, frame, ErrorClass::PostconditionFail, tag.clone(), "ensure clause violated".into());
        return Some(Plan::local(RuleId::ErrorPostcondition, Effect::Fail(err)));
    }
    Some(Plan::local(RuleId::Test, Effect::Goto { out: neg.out }))
}

/// A failing require clause is a precondition iff every processor it
/// queries, other than `pid` itself, was controlled when the frame became
/// active. Query targets that are themselves computed by queries count as
/// uncontrolled.
pub fn classify_condition(config: &Configuration, pid: Pid, cond: &Expr) -> ConditionClass {
    let Some(frame) = config.processor(pid).top() else { return ConditionClass::Precondition };
    fn visit(config: &Configuration, pid: Pid, frame: &Frame, e: &Expr) -> bool {
        match e {
            Expr::Query { target, args, .. } => {
                let simple = matches!(
                    **target,
                    Expr::Current | Expr::Result | Expr::Local(_) | Expr::Formal(_) | Expr::Attr(_)
                );
                let controlled = if simple {
                    match Evaluator::new(config, frame).eval(target) {
                        Ok(Flow::Done(Value::Ref(Some(o)))) => {
                            let h = config.handler(o);
                            h == pid || frame.controls.contains(&h)
                        }
                        Ok(Flow::Done(_)) => true,
                        _ => false,
                    }
                } else {
                    false
                };
                controlled && visit(config, pid, frame, target) && args.iter().all(|a| visit(config, pid, frame, a))
            }
            Expr::Binary { lhs, rhs, .. } => visit(config, pid, frame, lhs) && visit(config, pid, frame, rhs),
            Expr::Not(inner) => visit(config, pid, frame, inner),
            _ => true,
        }
    }
    if visit(config, pid, frame, cond) {
        ConditionClass::Precondition
    } else {
        ConditionClass::WaitCondition
    }
}

/// Lock passing for a separate command: some reference actual bound to a
/// reference formal is handled by a processor that `pid` has locked.
pub fn should_pass_locks(program: &ModelProgram, config: &Configuration, pid: Pid, feature: FeatureId, args: &[Value]) -> bool {
    let formals = &program.feature(feature).formals;
    formals.iter().zip(args).any(|((_, ty), v)| {
        ty.is_ref()
            && v.as_ref().is_some_and(|o| config.processor(config.handler(o)).lock == LockState::LockedBy(pid))
    })
}

fn new_frame(program: &ModelProgram, feature: FeatureId, current: ObjId, args: Vec<Value>) -> Frame {
    let g = program.feature(feature);
    let result = match g.kind {
        FeatureKind::Query(t) => Value::default_for(t),
        FeatureKind::Command => Value::Int(0),
    };
    Frame {
        feature,
        current,
        formals: args,
        locals: g.locals.iter().map(|(_, t)| Value::default_for(*t)).collect(),
        result,
        state: g.init,
        return_state: None,
        memo: Vec::new(),
        controls: Vec::new(),
        acquired: Vec::new(),
        restore_to: None,
        passed_locks: Vec::new(),
        reply_to: None,
        creation: false,
    }
}

fn new_object(program: &ModelProgram, config: &mut Configuration, class: u32, handler: Pid) -> ObjId {
    let id = config.objects.len() as ObjId;
    let slots = program.class(class).slot_types.iter().map(|t| Value::default_for(*t)).collect();
    config.objects.push(ObjectInstance { id, class, slots, handler });
    config.processors[handler as usize].region.push(id);
    id
}

fn write(config: &mut Configuration, pid: Pid, place: Place, value: Value) {
    let p = &mut config.processors[pid as usize];
    let frame = p.stack.last_mut().expect("running processor has a frame");
    match place {
        Place::Attr(i) => {
            let cur = frame.current;
            config.objects[cur as usize].slots[i as usize] = value;
        }
        Place::Local(i) => frame.locals[i as usize] = value,
        Place::Result => frame.result = value,
    }
}

fn top_mut(config: &mut Configuration, pid: Pid) -> &mut Frame {
    config.processors[pid as usize].stack.last_mut().expect("running processor has a frame")
}

fn advance(config: &mut Configuration, pid: Pid, out: StateId) {
    let f = top_mut(config, pid);
    f.state = out;
    f.memo.clear();
}

/// Moves every lock held by `from` to `to`.
fn pass_locks(config: &mut Configuration, from: Pid, to: Pid) -> Vec<Pid> {
    let held = config.held_by(from);
    for h in &held {
        config.processors[*h as usize].lock = LockState::LockedBy(to);
    }
    held
}

fn enqueue(config: &mut Configuration, handler: Pid, frame: Frame, kind: RequestKind, reply_to: Option<Pid>) {
    let seq = config.next_seq;
    config.next_seq += 1;
    let feature = frame.feature;
    config.processors[handler as usize].queue.push_back(Request { feature, frame, kind, reply_to, seq });
}

fn execute(program: &ModelProgram, config: &mut Configuration, pid: Pid, effect: Effect, hook: &mut dyn EngineHook) {
    match effect {
        Effect::Dequeue => {
            let controls = config.held_by(pid);
            let p = &mut config.processors[pid as usize];
            let mut frame = p.queue.pop_front().expect("dequeue from an empty queue").frame;
            frame.controls = controls;
            p.stack.push(frame);
            p.status = Status::Running;
        }
        Effect::Fail(err) => {
            if err.class == ErrorClass::PreconditionFail {
                let frame = config.processor(pid).top().expect("frame");
                hook.on_condition(&ConditionEvent {
                    pid,
                    feature: program.feature_label(frame.feature),
                    tag: err.tag.clone(),
                    class: ConditionClass::Precondition,
                    holds: false,
                });
            }
            config.error = Some(err);
        }
        Effect::PushQuery { target, feature, args } => {
            let mut frame = new_frame(program, feature, target, args);
            frame.controls = config.held_by(pid);
            config.processors[pid as usize].stack.push(frame);
        }
        Effect::IssueQuery { handler, target, feature, args } => {
            let mut frame = new_frame(program, feature, target, args);
            frame.reply_to = Some(pid);
            let passed = pass_locks(config, pid, handler);
            if !passed.is_empty() {
                frame.restore_to = Some(pid);
                frame.passed_locks = passed;
            }
            enqueue(config, handler, frame, RequestKind::Query, Some(pid));
            config.processors[pid as usize].status = Status::AwaitingResult;
        }
        Effect::Assign { place, value, out } => {
            write(config, pid, place, value);
            advance(config, pid, out);
        }
        Effect::Goto { out } => advance(config, pid, out),
        Effect::Satisfied { out, class, tag } => {
            let frame = config.processor(pid).top().expect("frame");
            hook.on_condition(&ConditionEvent {
                pid,
                feature: program.feature_label(frame.feature),
                tag,
                class,
                holds: true,
            });
            advance(config, pid, out);
        }
        Effect::PushCommand { target, feature, args, out } => {
            let mut frame = new_frame(program, feature, target, args);
            frame.controls = config.held_by(pid);
            frame.return_state = Some(out);
            top_mut(config, pid).memo.clear();
            config.processors[pid as usize].stack.push(frame);
        }
        Effect::EnqueueCommand { handler, target, feature, args, out, pass } => {
            let mut frame = new_frame(program, feature, target, args);
            if pass {
                let passed = pass_locks(config, pid, handler);
                frame.restore_to = Some(pid);
                frame.passed_locks = passed;
                config.processors[pid as usize].status = Status::AwaitingLockRestore;
            }
            let reply = frame.restore_to;
            enqueue(config, handler, frame, RequestKind::Command, reply);
            advance(config, pid, out);
        }
        Effect::CreateLocal { place, procedure, args, out } => {
            let class = program.feature(procedure).class;
            let oid = new_object(program, config, class, pid);
            write(config, pid, place, Value::Ref(Some(oid)));
            let mut frame = new_frame(program, procedure, oid, args);
            frame.controls = config.held_by(pid);
            frame.return_state = Some(out);
            top_mut(config, pid).memo.clear();
            config.processors[pid as usize].stack.push(frame);
        }
        Effect::CreateSeparate { place, procedure, args, out } => {
            let class = program.feature(procedure).class;
            let q = config.processors.len() as Pid;
            let mut proc_ = Processor::new(q);
            proc_.lock = LockState::CreationLockedBy(pid);
            config.processors.push(proc_);
            let oid = new_object(program, config, class, q);
            write(config, pid, place, Value::Ref(Some(oid)));
            let mut frame = new_frame(program, procedure, oid, args);
            frame.creation = true;
            enqueue(config, q, frame, RequestKind::Command, None);
            advance(config, pid, out);
        }
        Effect::Acquire { handlers, out } => {
            for h in &handlers {
                config.processors[*h as usize].lock = LockState::LockedBy(pid);
            }
            let f = top_mut(config, pid);
            f.acquired.extend(handlers);
            f.acquired.sort_unstable();
            f.acquired.dedup();
            advance(config, pid, out);
        }
        Effect::Release { handlers, out } => {
            for h in &handlers {
                config.processors[*h as usize].lock = LockState::Unlocked;
            }
            top_mut(config, pid).acquired.retain(|h| !handlers.contains(h));
            advance(config, pid, out);
        }
        Effect::ReleaseCreator { out } => {
            config.processors[pid as usize].lock = LockState::Unlocked;
            advance(config, pid, out);
        }
        Effect::FailWait { retry, tag } => {
            let frame = config.processor(pid).top().expect("frame");
            hook.on_condition(&ConditionEvent {
                pid,
                feature: program.feature_label(frame.feature),
                tag,
                class: ConditionClass::WaitCondition,
                holds: false,
            });
            release_and_retry(config, pid, retry);
        }
    }
}

fn release_and_retry(config: &mut Configuration, pid: Pid, retry: StateId) {
    let acquired = std::mem::take(&mut top_mut(config, pid).acquired);
    for h in acquired {
        config.processors[h as usize].lock = LockState::Unlocked;
    }
    advance(config, pid, retry);
}

/// Releases the locks taken by the active frame's entry Lock and jumps back
/// to the retry state of the failing require clause.
pub fn fail_wait_condition(program: &ModelProgram, config: &Configuration, pid: Pid) -> Configuration {
    let mut next = config.clone();
    let frame = config.processor(pid).top().expect("fail_wait_condition on an idle processor");
    let g = program.feature(frame.feature);
    let retry = g
        .state(frame.state)
        .out
        .iter()
        .find_map(|a| match &g.action(*a).kind {
            ActionKind::Test { precondition_fail: true, retry_state, .. } => *retry_state,
            _ => None,
        })
        .unwrap_or(g.init);
    release_and_retry(&mut next, pid, retry);
    next
}

/// Deterministic follow-up effects of a step, applied in rounds until none
/// remain. Effects of one round touch disjoint parts of the configuration,
/// so their order within the round does not matter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Micro {
    /// Jump from a postcondition link into its check chain.
    EnterPostcondition { pid: Pid },
    /// Pop a completed synchronous frame and resume its caller.
    Return { pid: Pid },
    /// Pop the last frame; the processor becomes idle.
    Finish { pid: Pid },
    /// Hand a separate query's result to the waiting client.
    Deliver { to: Pid, value: Value },
    /// Give passed locks back to their owner.
    Restore { to: Pid, locks: Vec<Pid>, wake: bool },
}

pub fn complete_round(program: &ModelProgram, config: &Configuration) -> Vec<Micro> {
    let mut out = Vec::new();
    for p in &config.processors {
        if p.status != Status::Running {
            continue;
        }
        let Some(frame) = p.top() else { continue };
        let g = program.feature(frame.feature);
        let node = g.state(frame.state);
        if let (Some(_), true) = (node.post_check, config.options.postconditions) {
            out.push(Micro::EnterPostcondition { pid: p.id });
            continue;
        }
        if node.kind != StateKind::Final {
            continue;
        }
        if p.stack.len() > 1 {
            out.push(Micro::Return { pid: p.id });
            continue;
        }
        out.push(Micro::Finish { pid: p.id });
        if let Some(to) = frame.reply_to {
            out.push(Micro::Deliver { to, value: frame.result });
        }
        if let Some(to) = frame.restore_to {
            out.push(Micro::Restore { to, locks: frame.passed_locks.clone(), wake: frame.reply_to.is_none() });
        }
    }
    out
}

pub fn apply_micro(program: &ModelProgram, config: &mut Configuration, m: &Micro) {
    match m {
        Micro::EnterPostcondition { pid } => {
            let f = top_mut(config, *pid);
            let g = program.feature(f.feature);
            if let Some(chain) = g.state(f.state).post_check {
                f.state = chain;
                f.memo.clear();
            }
        }
        Micro::Return { pid } => {
            let p = &mut config.processors[*pid as usize];
            let done = p.stack.pop().expect("frame");
            let caller = p.stack.last_mut().expect("caller frame");
            match done.return_state {
                Some(s) => {
                    caller.state = s;
                    caller.memo.clear();
                }
                None => caller.memo.push(done.result),
            }
        }
        Micro::Finish { pid } => {
            let p = &mut config.processors[*pid as usize];
            p.stack.pop();
            p.status = Status::Idle;
        }
        Micro::Deliver { to, value } => {
            let p = &mut config.processors[*to as usize];
            if let Some(f) = p.stack.last_mut() {
                f.memo.push(*value);
            }
            p.status = Status::Running;
        }
        Micro::Restore { to, locks, wake } => {
            for h in locks {
                config.processors[*h as usize].lock = LockState::LockedBy(*to);
            }
            if *wake {
                config.processors[*to as usize].status = Status::Running;
            }
        }
    }
}

/// Folds all pending deterministic effects, refreshes lock-wait statuses and
/// runs error detection.
pub fn settle(program: &ModelProgram, config: &mut Configuration) {
    loop {
        let round = complete_round(program, config);
        if round.is_empty() {
            break;
        }
        for m in &round {
            apply_micro(program, config, m);
        }
    }
    for pid in 0..config.processors.len() as Pid {
        let status = &config.processors[pid as usize].status;
        if !matches!(status, Status::Running | Status::AwaitingLocks(_)) {
            continue;
        }
        let next = match lock_request(program, config, pid) {
            Some((_, blocked)) if !blocked.is_empty() => Status::AwaitingLocks(blocked),
            _ => Status::Running,
        };
        config.processors[pid as usize].status = next;
    }
    if config.error.is_none() {
        config.error = detect::detect_errors(config);
    }
}

pub fn initial_configuration(program: &ModelProgram, options: Options) -> Configuration {
    let root = program.feature(program.root);
    let mut config = Configuration {
        processors: vec![Processor::new(0)],
        objects: Vec::new(),
        first_processor: 0,
        action_executed_indicator: false,
        reset_token_flag: false,
        options,
        error: None,
        next_seq: 0,
    };
    let oid = new_object(program, &mut config, root.class, 0);
    let p = &mut config.processors[0];
    p.stack.push(new_frame(program, program.root, oid, Vec::new()));
    p.status = Status::Running;
    p.has_token = options.token;
    settle(program, &mut config);
    config
}

fn all_plans(program: &ModelProgram, config: &Configuration) -> Vec<Option<Plan>> {
    (0..config.processors.len() as Pid).map(|pid| plan(program, config, pid)).collect()
}

fn select(config: &Configuration, plans: &[Option<Plan>]) -> Vec<Transition> {
    if config.error.is_some() {
        return Vec::new();
    }
    let interleaving = || -> Vec<Transition> {
        plans
            .iter()
            .enumerate()
            .filter_map(|(pid, p)| {
                let p = p.as_ref()?;
                (!config.options.token || p.level == level::INTERLEAVING).then_some(Transition {
                    rule: p.rule,
                    pid: pid as Pid,
                    level: level::INTERLEAVING,
                })
            })
            .collect()
    };
    if !config.options.token {
        return interleaving();
    }
    let holder = config.token_holder();
    if let Some(h) = holder {
        if let Some(p) = plans[h as usize].as_ref().filter(|p| p.level == level::LOCAL) {
            return vec![Transition { rule: p.rule, pid: h, level: level::LOCAL }];
        }
        if (h as usize) + 1 < config.processors.len() {
            return vec![Transition { rule: RuleId::PassToken, pid: h, level: level::PASS_TOKEN }];
        }
        if config.action_executed_indicator {
            return vec![Transition { rule: RuleId::PassTokenFirst, pid: h, level: level::PASS_TOKEN_FIRST }];
        }
    }
    // Local steps are saturated again between any two interleaving steps.
    if config.reset_token_flag {
        return vec![Transition { rule: RuleId::ResetToken, pid: config.first_processor, level: level::TOKEN_RESET }];
    }
    let shared = interleaving();
    if !shared.is_empty() {
        return shared;
    }
    match holder {
        Some(h) => vec![Transition { rule: RuleId::CleanupToken, pid: h, level: level::TOKEN_RESET }],
        None => Vec::new(),
    }
}

/// Transitions at the highest nonempty priority level.
pub fn enabled(program: &ModelProgram, config: &Configuration) -> Vec<Transition> {
    select(config, &all_plans(program, config))
}

fn fire(
    program: &ModelProgram,
    config: &Configuration,
    t: Transition,
    plan: Option<Plan>,
    hook: &mut dyn EngineHook,
) -> Configuration {
    hook.on_rule(&t);
    let mut next = config.clone();
    match t.rule {
        RuleId::PassToken => {
            next.processors[t.pid as usize].has_token = false;
            next.processors[t.pid as usize + 1].has_token = true;
            return next;
        }
        RuleId::PassTokenFirst => {
            next.processors[t.pid as usize].has_token = false;
            next.processors[next.first_processor as usize].has_token = true;
            next.action_executed_indicator = false;
            next.reset_token_flag = false;
            return next;
        }
        RuleId::ResetToken => {
            for p in &mut next.processors {
                p.has_token = false;
            }
            next.processors[next.first_processor as usize].has_token = true;
            next.reset_token_flag = false;
            return next;
        }
        RuleId::CleanupToken => {
            next.processors[t.pid as usize].has_token = false;
            return next;
        }
        _ => {}
    }
    let plan = plan.expect("action transition has a plan");
    execute(program, &mut next, t.pid, plan.effect, hook);
    if next.options.token {
        if plan.level == level::LOCAL {
            next.action_executed_indicator = true;
        } else {
            next.reset_token_flag = true;
        }
    }
    settle(program, &mut next);
    next
}

/// All enabled transitions with their successor configurations.
pub fn successors_with_hook(
    program: &ModelProgram,
    config: &Configuration,
    hook: &mut dyn EngineHook,
) -> Vec<(Transition, Configuration)> {
    let plans = all_plans(program, config);
    select(config, &plans)
        .into_iter()
        .map(|t| {
            let plan = plans[t.pid as usize].clone();
            let next = fire(program, config, t, plan, hook);
            (t, next)
        })
        .collect()
}

pub fn successors(program: &ModelProgram, config: &Configuration) -> Vec<(Transition, Configuration)> {
    successors_with_hook(program, config, &mut ())
}

pub fn apply_with_hook(
    program: &ModelProgram,
    config: &Configuration,
    rule: RuleId,
    pid: Pid,
    hook: &mut dyn EngineHook,
) -> Result<Configuration, ApplyError> {
    let plans = all_plans(program, config);
    let t = select(config, &plans)
        .into_iter()
        .find(|t| t.rule == rule && t.pid == pid)
        .ok_or(ApplyError::NotEnabled { rule, pid })?;
    let plan = plans[pid as usize].clone();
    Ok(fire(program, config, t, plan, hook))
}

pub fn apply(program: &ModelProgram, config: &Configuration, rule: RuleId, pid: Pid) -> Result<Configuration, ApplyError> {
    apply_with_hook(program, config, rule, pid, &mut ())
}

/// Handlers a Lock transition by `pid` would acquire, if one is planned.
pub fn planned_lock(program: &ModelProgram, config: &Configuration, pid: Pid) -> Option<Vec<Pid>> {
    match plan(program, config, pid)? {
        Plan { effect: Effect::Acquire { handlers, .. }, .. } => Some(handlers),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::lower_sources;
    use proptest::prelude::*;

    const FORK: &str = "class FORK create make feature make do end end";

    fn program(root: &str, srcs: &[&str]) -> ModelProgram {
        let files: Vec<(String, String)> =
            srcs.iter().enumerate().map(|(i, s)| (format!("f{i}.e"), s.to_string())).collect();
        lower_sources(&files, &root.parse().unwrap()).unwrap()
    }

    fn run_to_end(program: &ModelProgram, mut c: Configuration) -> Configuration {
        for _ in 0..10_000 {
            let next = successors(program, &c);
            let Some((_, n)) = next.into_iter().next() else { return c };
            c = n;
        }
        panic!("did not terminate");
    }

    #[test]
    fn initial_state_of_single_processor() {
        let p = program("APP.make", &["class APP create make feature x: INTEGER; b: BOOLEAN; f: FORK make do x := 1 end end", FORK]);
        let c = initial_configuration(&p, Options::default());
        assert_eq!(c.processors.len(), 1);
        assert_eq!(c.objects.len(), 1);
        assert_eq!(c.objects[0].slots, vec![Value::Int(0), Value::Bool(false), Value::Ref(None)]);
        assert!(c.processors[0].has_token);
        assert_eq!(enabled(&p, &c).len(), 1);
        let off = initial_configuration(&p, Options { postconditions: false, token: false });
        assert!(!off.options.postconditions);
        assert!(!off.processors[0].has_token);
    }

    #[test]
    fn assign_from_formal() {
        let p = program(
            "APP.make",
            &[
                "class APP create make feature c: COUNTER make do create c.set (1) end end",
                "class COUNTER create set feature id: INTEGER set (philosopher: INTEGER) do id := philosopher end end",
            ],
        );
        let end = run_to_end(&p, initial_configuration(&p, Options::default()));
        assert_eq!(end.error, None);
        assert_eq!(end.objects[1].slots, vec![Value::Int(1)]);
        assert!(end.all_idle());
    }

    #[test]
    fn command_on_void_target() {
        let p = program(
            "APP.make",
            &["class APP create make feature c: FORK make do launch (c) end launch (f: separate FORK) do f.make end end", FORK],
        );
        let end = run_to_end(&p, initial_configuration(&p, Options::default()));
        assert_eq!(end.error.unwrap().class, ErrorClass::VoidCall);
    }

    #[test]
    fn division_by_zero_is_an_error_state() {
        let p = program("APP.make", &["class APP create make feature x: INTEGER make do x := 1 // x end end"]);
        let c = initial_configuration(&p, Options::default());
        let next = successors(&p, &c);
        assert_eq!(next.len(), 1);
        assert_eq!(next[0].0.rule, RuleId::ErrorArithmetic);
        let err = next[0].1.error.clone().unwrap();
        assert_eq!(err.class, ErrorClass::DivideByZero);
        assert!(enabled(&p, &next[0].1).is_empty());
    }

    const EATER: &str = "class EATER create make feature make do end
        eat (l, r: separate FORK) do end end";

    /// 0: eater, 1: first fork, 2: second fork, 3: another client.
    fn lock_config(p: &ModelProgram, second: LockState) -> Configuration {
        let mut c = Configuration {
            processors: (0..4).map(Processor::new).collect(),
            objects: Vec::new(),
            first_processor: 0,
            action_executed_indicator: false,
            reset_token_flag: false,
            options: Options { postconditions: true, token: false },
            error: None,
            next_seq: 0,
        };
        let eater = new_object(p, &mut c, p.class_id("EATER").unwrap(), 0);
        let f1 = new_object(p, &mut c, p.class_id("FORK").unwrap(), 1);
        let f2 = new_object(p, &mut c, p.class_id("FORK").unwrap(), 2);
        let eat = p.feature_id("EATER", "eat").unwrap();
        c.processors[0].stack.push(new_frame(p, eat, eater, vec![Value::Ref(Some(f1)), Value::Ref(Some(f2))]));
        c.processors[0].status = Status::Running;
        c.processors[2].lock = second;
        settle(p, &mut c);
        c
    }

    #[test]
    fn lock_is_all_or_nothing() {
        let p = program("EATER.make", &[EATER, FORK]);
        let blocked = lock_config(&p, LockState::LockedBy(3));
        assert!(enabled(&p, &blocked).is_empty());
        assert_eq!(blocked.processors[0].status, Status::AwaitingLocks(vec![2]));
        assert_eq!(blocked.processors[1].lock, LockState::Unlocked);

        let free = lock_config(&p, LockState::Unlocked);
        let t = enabled(&p, &free);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].rule, RuleId::Lock);
        let after = apply(&p, &free, RuleId::Lock, 0).unwrap();
        assert_eq!(after.processors[1].lock, LockState::LockedBy(0));
        assert_eq!(after.processors[2].lock, LockState::LockedBy(0));
        assert!(check_transition_ok(&p, &free, t[0], &after));
    }

    fn check_transition_ok(p: &ModelProgram, a: &Configuration, t: Transition, b: &Configuration) -> bool {
        super::super::check_transition(p, a, &t, b).is_empty()
    }

    #[test]
    fn two_queued_requests_give_two_dequeues() {
        let p = program("EATER.make", &[EATER, FORK]);
        let mut c = lock_config(&p, LockState::Unlocked);
        c.processors[0].stack.clear();
        c.processors[0].status = Status::Idle;
        let make = p.feature_id("FORK", "make").unwrap();
        for (h, o) in [(1u32, 1u32), (2, 2)] {
            enqueue(&mut c, h, new_frame(&p, make, o, vec![]), RequestKind::Command, None);
        }
        let t = enabled(&p, &c);
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|t| t.rule == RuleId::QueueRemove));
    }

    #[test]
    fn lock_passing_decision() {
        let p = program(
            "APP.make",
            &[
                "class APP create make feature make do end
                 put (x: INTEGER) do end
                 hand (f: separate FORK) do end end",
                FORK,
            ],
        );
        let mut c = Configuration {
            processors: (0..3).map(Processor::new).collect(),
            objects: Vec::new(),
            first_processor: 0,
            action_executed_indicator: false,
            reset_token_flag: false,
            options: Options::default(),
            error: None,
            next_seq: 0,
        };
        new_object(&p, &mut c, 0, 0);
        let fork = new_object(&p, &mut c, p.class_id("FORK").unwrap(), 1);
        c.processors[1].lock = LockState::LockedBy(0);
        let put = p.feature_id("APP", "put").unwrap();
        let hand = p.feature_id("APP", "hand").unwrap();
        assert!(!should_pass_locks(&p, &c, 0, put, &[Value::Int(3)]));
        assert!(should_pass_locks(&p, &c, 0, hand, &[Value::Ref(Some(fork))]));
        assert!(!should_pass_locks(&p, &c, 0, hand, &[Value::Ref(None)]));
        assert!(!should_pass_locks(&p, &c, 2, hand, &[Value::Ref(Some(fork))]));
    }

    const POT: &str = "class POT create make feature servings: INTEGER
        make do servings := 1 end
        is_empty: BOOLEAN do Result := servings = 0 end
        take do servings := servings - 1 end
        fill do servings := 1 end end";
    const EAT: &str = "class EAT create make feature pot: separate POT; n: INTEGER
        make (p: separate POT) do pot := p; n := 2 end
        live do from until n = 0 loop step; n := n - 1 end end
        step do get (pot) end
        get (p: separate POT) require not p.is_empty do p.take end end";
    const REFILL: &str = "class REFILL create make feature pot: separate POT; n: INTEGER
        make (p: separate POT) do pot := p; n := 2 end
        live do from until n = 0 loop refill (pot); n := n - 1 end end
        refill (p: separate POT) require p.is_empty do p.fill end end";
    const APP: &str = "class APP create make feature pot: separate POT; e: separate EAT; r: separate REFILL
        make do create pot.make; create e.make (pot); create r.make (pot); go (e, r) end
        go (a: separate EAT; b: separate REFILL) do a.live; b.live end end";

    fn walk(program: &ModelProgram, seed: u64, steps: usize) -> Vec<Configuration> {
        let mut rng = seed;
        let mut c = initial_configuration(program, Options { postconditions: true, token: false });
        let mut out = vec![c.clone()];
        for _ in 0..steps {
            let next = successors(program, &c);
            if next.is_empty() {
                break;
            }
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            c = next[(rng >> 33) as usize % next.len()].1.clone();
            out.push(c.clone());
        }
        out
    }

    #[test]
    fn wait_conditions_terminate_without_errors() {
        let p = program("APP.make", &[APP, POT, EAT, REFILL]);
        for seed in 0..20 {
            let trail = walk(&p, seed, 5_000);
            let last = trail.last().unwrap();
            assert_eq!(last.error, None, "seed {seed}");
            for c in &trail {
                assert_eq!(super::super::check_invariants(c), Vec::<String>::new());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn micro_effects_commute(seed in any::<u64>(), steps in 0usize..200, perm_seed in any::<u64>()) {
            let p = program("APP.make", &[APP, POT, EAT, REFILL]);
            let trail = walk(&p, seed, steps);
            let mut c = trail.last().unwrap().clone();
            // Force several processors to completion points at once by
            // jumping every running frame to its final state.
            for q in &mut c.processors {
                if q.status == Status::Running {
                    if let Some(f) = q.stack.last_mut() {
                        f.state = p.feature(f.feature).final_state;
                    }
                }
            }
            let round = complete_round(&p, &c);
            let mut forward = c.clone();
            for m in &round {
                apply_micro(&p, &mut forward, m);
            }
            let mut order: Vec<usize> = (0..round.len()).collect();
            let mut r = perm_seed;
            for i in (1..order.len()).rev() {
                r = r.wrapping_mul(6364136223846793005).wrapping_add(1);
                order.swap(i, (r >> 33) as usize % (i + 1));
            }
            let mut shuffled = c.clone();
            for i in order {
                apply_micro(&p, &mut shuffled, &round[i]);
            }
            prop_assert_eq!(forward, shuffled);
        }
    }

    #[test]
    fn wait_condition_is_retried_not_reported() {
        // The eater can run before the refill; the pot starts full so
        // the second get has to wait for the refill.
        let p = program("APP.make", &[APP, POT, EAT, REFILL]);
        #[derive(Default)]
        struct Seen(Vec<ConditionEvent>);
        impl EngineHook for Seen {
            fn on_condition(&mut self, e: &ConditionEvent) {
                self.0.push(e.clone());
            }
        }
        let mut seen = Seen::default();
        let mut frontier = vec![initial_configuration(&p, Options { postconditions: true, token: false })];
        let mut visited = std::collections::HashSet::new();
        while let Some(c) = frontier.pop() {
            if !visited.insert(c.clone()) || visited.len() > 20_000 {
                continue;
            }
            for (_, n) in successors_with_hook(&p, &c, &mut seen) {
                assert_eq!(n.error, None);
                frontier.push(n);
            }
        }
        assert!(seen.0.iter().any(|e| e.class == ConditionClass::WaitCondition && e.feature == "EAT.get"));
        assert!(seen.0.iter().all(|e| e.class == ConditionClass::WaitCondition));
    }

    #[test]
    fn precondition_on_local_data_is_an_error() {
        let p = program(
            "APP.make",
            &["class APP create make feature make do set (0) end set (v: INTEGER) require positive: v > 0 do end end"],
        );
        let end = run_to_end(&p, initial_configuration(&p, Options::default()));
        let e = end.error.unwrap();
        assert_eq!(e.class, ErrorClass::PreconditionFail);
        assert_eq!(e.tag.as_deref(), Some("positive"));
        assert_eq!(e.feature.as_deref(), Some("APP.set"));
    }

    #[test]
    fn postconditions_can_be_switched_off() {
        let src = "class APP create make feature x: INTEGER make do x := 2 ensure one: x = 1 end end";
        let p = program("APP.make", &[src]);
        let on = run_to_end(&p, initial_configuration(&p, Options::default()));
        assert_eq!(on.error.unwrap().class, ErrorClass::PostconditionFail);
        let off = run_to_end(&p, initial_configuration(&p, Options { postconditions: false, token: true }));
        assert_eq!(off.error, None);
    }

    #[test]
    fn fail_wait_condition_releases_entry_locks() {
        let p = program("APP.make", &[APP, POT, EAT, REFILL]);
        let get = p.feature_id("EAT", "get").unwrap();
        let mut found = false;
        for seed in 0..50 {
            for c in walk(&p, seed, 3_000) {
                let Some(pid) = c.processors.iter().position(|q| {
                    q.top().is_some_and(|f| f.feature == get && !f.acquired.is_empty() && f.state != 0)
                        && q.status == Status::Running
                }) else {
                    continue;
                };
                let next = fail_wait_condition(&p, &c, pid as Pid);
                let f = next.processors[pid].top().unwrap();
                assert!(f.acquired.is_empty());
                assert_eq!(f.state, p.feature(get).init);
                assert!(next.held_by(pid as Pid).is_empty());
                found = true;
            }
        }
        assert!(found);
    }
}
