//! Operational semantics: configurations, the prioritized enabled-transition
//! relation, transition application and per-state error detection.

mod detect;
mod engine;
mod eval;

use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;

use crate::model::{ClassId, FeatureId, StateId, Ty};

pub use detect::{blocking_graph, check_invariants, check_transition, detect_errors, find_cycle, waits_for_graph, WaitGraph};
pub use engine::{
    apply, apply_micro, apply_with_hook, classify_condition, complete_round, enabled, fail_wait_condition,
    initial_configuration, planned_lock, settle, should_pass_locks, successors, successors_with_hook, ApplyError,
    ConditionClass, ConditionEvent, EngineHook, Micro,
};
pub use eval::{eval_expression, EvalOutcome};

pub type Pid = u32;
pub type ObjId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Ref(Option<ObjId>),
}

impl Value {
    pub fn default_for(ty: Ty) -> Value {
        match ty {
            Ty::Int => Value::Int(0),
            Ty::Bool => Value::Bool(false),
            Ty::Ref { .. } | Ty::Void => Value::Ref(None),
        }
    }

    pub fn as_ref(self) -> Option<ObjId> {
        match self {
            Value::Ref(r) => r,
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{}", if *b { "True" } else { "False" }),
            Value::Ref(None) => f.write_str("Void"),
            Value::Ref(Some(o)) => write!(f, "#{o}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LockState {
    Unlocked,
    LockedBy(Pid),
    /// Held from creation until the creation procedure releases it.
    CreationLockedBy(Pid),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Idle,
    Running,
    AwaitingResult,
    AwaitingLockRestore,
    /// Blocked on a Lock action; holds the handlers that are not free.
    AwaitingLocks(Vec<Pid>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    pub feature: FeatureId,
    pub current: ObjId,
    pub formals: Vec<Value>,
    pub locals: Vec<Value>,
    pub result: Value,
    pub state: StateId,
    /// Synchronous calls only: where the caller continues after a command.
    /// Queries deliver into the caller's memo instead.
    pub return_state: Option<StateId>,
    /// Results of the queries already answered at the current state, in
    /// evaluation order.
    pub memo: Vec<Value>,
    /// Processors whose locks were held when the frame became active.
    pub controls: Vec<Pid>,
    /// Locks taken by this frame's own Lock actions.
    pub acquired: Vec<Pid>,
    pub restore_to: Option<Pid>,
    pub passed_locks: Vec<Pid>,
    /// Separate queries: the client waiting for the result.
    pub reply_to: Option<Pid>,
    /// Frame of a creation procedure started by a separate `create`.
    pub creation: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RequestKind {
    Command,
    Query,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Request {
    pub feature: FeatureId,
    pub frame: Frame,
    pub kind: RequestKind,
    pub reply_to: Option<Pid>,
    /// Enqueue order, for checking FIFO service. Not part of the state key.
    pub seq: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Processor {
    pub id: Pid,
    pub region: Vec<ObjId>,
    pub queue: VecDeque<Request>,
    pub lock: LockState,
    pub stack: Vec<Frame>,
    pub status: Status,
    pub has_token: bool,
}

impl Processor {
    pub fn new(id: Pid) -> Self {
        Self {
            id,
            region: Vec::new(),
            queue: VecDeque::new(),
            lock: LockState::Unlocked,
            stack: Vec::new(),
            status: Status::Idle,
            has_token: false,
        }
    }

    pub fn top(&self) -> Option<&Frame> {
        self.stack.last()
    }

    /// (feature, state) of the active frame.
    pub fn position(&self) -> Option<(FeatureId, StateId)> {
        self.top().map(|f| (f.feature, f.state))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ObjectInstance {
    pub id: ObjId,
    pub class: ClassId,
    pub slots: Vec<Value>,
    pub handler: Pid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Options {
    pub postconditions: bool,
    pub token: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self { postconditions: true, token: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Deadlock,
    WaitConditionDeadlock,
    PreconditionFail,
    PostconditionFail,
    VoidCall,
    DivideByZero,
    IntOverflow,
    InternalInvariant,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 8] = [
        ErrorClass::Deadlock,
        ErrorClass::WaitConditionDeadlock,
        ErrorClass::PreconditionFail,
        ErrorClass::PostconditionFail,
        ErrorClass::VoidCall,
        ErrorClass::DivideByZero,
        ErrorClass::IntOverflow,
        ErrorClass::InternalInvariant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Deadlock => "deadlock",
            ErrorClass::WaitConditionDeadlock => "wait_condition_deadlock",
            ErrorClass::PreconditionFail => "precondition_fail",
            ErrorClass::PostconditionFail => "postcondition_fail",
            ErrorClass::VoidCall => "void_call",
            ErrorClass::DivideByZero => "divide_by_zero",
            ErrorClass::IntOverflow => "int_overflow",
            ErrorClass::InternalInvariant => "internal_invariant",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct EngineError {
    pub class: ErrorClass,
    pub pid: Option<Pid>,
    /// `CLASS.feature` of the violating frame.
    pub feature: Option<String>,
    pub tag: Option<String>,
    pub detail: String,
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.class)?;
        if let Some(feature) = &self.feature {
            write!(f, " in {feature}")?;
        }
        if let Some(tag) = &self.tag {
            write!(f, " [{tag}]")?;
        }
        if let Some(pid) = self.pid {
            write!(f, " on processor {pid}")?;
        }
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

/// One global state of the modeled program.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    /// Indexed by pid; creation order doubles as the token list order.
    pub processors: Vec<Processor>,
    /// Indexed by object id.
    pub objects: Vec<ObjectInstance>,
    pub first_processor: Pid,
    pub action_executed_indicator: bool,
    pub reset_token_flag: bool,
    pub options: Options,
    pub error: Option<EngineError>,
    pub next_seq: u64,
}

impl Configuration {
    pub fn processor(&self, pid: Pid) -> &Processor {
        &self.processors[pid as usize]
    }

    pub fn object(&self, oid: ObjId) -> &ObjectInstance {
        &self.objects[oid as usize]
    }

    pub fn handler(&self, oid: ObjId) -> Pid {
        self.objects[oid as usize].handler
    }

    pub fn token_holder(&self) -> Option<Pid> {
        self.processors.iter().find(|p| p.has_token).map(|p| p.id)
    }

    /// Processors whose lock `pid` currently holds (excluding creation locks).
    pub fn held_by(&self, pid: Pid) -> Vec<Pid> {
        self.processors
            .iter()
            .filter(|p| p.lock == LockState::LockedBy(pid))
            .map(|p| p.id)
            .collect()
    }

    pub fn all_idle(&self) -> bool {
        self.processors.iter().all(|p| p.status == Status::Idle)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleId {
    Assign,
    Test,
    Noop,
    CommandNonSeparate,
    CommandSeparate,
    QueryNonSeparate,
    QuerySeparate,
    NewNonSeparate,
    NewSeparate,
    Lock,
    UnlockExpr,
    UnlockCreator,
    FailWaitCondition,
    QueueRemove,
    PassToken,
    PassTokenFirst,
    ResetToken,
    CleanupToken,
    ErrorCommandVoidTarget,
    ErrorQueryVoidTarget,
    ErrorPrecondition,
    ErrorPostcondition,
    ErrorArithmetic,
}

impl RuleId {
    pub const ALL: [RuleId; 23] = [
        RuleId::Assign,
        RuleId::Test,
        RuleId::Noop,
        RuleId::CommandNonSeparate,
        RuleId::CommandSeparate,
        RuleId::QueryNonSeparate,
        RuleId::QuerySeparate,
        RuleId::NewNonSeparate,
        RuleId::NewSeparate,
        RuleId::Lock,
        RuleId::UnlockExpr,
        RuleId::UnlockCreator,
        RuleId::FailWaitCondition,
        RuleId::QueueRemove,
        RuleId::PassToken,
        RuleId::PassTokenFirst,
        RuleId::ResetToken,
        RuleId::CleanupToken,
        RuleId::ErrorCommandVoidTarget,
        RuleId::ErrorQueryVoidTarget,
        RuleId::ErrorPrecondition,
        RuleId::ErrorPostcondition,
        RuleId::ErrorArithmetic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::Assign => "action_Assign",
            RuleId::Test => "action_Test",
            RuleId::Noop => "action_Noop",
            RuleId::CommandNonSeparate => "action_Command_non-separate",
            RuleId::CommandSeparate => "action_Command_separate",
            RuleId::QueryNonSeparate => "bexp_Query_non-separate",
            RuleId::QuerySeparate => "bexp_Query_separate",
            RuleId::NewNonSeparate => "action_New_non-separate",
            RuleId::NewSeparate => "action_New_separate",
            RuleId::Lock => "action_Lock",
            RuleId::UnlockExpr => "action_Unlock_Expr",
            RuleId::UnlockCreator => "action_Unlock_Creator",
            RuleId::FailWaitCondition => "fail_wait_condition",
            RuleId::QueueRemove => "queue_Remove",
            RuleId::PassToken => "pass_token",
            RuleId::PassTokenFirst => "pass_token_first",
            RuleId::ResetToken => "reset_token",
            RuleId::CleanupToken => "cleanup_token",
            RuleId::ErrorCommandVoidTarget => "error_Command_Void_Target",
            RuleId::ErrorQueryVoidTarget => "error_Query_Void_Target",
            RuleId::ErrorPrecondition => "error_PreconditionFail",
            RuleId::ErrorPostcondition => "error_PostconditionFail",
            RuleId::ErrorArithmetic => "error_Arithmetic",
        }
    }

    pub fn parse(s: &str) -> Option<RuleId> {
        RuleId::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for RuleId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Priority levels. Higher levels pre-empt lower ones.
pub mod level {
    pub const LOCAL: u8 = 6;
    pub const PASS_TOKEN: u8 = 3;
    pub const PASS_TOKEN_FIRST: u8 = 2;
    pub const INTERLEAVING: u8 = 1;
    pub const TOKEN_RESET: u8 = 0;
}

/// An applicable rule instance. A processor has at most one planned step,
/// so `(rule, pid)` identifies the instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transition {
    pub rule: RuleId,
    pub pid: Pid,
    pub level: u8,
}
