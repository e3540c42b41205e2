//! Static program model: object templates and one control-flow graph per
//! feature, lowered from class syntax trees in two passes.

mod dump;
mod lower;
mod symbols;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ast::{BinOp, Span};

pub use dump::dump_model;
pub use lower::{lower_program, lower_sources, FrontendError, RootSpec};
pub use symbols::{collect_signatures, ClassSymbols, RoutineSig, SymbolTable};
pub use validate::{validate_model, Diagnostic};

pub type ClassId = u32;
pub type FeatureId = u32;
pub type StateId = u32;
pub type ActionId = u32;

/// Static type of a value or variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ty {
    Int,
    Bool,
    Ref { class: ClassId, separate: bool },
    /// Type of the `Void` literal; conforms to every reference type.
    Void,
}

impl Ty {
    pub fn is_ref(self) -> bool {
        matches!(self, Ty::Ref { .. } | Ty::Void)
    }

    pub fn is_separate(self) -> bool {
        matches!(self, Ty::Ref { separate: true, .. })
    }

    /// Can a value of type `self` be stored where `target` is expected?
    pub fn conforms_to(self, target: Ty) -> bool {
        match (self, target) {
            (Ty::Int, Ty::Int) | (Ty::Bool, Ty::Bool) => true,
            (Ty::Void, Ty::Ref { .. }) => true,
            (Ty::Ref { class: a, separate: sa }, Ty::Ref { class: b, separate: sb }) => {
                a == b && (sb || !sa)
            }
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SlotKind {
    Int,
    Bool,
    Ref { class: String, separate: bool },
}

impl fmt::Display for SlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotKind::Int => f.write_str("int"),
            SlotKind::Bool => f.write_str("bool"),
            SlotKind::Ref { class, separate: true } => write!(f, "ref(separate {class})"),
            SlotKind::Ref { class, separate: false } => write!(f, "ref({class})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectTemplate {
    pub class_name: String,
    /// Declaration order; canonicalization relies on it.
    pub slots: Vec<(String, SlotKind)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Void,
    Current,
    Result,
    Local(u32),
    Formal(u32),
    Attr(u32),
    /// Call of a query (routine or synthesized getter). Local or separate
    /// is decided at run time from the target's handler.
    Query { target: Box<Expr>, feature: FeatureId, args: Vec<Expr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Not(Box<Expr>),
}

impl Expr {
    /// Number of `Query` nodes, i.e. the results a full evaluation consumes.
    pub fn query_count(&self) -> usize {
        match self {
            Expr::Query { target, args, .. } => {
                1 + target.query_count() + args.iter().map(Expr::query_count).sum::<usize>()
            }
            Expr::Binary { lhs, rhs, .. } => lhs.query_count() + rhs.query_count(),
            Expr::Not(e) => e.query_count(),
            _ => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Place {
    Attr(u32),
    Local(u32),
    Result,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ActionKind {
    Assign { place: Place, value: Expr },
    CommandCall { target: Expr, feature: FeatureId, args: Vec<Expr> },
    Create { place: Place, class: ClassId, procedure: FeatureId, args: Vec<Expr>, separate: bool },
    Lock { targets: Vec<Expr> },
    UnlockExpr { targets: Vec<Expr> },
    UnlockCreator,
    Test {
        cond: Expr,
        precondition_fail: bool,
        postcondition: bool,
        retry_state: Option<StateId>,
        tag: Option<String>,
    },
    Noop,
}

impl ActionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActionKind::Assign { .. } => "Assign",
            ActionKind::CommandCall { .. } => "Command",
            ActionKind::Create { .. } => "Create",
            ActionKind::Lock { .. } => "Lock",
            ActionKind::UnlockExpr { .. } => "UnlockExpr",
            ActionKind::UnlockCreator => "UnlockCreator",
            ActionKind::Test { .. } => "Test",
            ActionKind::Noop => "Noop",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionNode {
    pub kind: ActionKind,
    pub out: StateId,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateKind {
    Normal,
    Final,
    PostconditionFail,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateNode {
    pub out: Vec<ActionId>,
    /// Entry of the postcondition chain, followed when postconditions are on.
    pub post_check: Option<StateId>,
    pub kind: StateKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Command,
    Query(Ty),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureGraph {
    pub class: ClassId,
    pub name: String,
    pub kind: FeatureKind,
    pub formals: Vec<(String, Ty)>,
    pub locals: Vec<(String, Ty)>,
    pub states: Vec<StateNode>,
    pub actions: Vec<ActionNode>,
    pub init: StateId,
    pub final_state: StateId,
    /// Slot index when this is a synthesized attribute getter.
    pub getter_of: Option<u32>,
    pub is_creation_procedure: bool,
    pub span: Span,
}

impl FeatureGraph {
    pub fn is_query(&self) -> bool {
        matches!(self.kind, FeatureKind::Query(_))
    }

    pub fn state(&self, id: StateId) -> &StateNode {
        &self.states[id as usize]
    }

    pub fn action(&self, id: ActionId) -> &ActionNode {
        &self.actions[id as usize]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassModel {
    pub name: String,
    pub template: ObjectTemplate,
    pub slot_types: Vec<Ty>,
    pub features: BTreeMap<String, FeatureId>,
    pub creation_procedures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelProgram {
    pub classes: Vec<ClassModel>,
    pub features: Vec<FeatureGraph>,
    pub root: FeatureId,
    pub warnings: Vec<String>,
}

impl ModelProgram {
    pub fn feature(&self, id: FeatureId) -> &FeatureGraph {
        &self.features[id as usize]
    }

    pub fn class(&self, id: ClassId) -> &ClassModel {
        &self.classes[id as usize]
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.classes.iter().position(|c| c.name == name).map(|i| i as ClassId)
    }

    pub fn feature_id(&self, class: &str, name: &str) -> Option<FeatureId> {
        let c = self.class_id(class)?;
        self.class(c).features.get(name).copied()
    }

    /// `CLASS.name`
    pub fn feature_label(&self, id: FeatureId) -> String {
        let f = self.feature(id);
        format!("{}.{}", self.class(f.class).name, f.name)
    }

    pub fn state_count(&self) -> usize {
        self.features.iter().map(|f| f.states.len()).sum()
    }

    pub fn action_count(&self) -> usize {
        self.features.iter().map(|f| f.actions.len()).sum()
    }

    /// Source-like rendering of an expression inside `feature`.
    pub fn render_expr(&self, feature: FeatureId, e: &Expr) -> String {
        let f = self.feature(feature);
        match e {
            Expr::Int(v) => v.to_string(),
            Expr::Bool(b) => if *b { "True" } else { "False" }.into(),
            Expr::Void => "Void".into(),
            Expr::Current => "Current".into(),
            Expr::Result => "Result".into(),
            Expr::Local(i) => f.locals[*i as usize].0.clone(),
            Expr::Formal(i) => f.formals[*i as usize].0.clone(),
            Expr::Attr(i) => self.class(f.class).template.slots[*i as usize].0.clone(),
            Expr::Query { target, feature: q, args } => {
                let name = &self.feature(*q).name;
                let args = if args.is_empty() {
                    String::new()
                } else {
                    let parts: Vec<String> = args.iter().map(|a| self.render_expr(feature, a)).collect();
                    format!(" ({})", parts.join(", "))
                };
                match **target {
                    Expr::Current => format!("{name}{args}"),
                    _ => format!("{}.{name}{args}", self.render_expr(feature, target)),
                }
            }
            Expr::Binary { op, lhs, rhs } => format!(
                "({} {} {})",
                self.render_expr(feature, lhs),
                op.symbol(),
                self.render_expr(feature, rhs)
            ),
            Expr::Not(inner) => format!("not {}", self.render_expr(feature, inner)),
        }
    }

    pub fn render_place(&self, feature: FeatureId, p: Place) -> String {
        match p {
            Place::Attr(i) => self.render_expr(feature, &Expr::Attr(i)),
            Place::Local(i) => self.render_expr(feature, &Expr::Local(i)),
            Place::Result => "Result".into(),
        }
    }

    pub fn render_action(&self, feature: FeatureId, a: &ActionKind) -> String {
        let list = |xs: &[Expr]| {
            xs.iter().map(|x| self.render_expr(feature, x)).collect::<Vec<_>>().join(", ")
        };
        match a {
            ActionKind::Assign { place, value } => {
                format!("{} := {}", self.render_place(feature, *place), self.render_expr(feature, value))
            }
            ActionKind::CommandCall { target, feature: callee, args } => {
                let name = &self.feature(*callee).name;
                let args = if args.is_empty() { String::new() } else { format!(" ({})", list(args)) };
                match target {
                    Expr::Current => format!("{name}{args}"),
                    _ => format!("{}.{name}{args}", self.render_expr(feature, target)),
                }
            }
            ActionKind::Create { place, procedure, args, .. } => {
                let args = if args.is_empty() { String::new() } else { format!(" ({})", list(args)) };
                format!(
                    "create {}.{}{args}",
                    self.render_place(feature, *place),
                    self.feature(*procedure).name
                )
            }
            ActionKind::Lock { targets } => format!("lock ({})", list(targets)),
            ActionKind::UnlockExpr { targets } => format!("unlock ({})", list(targets)),
            ActionKind::UnlockCreator => "unlock creator".into(),
            ActionKind::Test { cond, precondition_fail, postcondition, .. } => {
                let mut s = format!("test {}", self.render_expr(feature, cond));
                if *precondition_fail {
                    s.push_str(" [precondition_fail]");
                }
                if *postcondition {
                    s.push_str(" [postcondition]");
                }
                s
            }
            ActionKind::Noop => "noop".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LowerError {
    #[error("{location}: unknown type {name}")]
    UnknownType { location: Span, name: String },
    #[error("{location}: unknown name `{name}` in {context}")]
    UnknownName { location: Span, context: String, name: String },
    #[error("{location}: unsupported feature `{name}` in {context}")]
    UnsupportedFeature { location: Span, context: String, name: String },
    #[error("{location}: type mismatch in {context}: {detail}")]
    TypeMismatch { location: Span, context: String, detail: String },
    #[error("{location}: call on separate target `{target}` in {context} is not a controlled formal argument")]
    NonControlledSeparateTarget { location: Span, context: String, target: String },
    #[error("{location}: {feature} expects {expected} argument(s), got {found}")]
    ArityMismatch { location: Span, feature: String, expected: usize, found: usize },
    #[error("invalid root {root}: {detail}")]
    InvalidRoot { root: String, detail: String },
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Int => f.write_str("INTEGER"),
            Ty::Bool => f.write_str("BOOLEAN"),
            Ty::Void => f.write_str("NONE"),
            Ty::Ref { class, separate } => {
                write!(f, "{}#{class}", if *separate { "separate " } else { "" })
            }
        }
    }
}
