//! Front end for the supported SCOOP subset: tokens, class syntax trees and
//! a recursive-descent parser.

mod lexer;
mod parser;
pub mod pretty;

use std::fmt;

use thiserror::Error;

pub use lexer::{tokenize, Token, TokenKind, KEYWORDS};
pub use parser::{parse_class, parse_program, ParsedClass, ParsedProgram};

/// Source position. Spans never take part in structural equality, so two
/// trees parsed from differently formatted sources compare equal.
#[derive(Clone, Copy, Debug, Default, Eq)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl Span {
    pub fn new(line: u32, column: u32) -> Self {
        Self { line, column }
    }
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BaseType {
    Integer,
    Boolean,
    Class(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeAnnot {
    pub base: BaseType,
    pub separate: bool,
}

impl TypeAnnot {
    pub fn integer() -> Self {
        Self { base: BaseType::Integer, separate: false }
    }

    pub fn boolean() -> Self {
        Self { base: BaseType::Boolean, separate: false }
    }

    pub fn class(name: impl Into<String>, separate: bool) -> Self {
        Self { base: BaseType::Class(name.into()), separate }
    }
}

impl fmt::Display for TypeAnnot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.separate {
            f.write_str("separate ")?;
        }
        match &self.base {
            BaseType::Integer => f.write_str("INTEGER"),
            BaseType::Boolean => f.write_str("BOOLEAN"),
            BaseType::Class(c) => f.write_str(c),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "=",
            BinOp::Ne => "/=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Div => 5,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 3
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprKind {
    IntLit(i64),
    BoolLit(bool),
    VoidLit,
    CurrentRef,
    ResultRef,
    /// Unqualified identifier, possibly with arguments (`f (x)`).
    Name { name: String, args: Vec<Expr> },
    QualifiedCall { target: Box<Expr>, feature: String, args: Vec<Expr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Not(Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Self { kind, span }
    }

    pub fn int(v: i64) -> Self {
        Self::new(ExprKind::IntLit(v), Span::default())
    }

    pub fn boolean(v: bool) -> Self {
        Self::new(ExprKind::BoolLit(v), Span::default())
    }

    pub fn name(n: &str) -> Self {
        Self::new(ExprKind::Name { name: n.into(), args: vec![] }, Span::default())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Self::new(
            ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) },
            Span::default(),
        )
    }

    pub fn not(e: Expr) -> Self {
        Self::new(ExprKind::Not(Box::new(e)), Span::default())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instruction {
    Create { target: String, procedure: String, args: Vec<Expr>, span: Span },
    /// `target` is `CurrentRef` for unqualified calls.
    Call { target: Expr, feature: String, args: Vec<Expr>, span: Span },
    Assign { target: String, value: Expr, span: Span },
    If { cond: Expr, then_branch: Vec<Instruction>, else_branch: Vec<Instruction>, span: Span },
    Loop { init: Vec<Instruction>, until: Expr, body: Vec<Instruction>, span: Span },
}

impl Instruction {
    pub fn span(&self) -> Span {
        match self {
            Instruction::Create { span, .. }
            | Instruction::Call { span, .. }
            | Instruction::Assign { span, .. }
            | Instruction::If { span, .. }
            | Instruction::Loop { span, .. } => *span,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assertion {
    pub tag: Option<String>,
    pub expr: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureAst {
    pub name: String,
    pub formals: Vec<(String, TypeAnnot)>,
    pub return_type: Option<TypeAnnot>,
    pub locals: Vec<(String, TypeAnnot)>,
    pub require: Vec<Assertion>,
    pub ensure: Vec<Assertion>,
    pub body: Vec<Instruction>,
    pub span: Span,
}

impl FeatureAst {
    pub fn is_query(&self) -> bool {
        self.return_type.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassAst {
    pub name: String,
    pub creation_procedures: Vec<String>,
    pub features: Vec<FeatureAst>,
    pub attributes: Vec<(String, TypeAnnot)>,
    pub span: Span,
}

impl ClassAst {
    pub fn feature(&self, name: &str) -> Option<&FeatureAst> {
        self.features.iter().find(|f| f.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message} near {snippet:?}")]
pub struct LexError {
    pub line: u32,
    pub column: u32,
    pub snippet: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("{location}: expected {}, found {found}", expected.join(" or "))]
    Syntax { location: Span, expected: Vec<String>, found: String },
    #[error("{location}: unsupported feature `{name}`")]
    UnsupportedFeature { location: Span, name: String },
    #[error("{location}: duplicate declaration of `{name}`")]
    DuplicateName { location: Span, name: String },
}

impl ParseError {
    pub fn location(&self) -> Span {
        match self {
            ParseError::Lex(e) => Span::new(e.line, e.column),
            ParseError::Syntax { location, .. }
            | ParseError::UnsupportedFeature { location, .. }
            | ParseError::DuplicateName { location, .. } => *location,
        }
    }
}

/// A non-fatal observation made while parsing (discarded constructs,
/// conformance notes).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Warning {
    pub location: Span,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("no input")]
    NoInput,
    #[error("{file}: {error}")]
    InFile { file: String, error: ParseError },
    #[error("duplicate class {name} (in {first} and {second})")]
    DuplicateClass { name: String, first: String, second: String },
}

/// All errors collected while parsing a multi-file program.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
pub struct ProgramErrors(pub Vec<ProgramError>);
