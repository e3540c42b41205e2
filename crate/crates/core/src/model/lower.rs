use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{
    ActionId, ActionKind, ActionNode, ClassId, ClassModel, Expr, FeatureGraph, FeatureId,
    FeatureKind, LowerError, ModelProgram, ObjectTemplate, Place, SlotKind, StateId, StateKind,
    StateNode, SymbolTable, Ty,
};
use crate::ast::{
    self, parse_program, BaseType, BinOp, ClassAst, ExprKind, FeatureAst, Instruction,
    ProgramErrors, Span, TypeAnnot,
};

/// Root designation `CLASS.procedure`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootSpec {
    pub class: String,
    pub procedure: String,
}

impl RootSpec {
    pub fn new(class: impl Into<String>, procedure: impl Into<String>) -> Self {
        Self { class: class.into(), procedure: procedure.into() }
    }
}

impl fmt::Display for RootSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.class, self.procedure)
    }
}

impl FromStr for RootSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let valid = |p: &str| {
            !p.is_empty()
                && p.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
                && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        };
        match s.split_once('.') {
            Some((c, p)) if valid(c) && valid(p) => Ok(Self::new(c, p)),
            _ => Err(format!("root must have the form CLASS.procedure, got `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("{0}")]
    Parse(ProgramErrors),
    #[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
    Lower(Vec<LowerError>),
}

/// Parses, collects signatures and lowers in one go. Parser warnings are
/// carried into the program's warning list.
pub fn lower_sources(files: &[(String, String)], root: &RootSpec) -> Result<ModelProgram, FrontendError> {
    let parsed = parse_program(files).map_err(FrontendError::Parse)?;
    let symbols =
        super::collect_signatures(&parsed.classes).map_err(|e| FrontendError::Lower(vec![e]))?;
    let mut program = lower_program(&parsed.classes, &symbols, root).map_err(FrontendError::Lower)?;
    let mut warnings: Vec<String> =
        parsed.warnings.iter().map(|(file, w)| format!("{file}:{}: {}", w.location, w.message)).collect();
    warnings.append(&mut program.warnings);
    program.warnings = warnings;
    Ok(program)
}

pub fn lower_program(
    classes: &[ClassAst],
    symbols: &SymbolTable,
    root: &RootSpec,
) -> Result<ModelProgram, Vec<LowerError>> {
    let class_ids: BTreeMap<&str, ClassId> =
        classes.iter().enumerate().map(|(i, c)| (c.name.as_str(), i as ClassId)).collect();
    let to_ty = |t: &TypeAnnot| match &t.base {
        BaseType::Integer => Ty::Int,
        BaseType::Boolean => Ty::Bool,
        BaseType::Class(c) => Ty::Ref { class: class_ids[c.as_str()], separate: t.separate },
    };

    // Feature ids: routines in source order, then one getter per attribute.
    let mut models = Vec::new();
    let mut next_feature: FeatureId = 0;
    for class in classes {
        let mut features = BTreeMap::new();
        for f in &class.features {
            features.insert(f.name.clone(), next_feature);
            next_feature += 1;
        }
        for (name, _) in &class.attributes {
            features.insert(name.clone(), next_feature);
            next_feature += 1;
        }
        let slots = class
            .attributes
            .iter()
            .map(|(n, t)| {
                let kind = match &t.base {
                    BaseType::Integer => SlotKind::Int,
                    BaseType::Boolean => SlotKind::Bool,
                    BaseType::Class(c) => SlotKind::Ref { class: c.clone(), separate: t.separate },
                };
                (n.clone(), kind)
            })
            .collect();
        models.push(ClassModel {
            name: class.name.clone(),
            template: ObjectTemplate { class_name: class.name.clone(), slots },
            slot_types: class.attributes.iter().map(|(_, t)| to_ty(t)).collect(),
            features,
            creation_procedures: class.creation_procedures.clone(),
        });
    }

    let env = Env { classes, symbols, models: &models, class_ids: &class_ids };
    let mut features = Vec::new();
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    for (ci, class) in classes.iter().enumerate() {
        for f in &class.features {
            match env.lower_routine(ci as ClassId, f, &mut warnings) {
                Ok(g) => features.push(g),
                Err(e) => {
                    errors.push(e);
                    features.push(placeholder(ci as ClassId, &f.name));
                }
            }
        }
        for (slot, (name, ty)) in class.attributes.iter().enumerate() {
            features.push(getter(ci as ClassId, name, to_ty(ty), slot as u32));
        }
    }

    let root_id = match resolve_root(classes, &models, root) {
        Ok(id) => id,
        Err(e) => {
            errors.push(e);
            0
        }
    };
    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(ModelProgram { classes: models, features, root: root_id, warnings })
}

fn resolve_root(classes: &[ClassAst], models: &[ClassModel], root: &RootSpec) -> Result<FeatureId, LowerError> {
    let invalid = |detail: &str| LowerError::InvalidRoot { root: root.to_string(), detail: detail.into() };
    let ci = classes.iter().position(|c| c.name == root.class).ok_or_else(|| invalid("no such class"))?;
    let class = &classes[ci];
    if !class.creation_procedures.contains(&root.procedure) {
        return Err(invalid("not a creation procedure of the class"));
    }
    let f = class.feature(&root.procedure).ok_or_else(|| invalid("no such routine"))?;
    if !f.formals.is_empty() {
        return Err(invalid("the root procedure must not take arguments"));
    }
    Ok(models[ci].features[&root.procedure])
}

fn placeholder(class: ClassId, name: &str) -> FeatureGraph {
    FeatureGraph {
        class,
        name: name.into(),
        kind: FeatureKind::Command,
        formals: vec![],
        locals: vec![],
        states: vec![],
        actions: vec![],
        init: 0,
        final_state: 0,
        getter_of: None,
        is_creation_procedure: false,
        span: Span::default(),
    }
}

fn getter(class: ClassId, name: &str, ty: Ty, slot: u32) -> FeatureGraph {
    let mut g = GraphBuilder::new();
    g.emit(ActionKind::Assign { place: Place::Result, value: Expr::Attr(slot) }, Span::default());
    let final_state = g.finish();
    FeatureGraph {
        class,
        name: name.into(),
        kind: FeatureKind::Query(ty),
        formals: vec![],
        locals: vec![],
        states: g.states,
        actions: g.actions,
        init: 0,
        final_state,
        getter_of: Some(slot),
        is_creation_procedure: false,
        span: Span::default(),
    }
}

enum Cursor {
    /// A fresh state with no outgoing actions yet.
    At(StateId),
    /// Actions whose out-state is still to be decided.
    Open(Vec<ActionId>),
}

const UNSET: StateId = StateId::MAX;

struct GraphBuilder {
    states: Vec<StateNode>,
    actions: Vec<ActionNode>,
    cursor: Cursor,
}

impl GraphBuilder {
    fn new() -> Self {
        let mut g = Self { states: Vec::new(), actions: Vec::new(), cursor: Cursor::At(0) };
        g.new_state();
        g
    }

    fn new_state(&mut self) -> StateId {
        self.states.push(StateNode { out: vec![], post_check: None, kind: StateKind::Normal });
        (self.states.len() - 1) as StateId
    }

    fn patch(&mut self, open: &[ActionId], target: StateId) {
        for a in open {
            self.actions[*a as usize].out = target;
        }
    }

    /// Materializes the cursor into a state that actions can leave from.
    fn here(&mut self) -> StateId {
        match std::mem::replace(&mut self.cursor, Cursor::Open(vec![])) {
            Cursor::At(s) => {
                self.cursor = Cursor::At(s);
                s
            }
            Cursor::Open(list) => {
                let s = self.new_state();
                self.patch(&list, s);
                self.cursor = Cursor::At(s);
                s
            }
        }
    }

    fn add_action(&mut self, from: StateId, kind: ActionKind, out: StateId, span: Span) -> ActionId {
        self.actions.push(ActionNode { kind, out, span });
        let id = (self.actions.len() - 1) as ActionId;
        self.states[from as usize].out.push(id);
        id
    }

    fn emit(&mut self, kind: ActionKind, span: Span) -> ActionId {
        let s = self.here();
        let id = self.add_action(s, kind, UNSET, span);
        self.cursor = Cursor::Open(vec![id]);
        id
    }

    fn take_open(&mut self, span: Span) -> Vec<ActionId> {
        if let Cursor::At(_) = self.cursor {
            self.emit(ActionKind::Noop, span);
        }
        match std::mem::replace(&mut self.cursor, Cursor::Open(vec![])) {
            Cursor::Open(list) => list,
            Cursor::At(_) => unreachable!(),
        }
    }

    fn finish(&mut self) -> StateId {
        if self.actions.is_empty() {
            self.emit(ActionKind::Noop, Span::default());
        }
        let s = self.here();
        self.states[s as usize].kind = StateKind::Final;
        s
    }
}

fn test(cond: Expr, tag: Option<String>) -> ActionKind {
    ActionKind::Test { cond, precondition_fail: false, postcondition: false, retry_state: None, tag }
}

struct Env<'a> {
    classes: &'a [ClassAst],
    symbols: &'a SymbolTable,
    models: &'a [ClassModel],
    class_ids: &'a BTreeMap<&'a str, ClassId>,
}

impl Env<'_> {
    fn ty(&self, t: &TypeAnnot) -> Ty {
        match &t.base {
            BaseType::Integer => Ty::Int,
            BaseType::Boolean => Ty::Bool,
            BaseType::Class(c) => Ty::Ref { class: self.class_ids[c.as_str()], separate: t.separate },
        }
    }

    fn ty_name(&self, t: Ty) -> String {
        match t {
            Ty::Int => "INTEGER".into(),
            Ty::Bool => "BOOLEAN".into(),
            Ty::Void => "Void".into(),
            Ty::Ref { class, separate } => format!(
                "{}{}",
                if separate { "separate " } else { "" },
                self.classes[class as usize].name
            ),
        }
    }

    fn lower_routine(&self, class: ClassId, f: &FeatureAst, warnings: &mut Vec<String>) -> Result<FeatureGraph, LowerError> {
        let class_ast = &self.classes[class as usize];
        let formals: Vec<(String, Ty)> = f.formals.iter().map(|(n, t)| (n.clone(), self.ty(t))).collect();
        let locals: Vec<(String, Ty)> = f.locals.iter().map(|(n, t)| (n.clone(), self.ty(t))).collect();
        let result = f.return_type.as_ref().map(|t| self.ty(t));
        let mut cx = Lowerer {
            env: self,
            class,
            context: format!("{}.{}", class_ast.name, f.name),
            formals: &formals,
            locals: &locals,
            result,
            g: GraphBuilder::new(),
            warnings,
        };

        let init: StateId = 0;
        let lock_targets: Vec<Expr> = formals
            .iter()
            .enumerate()
            .filter(|(_, (_, t))| t.is_separate())
            .map(|(i, _)| Expr::Formal(i as u32))
            .collect();
        if !lock_targets.is_empty() {
            cx.g.emit(ActionKind::Lock { targets: lock_targets.clone() }, f.span);
        }
        for clause in &f.require {
            let cond = cx.boolean(&clause.expr)?;
            let s = cx.g.here();
            let pos = cx.g.add_action(s, test(cond.clone(), clause.tag.clone()), UNSET, clause.expr.span);
            let fail = ActionKind::Test {
                cond: Expr::Not(Box::new(cond)),
                precondition_fail: true,
                postcondition: false,
                retry_state: Some(init),
                tag: clause.tag.clone(),
            };
            cx.g.add_action(s, fail, init, clause.expr.span);
            cx.g.cursor = Cursor::Open(vec![pos]);
        }
        cx.block(&f.body)?;

        if !f.ensure.is_empty() {
            let p = cx.g.here();
            let noop = cx.g.add_action(p, ActionKind::Noop, UNSET, f.span);
            let chain = cx.g.new_state();
            cx.g.states[p as usize].post_check = Some(chain);
            let fail_state = cx.g.new_state();
            cx.g.states[fail_state as usize].kind = StateKind::PostconditionFail;
            cx.g.cursor = Cursor::At(chain);
            for clause in &f.ensure {
                let cond = cx.boolean(&clause.expr)?;
                let s = cx.g.here();
                let post = |cond: Expr| ActionKind::Test {
                    cond,
                    precondition_fail: false,
                    postcondition: true,
                    retry_state: None,
                    tag: clause.tag.clone(),
                };
                let pos = cx.g.add_action(s, post(cond.clone()), UNSET, clause.expr.span);
                cx.g.add_action(s, post(Expr::Not(Box::new(cond))), fail_state, clause.expr.span);
                cx.g.cursor = Cursor::Open(vec![pos]);
            }
            let mut open = cx.g.take_open(f.span);
            open.push(noop);
            cx.g.cursor = Cursor::Open(open);
        }

        let is_creation = class_ast.creation_procedures.contains(&f.name);
        if is_creation {
            cx.g.emit(ActionKind::UnlockCreator, f.span);
        }
        if !lock_targets.is_empty() {
            cx.g.emit(ActionKind::UnlockExpr { targets: lock_targets }, f.span);
        }
        let final_state = cx.g.finish();
        let g = cx.g;
        Ok(FeatureGraph {
            class,
            name: f.name.clone(),
            kind: match result {
                Some(t) => FeatureKind::Query(t),
                None => FeatureKind::Command,
            },
            formals,
            locals,
            states: g.states,
            actions: g.actions,
            init,
            final_state,
            getter_of: None,
            is_creation_procedure: is_creation,
            span: f.span,
        })
    }
}

struct Lowerer<'a, 'w> {
    env: &'a Env<'a>,
    class: ClassId,
    context: String,
    formals: &'a [(String, Ty)],
    locals: &'a [(String, Ty)],
    result: Option<Ty>,
    g: GraphBuilder,
    warnings: &'w mut Vec<String>,
}

impl Lowerer<'_, '_> {
    fn mismatch(&self, location: Span, detail: String) -> LowerError {
        LowerError::TypeMismatch { location, context: self.context.clone(), detail }
    }

    fn unknown(&self, location: Span, name: &str) -> LowerError {
        LowerError::UnknownName { location, context: self.context.clone(), name: name.into() }
    }

    fn class_name(&self, class: ClassId) -> &str {
        &self.env.classes[class as usize].name
    }

    fn local(&self, name: &str) -> Option<(u32, Ty)> {
        self.locals.iter().position(|(n, _)| n == name).map(|i| (i as u32, self.locals[i].1))
    }

    fn formal(&self, name: &str) -> Option<(u32, Ty)> {
        self.formals.iter().position(|(n, _)| n == name).map(|i| (i as u32, self.formals[i].1))
    }

    fn attribute(&self, class: ClassId, name: &str) -> Option<(u32, Ty)> {
        let model = &self.env.models[class as usize];
        model
            .template
            .slots
            .iter()
            .position(|(n, _)| n == name)
            .map(|i| (i as u32, model.slot_types[i]))
    }

    fn boolean(&mut self, e: &ast::Expr) -> Result<Expr, LowerError> {
        let (ir, ty) = self.expr(e)?;
        if ty != Ty::Bool {
            return Err(self.mismatch(e.span, format!("expected BOOLEAN, found {}", self.env.ty_name(ty))));
        }
        Ok(ir)
    }

    fn expr(&mut self, e: &ast::Expr) -> Result<(Expr, Ty), LowerError> {
        let cur = Ty::Ref { class: self.class, separate: false };
        match &e.kind {
            ExprKind::IntLit(v) => Ok((Expr::Int(*v), Ty::Int)),
            ExprKind::BoolLit(b) => Ok((Expr::Bool(*b), Ty::Bool)),
            ExprKind::VoidLit => Ok((Expr::Void, Ty::Void)),
            ExprKind::CurrentRef => Ok((Expr::Current, cur)),
            ExprKind::ResultRef => match self.result {
                Some(t) => Ok((Expr::Result, t)),
                None => Err(self.mismatch(e.span, "`Result` used in a command".into())),
            },
            ExprKind::Name { name, args } => {
                if args.is_empty() {
                    if let Some((i, t)) = self.local(name) {
                        return Ok((Expr::Local(i), t));
                    }
                    if let Some((i, t)) = self.formal(name) {
                        return Ok((Expr::Formal(i), t));
                    }
                    if let Some((i, t)) = self.attribute(self.class, name) {
                        return Ok((Expr::Attr(i), t));
                    }
                }
                self.query(Expr::Current, cur, name, args, e.span)
            }
            ExprKind::QualifiedCall { target, feature, args } => {
                let (t, tty) = self.expr(target)?;
                self.query(t, tty, feature, args, e.span)
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let (l, lt) = self.expr(lhs)?;
                let (r, rt) = self.expr(rhs)?;
                let ty = self.binary_type(*op, lt, rt, e.span)?;
                if matches!(op, BinOp::Div | BinOp::Or) {
                    self.warnings.push(format!(
                        "{}: {}: conformance note: operator `{}` is accepted beyond the core operator set",
                        e.span,
                        self.context,
                        op.symbol()
                    ));
                }
                Ok((Expr::Binary { op: *op, lhs: Box::new(l), rhs: Box::new(r) }, ty))
            }
            ExprKind::Not(inner) => {
                let ir = self.boolean(inner)?;
                Ok((Expr::Not(Box::new(ir)), Ty::Bool))
            }
        }
    }

    fn binary_type(&self, op: BinOp, l: Ty, r: Ty, span: Span) -> Result<Ty, LowerError> {
        let ok = match op {
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => (l == Ty::Int && r == Ty::Int).then_some(Ty::Int),
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => (l == Ty::Int && r == Ty::Int).then_some(Ty::Bool),
            BinOp::And | BinOp::Or => (l == Ty::Bool && r == Ty::Bool).then_some(Ty::Bool),
            BinOp::Eq | BinOp::Ne => {
                let same = l == r && !l.is_ref() || l.is_ref() && r.is_ref();
                same.then_some(Ty::Bool)
            }
        };
        ok.ok_or_else(|| {
            self.mismatch(
                span,
                format!(
                    "operator `{}` cannot combine {} and {}",
                    op.symbol(),
                    self.env.ty_name(l),
                    self.env.ty_name(r)
                ),
            )
        })
    }

    /// Separate targets must be controlled, i.e. separate formal arguments.
    fn check_target(&self, target: &Expr, ty: Ty, span: Span) -> Result<ClassId, LowerError> {
        match ty {
            Ty::Ref { class, separate } => {
                if separate && !matches!(target, Expr::Formal(_)) {
                    return Err(LowerError::NonControlledSeparateTarget {
                        location: span,
                        context: self.context.clone(),
                        target: render_target(target, self),
                    });
                }
                Ok(class)
            }
            other => Err(self.mismatch(span, format!("call target of type {}", self.env.ty_name(other)))),
        }
    }

    fn args(&mut self, feature: &str, formals: &[(String, TypeAnnot)], args: &[ast::Expr], span: Span) -> Result<Vec<Expr>, LowerError> {
        if formals.len() != args.len() {
            return Err(LowerError::ArityMismatch {
                location: span,
                feature: feature.into(),
                expected: formals.len(),
                found: args.len(),
            });
        }
        let mut out = Vec::new();
        for ((name, fty), a) in formals.iter().zip(args) {
            let (ir, aty) = self.expr(a)?;
            let fty = self.env.ty(fty);
            if !aty.conforms_to(fty) {
                return Err(self.mismatch(
                    a.span,
                    format!(
                        "argument `{name}` of {feature} expects {}, found {}",
                        self.env.ty_name(fty),
                        self.env.ty_name(aty)
                    ),
                ));
            }
            out.push(ir);
        }
        Ok(out)
    }

    fn query(&mut self, target: Expr, tty: Ty, name: &str, args: &[ast::Expr], span: Span) -> Result<(Expr, Ty), LowerError> {
        let class = self.check_target(&target, tty, span)?;
        let class_name = self.class_name(class).to_string();
        let sym = &self.env.symbols.classes[&class_name];
        let ret = if let Some((_, aty)) = sym.attribute(name).filter(|_| args.is_empty()) {
            self.env.ty(aty)
        } else if let Some(sig) = sym.routines.get(name) {
            let Some(rt) = &sig.return_type else {
                return Err(self.mismatch(span, format!("command `{class_name}.{name}` used as an expression")));
            };
            let rt = self.env.ty(rt);
            let formals = sig.formals.clone();
            let label = format!("{class_name}.{name}");
            let ir_args = self.args(&label, &formals, args, span)?;
            let feature = self.env.models[class as usize].features[name];
            let ty = separate_result(rt, tty);
            return Ok((Expr::Query { target: Box::new(target), feature, args: ir_args }, ty));
        } else {
            return Err(self.unknown(span, name));
        };
        let feature = self.env.models[class as usize].features[name];
        Ok((Expr::Query { target: Box::new(target), feature, args: vec![] }, separate_result(ret, tty)))
    }

    fn place(&self, name: &str, span: Span) -> Result<(Place, Ty), LowerError> {
        if name == "Result" {
            return match self.result {
                Some(t) => Ok((Place::Result, t)),
                None => Err(self.mismatch(span, "`Result` assigned in a command".into())),
            };
        }
        if let Some((i, t)) = self.local(name) {
            return Ok((Place::Local(i), t));
        }
        if self.formal(name).is_some() {
            return Err(self.mismatch(span, format!("formal argument `{name}` is not assignable")));
        }
        if let Some((i, t)) = self.attribute(self.class, name) {
            return Ok((Place::Attr(i), t));
        }
        Err(self.unknown(span, name))
    }

    fn block(&mut self, instrs: &[Instruction]) -> Result<(), LowerError> {
        for i in instrs {
            self.instruction(i)?;
        }
        Ok(())
    }

    fn instruction(&mut self, instr: &Instruction) -> Result<(), LowerError> {
        match instr {
            Instruction::Assign { target, value, span } => {
                let (place, pty) = self.place(target, *span)?;
                let (v, vty) = self.expr(value)?;
                if !vty.conforms_to(pty) {
                    return Err(self.mismatch(
                        *span,
                        format!("cannot assign {} to `{target}` of type {}", self.env.ty_name(vty), self.env.ty_name(pty)),
                    ));
                }
                self.g.emit(ActionKind::Assign { place, value: v }, *span);
            }
            Instruction::Call { target, feature, args, span } => {
                let (t, tty) = self.expr(target)?;
                let class = self.check_target(&t, tty, *span)?;
                let class_name = self.class_name(class).to_string();
                let sym = &self.env.symbols.classes[&class_name];
                let sig = match sym.routines.get(feature) {
                    Some(sig) if sig.return_type.is_none() => sig.clone(),
                    Some(_) => {
                        return Err(self.mismatch(*span, format!("query `{class_name}.{feature}` used as an instruction")))
                    }
                    None if sym.attribute(feature).is_some() => {
                        return Err(self.mismatch(*span, format!("attribute `{class_name}.{feature}` used as an instruction")))
                    }
                    None => return Err(self.unknown(*span, feature)),
                };
                let ir_args = self.args(&format!("{class_name}.{feature}"), &sig.formals, args, *span)?;
                let id = self.env.models[class as usize].features[feature.as_str()];
                self.g.emit(ActionKind::CommandCall { target: t, feature: id, args: ir_args }, *span);
            }
            Instruction::Create { target, procedure, args, span } => {
                let (place, pty) = self.place(target, *span)?;
                let Ty::Ref { class, separate } = pty else {
                    return Err(self.mismatch(*span, format!("creation target `{target}` is not a reference")));
                };
                let class_name = self.class_name(class).to_string();
                let sym = &self.env.symbols.classes[&class_name];
                if !sym.creation_procedures.contains(procedure) {
                    return Err(self.unknown(*span, &format!("{class_name}.{procedure} (creation procedure)")));
                }
                let sig = sym.routines[procedure].clone();
                let ir_args = self.args(&format!("{class_name}.{procedure}"), &sig.formals, args, *span)?;
                let id = self.env.models[class as usize].features[procedure.as_str()];
                self.g.emit(
                    ActionKind::Create { place, class, procedure: id, args: ir_args, separate },
                    *span,
                );
                if separate {
                    let target_expr = match place {
                        Place::Attr(i) => Expr::Attr(i),
                        Place::Local(i) => Expr::Local(i),
                        Place::Result => Expr::Result,
                    };
                    self.g.emit(ActionKind::Lock { targets: vec![target_expr.clone()] }, *span);
                    self.g.emit(ActionKind::UnlockExpr { targets: vec![target_expr] }, *span);
                }
            }
            Instruction::If { cond, then_branch, else_branch, span } => {
                let c = self.boolean(cond)?;
                let s = self.g.here();
                let pos = self.g.add_action(s, test(c.clone(), None), UNSET, *span);
                let neg = self.g.add_action(s, test(Expr::Not(Box::new(c)), None), UNSET, *span);
                self.g.cursor = Cursor::Open(vec![pos]);
                self.block(then_branch)?;
                let mut open = self.g.take_open(*span);
                self.g.cursor = Cursor::Open(vec![neg]);
                self.block(else_branch)?;
                open.extend(self.g.take_open(*span));
                self.g.cursor = Cursor::Open(open);
            }
            Instruction::Loop { init, until, body, span } => {
                self.block(init)?;
                let c = self.boolean(until)?;
                let head = self.g.here();
                let exit = self.g.add_action(head, test(c.clone(), None), UNSET, *span);
                let enter = self.g.add_action(head, test(Expr::Not(Box::new(c)), None), UNSET, *span);
                self.g.cursor = Cursor::Open(vec![enter]);
                self.block(body)?;
                let back = self.g.take_open(*span);
                self.g.patch(&back, head);
                self.g.cursor = Cursor::Open(vec![exit]);
            }
        }
        Ok(())
    }
}

/// A reference obtained through a separate target is itself separate.
fn separate_result(ret: Ty, target: Ty) -> Ty {
    match (ret, target) {
        (Ty::Ref { class, separate }, Ty::Ref { separate: ts, .. }) => Ty::Ref { class, separate: separate || ts },
        (t, _) => t,
    }
}

fn render_target(e: &Expr, cx: &Lowerer<'_, '_>) -> String {
    match e {
        Expr::Local(i) => cx.locals[*i as usize].0.clone(),
        Expr::Formal(i) => cx.formals[*i as usize].0.clone(),
        Expr::Attr(i) => cx.env.models[cx.class as usize].template.slots[*i as usize].0.clone(),
        Expr::Current => "Current".into(),
        Expr::Result => "Result".into(),
        _ => "expression".into(),
    }
}
