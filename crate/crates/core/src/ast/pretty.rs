//! Renders syntax trees back to source text. Output re-parses to an equal tree.

use std::fmt::Write;

use super::{Assertion, ClassAst, Expr, ExprKind, FeatureAst, Instruction, TypeAnnot};

pub fn class_to_source(class: &ClassAst) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "class {}", class.name);
    if !class.creation_procedures.is_empty() {
        let _ = writeln!(out, "create {}", class.creation_procedures.join(", "));
    }
    if !class.attributes.is_empty() || !class.features.is_empty() {
        out.push_str("feature\n");
    }
    for (name, ty) in &class.attributes {
        let _ = writeln!(out, "  {name}: {ty}");
    }
    for f in &class.features {
        feature(&mut out, f);
    }
    out.push_str("end\n");
    out
}

fn decls(items: &[(String, TypeAnnot)]) -> String {
    items.iter().map(|(n, t)| format!("{n}: {t}")).collect::<Vec<_>>().join("; ")
}

fn feature(out: &mut String, f: &FeatureAst) {
    out.push_str("  ");
    out.push_str(&f.name);
    if !f.formals.is_empty() {
        let _ = write!(out, " ({})", decls(&f.formals));
    }
    if let Some(t) = &f.return_type {
        let _ = write!(out, ": {t}");
    }
    out.push('\n');
    if !f.require.is_empty() {
        out.push_str("    require\n");
        assertions(out, &f.require);
    }
    if !f.locals.is_empty() {
        let _ = writeln!(out, "    local {}", decls(&f.locals));
    }
    out.push_str("    do\n");
    compound(out, &f.body, 3);
    if !f.ensure.is_empty() {
        out.push_str("    ensure\n");
        assertions(out, &f.ensure);
    }
    out.push_str("    end\n");
}

fn assertions(out: &mut String, items: &[Assertion]) {
    for a in items {
        out.push_str("      ");
        if let Some(tag) = &a.tag {
            let _ = write!(out, "{tag}: ");
        }
        out.push_str(&expr_to_source(&a.expr));
        out.push('\n');
    }
}

fn compound(out: &mut String, items: &[Instruction], depth: usize) {
    for i in items {
        instruction(out, i, depth);
    }
}

fn instruction(out: &mut String, i: &Instruction, depth: usize) {
    let pad = "  ".repeat(depth);
    match i {
        Instruction::Create { target, procedure, args, .. } => {
            let _ = writeln!(out, "{pad}create {target}.{procedure}{}", arg_list(args));
        }
        Instruction::Call { target, feature, args, .. } => {
            let prefix = match target.kind {
                ExprKind::CurrentRef => String::new(),
                _ => format!("{}.", call_target(target)),
            };
            let _ = writeln!(out, "{pad}{prefix}{feature}{}", arg_list(args));
        }
        Instruction::Assign { target, value, .. } => {
            let _ = writeln!(out, "{pad}{target} := {}", expr_to_source(value));
        }
        Instruction::If { cond, then_branch, else_branch, .. } => {
            let _ = writeln!(out, "{pad}if {} then", expr_to_source(cond));
            compound(out, then_branch, depth + 1);
            if !else_branch.is_empty() {
                let _ = writeln!(out, "{pad}else");
                compound(out, else_branch, depth + 1);
            }
            let _ = writeln!(out, "{pad}end");
        }
        Instruction::Loop { init, until, body, .. } => {
            let _ = writeln!(out, "{pad}from");
            compound(out, init, depth + 1);
            let _ = writeln!(out, "{pad}until {}", expr_to_source(until));
            let _ = writeln!(out, "{pad}loop");
            compound(out, body, depth + 1);
            let _ = writeln!(out, "{pad}end");
        }
    }
}

fn arg_list(args: &[Expr]) -> String {
    if args.is_empty() {
        String::new()
    } else {
        let parts: Vec<String> = args.iter().map(expr_to_source).collect();
        format!(" ({})", parts.join(", "))
    }
}

fn call_target(e: &Expr) -> String {
    match e.kind {
        ExprKind::Name { .. }
        | ExprKind::QualifiedCall { .. }
        | ExprKind::CurrentRef
        | ExprKind::ResultRef => expr_to_source(e),
        _ => format!("({})", expr_to_source(e)),
    }
}

/// Binary operands are always parenthesised, so precedence never matters.
pub fn expr_to_source(e: &Expr) -> String {
    match &e.kind {
        ExprKind::IntLit(v) => v.to_string(),
        ExprKind::BoolLit(b) => if *b { "True" } else { "False" }.into(),
        ExprKind::VoidLit => "Void".into(),
        ExprKind::CurrentRef => "Current".into(),
        ExprKind::ResultRef => "Result".into(),
        ExprKind::Name { name, args } => format!("{name}{}", arg_list(args)),
        ExprKind::QualifiedCall { target, feature, args } => {
            format!("{}.{feature}{}", call_target(target), arg_list(args))
        }
        ExprKind::Binary { op, lhs, rhs } => {
            format!("({} {} {})", expr_to_source(lhs), op.symbol(), expr_to_source(rhs))
        }
        ExprKind::Not(inner) => format!("(not {})", expr_to_source(inner)),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::ast::parser::parse_expr_str;
    use crate::ast::{parse_class, tokenize, BinOp, Span};

    fn arb_name() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["a", "b", "count", "my_pot", "x1"]).prop_map(String::from)
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-1000i64..1000).prop_map(Expr::int),
            any::<bool>().prop_map(Expr::boolean),
            Just(Expr::new(ExprKind::VoidLit, Span::default())),
            Just(Expr::new(ExprKind::CurrentRef, Span::default())),
            Just(Expr::new(ExprKind::ResultRef, Span::default())),
            arb_name().prop_map(|n| Expr::name(&n)),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            let ops = prop::sample::select(vec![
                BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Lt, BinOp::Le,
                BinOp::Gt, BinOp::Ge, BinOp::Eq, BinOp::Ne, BinOp::And, BinOp::Or,
            ]);
            prop_oneof![
                (ops, inner.clone(), inner.clone()).prop_map(|(op, l, r)| Expr::binary(op, l, r)),
                inner.clone().prop_map(Expr::not),
                (inner.clone(), arb_name(), prop::collection::vec(inner.clone(), 0..2)).prop_map(
                    |(t, feature, args)| Expr::new(
                        ExprKind::QualifiedCall { target: Box::new(t), feature, args },
                        Span::default()
                    )
                ),
                (arb_name(), prop::collection::vec(inner, 1..3)).prop_map(|(name, args)| {
                    Expr::new(ExprKind::Name { name, args }, Span::default())
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn expressions_round_trip(e in arb_expr()) {
            let src = expr_to_source(&e);
            prop_assert_eq!(parse_expr_str(&src).unwrap(), e);
        }
    }

    #[test]
    fn class_round_trip() {
        let src = "class COUNTER create make feature
            value: INTEGER
            other: separate COUNTER
            make (start: INTEGER) require positive: start >= 0 do value := start end
            bump (c: separate COUNTER) require not c.is_done
              local i: INTEGER
              do from i := 0 until i >= 3 loop i := i + 1; c.inc (i) end
                 if i = 3 then value := value * 2 else create other.make (1) end
              ensure value > 0 end
            is_done: BOOLEAN do Result := value > 10 end
            inc (n: INTEGER) do value := value + n end
          end";
        let first = parse_class(&tokenize(src).unwrap()).unwrap().ast;
        let printed = class_to_source(&first);
        let second = parse_class(&tokenize(&printed).unwrap()).unwrap().ast;
        assert_eq!(first, second);
    }
}
