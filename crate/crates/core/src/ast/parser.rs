use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{tokenize, Token, TokenKind};
use super::{
    Assertion, BaseType, BinOp, ClassAst, Expr, ExprKind, FeatureAst, Instruction, ParseError,
    ProgramError, ProgramErrors, Span, TypeAnnot, Warning,
};

/// Identifiers that name Eiffel constructs outside the supported subset.
const UNSUPPORTED_WORDS: &[&str] = &[
    "inherit", "agent", "old", "once", "deferred", "external", "attribute", "attached",
    "detachable", "expanded", "frozen", "like", "check", "debug", "retry", "rescue", "inspect",
    "across", "precursor", "implies", "xor", "variant", "redefine", "rename", "undefine",
    "convert", "alias", "obsolete", "some", "all",
];

const UNSUPPORTED_TYPES: &[&str] = &[
    "STRING", "STRING_8", "STRING_32", "REAL", "REAL_32", "REAL_64", "DOUBLE", "CHARACTER",
    "CHARACTER_8", "CHARACTER_32", "NATURAL", "NATURAL_8", "NATURAL_16", "NATURAL_32",
    "NATURAL_64", "ARRAY", "LIST", "TUPLE", "ANY",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedClass {
    pub ast: ClassAst,
    pub warnings: Vec<Warning>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParsedProgram {
    pub classes: Vec<ClassAst>,
    /// Class name to the file that declared it.
    pub origins: BTreeMap<String, String>,
    pub warnings: Vec<(String, Warning)>,
}

/// Parses exactly one class from `tokens`.
pub fn parse_class(tokens: &[Token]) -> Result<ParsedClass, ParseError> {
    let mut p = Parser::new(tokens);
    let ast = p.class_decl()?;
    p.expect_eof()?;
    Ok(ParsedClass { ast, warnings: p.warnings })
}

/// Parses every file, continuing past files with errors, and rejects
/// duplicate class names across files.
pub fn parse_program(files: &[(String, String)]) -> Result<ParsedProgram, ProgramErrors> {
    if files.is_empty() {
        return Err(ProgramErrors(vec![ProgramError::NoInput]));
    }
    let mut out = ParsedProgram::default();
    let mut errors = Vec::new();
    for (file, text) in files {
        let parsed = tokenize(text).map_err(ParseError::from).and_then(|toks| {
            let mut p = Parser::new(&toks);
            let mut classes = Vec::new();
            loop {
                classes.push(p.class_decl()?);
                if p.at_eof() {
                    break;
                }
            }
            Ok((classes, p.warnings))
        });
        match parsed {
            Ok((classes, warnings)) => {
                out.warnings.extend(warnings.into_iter().map(|w| (file.clone(), w)));
                for class in classes {
                    if let Some(first) = out.origins.get(&class.name) {
                        errors.push(ProgramError::DuplicateClass {
                            name: class.name.clone(),
                            first: first.clone(),
                            second: file.clone(),
                        });
                        continue;
                    }
                    out.origins.insert(class.name.clone(), file.clone());
                    out.classes.push(class);
                }
            }
            Err(error) => errors.push(ProgramError::InFile { file: file.clone(), error }),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(ProgramErrors(errors))
    }
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    warnings: Vec<Warning>,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn new(toks: &'a [Token]) -> Self {
        Self { toks, pos: 0, warnings: Vec::new() }
    }

    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&'a Token> {
        self.toks.get(self.pos + n)
    }

    fn at_eof(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn here(&self) -> Span {
        match self.peek() {
            Some(t) => t.span(),
            None => self.toks.last().map(|t| t.span()).unwrap_or(Span::new(1, 1)),
        }
    }

    fn bump(&mut self) -> &'a Token {
        let t = &self.toks[self.pos];
        self.pos += 1;
        t
    }

    fn found(&self) -> String {
        self.peek().map(|t| t.to_string()).unwrap_or_else(|| "end of input".into())
    }

    fn syntax<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(ParseError::Syntax {
            location: self.here(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.found(),
        })
    }

    fn unsupported<T>(&self, span: Span, name: impl Into<String>) -> PResult<T> {
        Err(ParseError::UnsupportedFeature { location: span, name: name.into() })
    }

    fn check_kw(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(kw))
    }

    fn check_punct(&self, p: &str) -> bool {
        self.peek().is_some_and(|t| t.is_punct(p))
    }

    fn check_op(&self, op: &str) -> bool {
        self.peek().is_some_and(|t| t.is_op(op))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.check_kw(kw);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        let hit = self.check_punct(p);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<&'a Token> {
        if self.check_kw(kw) {
            Ok(self.bump())
        } else {
            self.syntax(&[&format!("`{kw}`")])
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<&'a Token> {
        if self.check_punct(p) {
            Ok(self.bump())
        } else {
            self.syntax(&[&format!("`{p}`")])
        }
    }

    fn expect_eof(&self) -> PResult<()> {
        if self.at_eof() {
            Ok(())
        } else {
            self.syntax(&["end of input"])
        }
    }

    /// Rejects tokens that can only start an unsupported construct.
    fn reject_unsupported_token(&self) -> PResult<()> {
        let Some(t) = self.peek() else { return Ok(()) };
        match t.kind {
            TokenKind::StringLiteral => self.unsupported(t.span(), "string literal"),
            TokenKind::RealLiteral => self.unsupported(t.span(), "real literal"),
            TokenKind::Identifier
                if UNSUPPORTED_WORDS.iter().any(|w| t.text.eq_ignore_ascii_case(w)) =>
            {
                self.unsupported(t.span(), t.text.to_ascii_lowercase())
            }
            _ => Ok(()),
        }
    }

    fn ident(&mut self) -> PResult<&'a Token> {
        self.reject_unsupported_token()?;
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => Ok(self.bump()),
            _ => self.syntax(&["identifier"]),
        }
    }

    fn note_block(&mut self) -> PResult<()> {
        // note entries: `key: value {, value}`; values are discarded.
        while self.peek().is_some_and(|t| t.kind == TokenKind::Identifier)
            && self.peek_at(1).is_some_and(|t| t.is_punct(":"))
        {
            self.pos += 2;
            loop {
                match self.peek() {
                    Some(t)
                        if matches!(
                            t.kind,
                            TokenKind::StringLiteral
                                | TokenKind::Identifier
                                | TokenKind::IntegerLiteral
                                | TokenKind::BooleanLiteral
                        ) =>
                    {
                        self.pos += 1;
                    }
                    _ => return self.syntax(&["note value"]),
                }
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.eat_punct(";");
        }
        Ok(())
    }

    fn skip_export_list(&mut self) -> PResult<()> {
        if self.eat_punct("{") {
            while !self.check_punct("}") {
                self.ident()?;
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.expect_punct("}")?;
        }
        Ok(())
    }

    fn class_decl(&mut self) -> PResult<ClassAst> {
        if self.eat_kw("note") {
            self.note_block()?;
        }
        self.reject_unsupported_token()?;
        let class_tok = self.expect_kw("class")?;
        let name = self.ident()?.text.clone();
        if self.check_punct("[") {
            return self.unsupported(self.here(), "generics");
        }
        self.reject_unsupported_token()?;

        let mut creation_procedures = Vec::new();
        if self.eat_kw("create") {
            self.skip_export_list()?;
            loop {
                creation_procedures.push(self.ident()?.text.clone());
                if !self.eat_punct(",") {
                    break;
                }
            }
        }

        let mut features = Vec::new();
        let mut attributes = Vec::new();
        loop {
            if self.eat_kw("feature") {
                self.skip_export_list()?;
                self.members(&mut features, &mut attributes)?;
            } else if self.check_kw("invariant") {
                let span = self.bump().span();
                self.assertions()?;
                self.warnings.push(Warning {
                    location: span,
                    message: "class invariant ignored (not checked)".into(),
                });
            } else if self.eat_kw("note") {
                self.note_block()?;
            } else if self.check_kw("end") {
                self.bump();
                break;
            } else {
                self.reject_unsupported_token()?;
                return self.syntax(&["`feature`", "`invariant`", "`end`"]);
            }
        }

        let ast = ClassAst { name, creation_procedures, features, attributes, span: class_tok.span() };
        self.check_class(&ast)?;
        Ok(ast)
    }

    fn check_class(&self, ast: &ClassAst) -> PResult<()> {
        let mut seen = BTreeSet::new();
        let names = ast
            .attributes
            .iter()
            .map(|(n, _)| (n, ast.span))
            .chain(ast.features.iter().map(|f| (&f.name, f.span)));
        for (name, span) in names {
            if !seen.insert(name.to_ascii_lowercase()) {
                return Err(ParseError::DuplicateName { location: span, name: name.clone() });
            }
        }
        for proc in &ast.creation_procedures {
            match ast.feature(proc) {
                Some(f) if !f.is_query() => {}
                _ => {
                    return Err(ParseError::Syntax {
                        location: ast.span,
                        expected: vec![format!("a routine named `{proc}` for the create clause")],
                        found: "no such routine".into(),
                    })
                }
            }
        }
        for f in &ast.features {
            let mut local_names = BTreeSet::new();
            for (n, _) in f.formals.iter().chain(f.locals.iter()) {
                let key = n.to_ascii_lowercase();
                if !local_names.insert(key.clone()) || seen.contains(&key) {
                    return Err(ParseError::DuplicateName { location: f.span, name: n.clone() });
                }
            }
        }
        Ok(())
    }

    fn at_member_end(&self) -> bool {
        self.at_eof()
            || self.check_kw("feature")
            || self.check_kw("invariant")
            || self.check_kw("end")
            || self.check_kw("note")
    }

    fn members(
        &mut self,
        features: &mut Vec<FeatureAst>,
        attributes: &mut Vec<(String, TypeAnnot)>,
    ) -> PResult<()> {
        while !self.at_member_end() {
            let first = self.ident()?;
            let span = first.span();
            let mut names = vec![first.text.clone()];
            while self.eat_punct(",") {
                names.push(self.ident()?.text.clone());
            }

            if self.check_punct("(") {
                if names.len() > 1 {
                    return self.syntax(&["`:`"]);
                }
                let formals = self.formal_list()?;
                let return_type = if self.eat_punct(":") { Some(self.type_annot()?) } else { None };
                let f = self.routine_rest(names.remove(0), formals, return_type, span)?;
                features.push(f);
            } else if self.eat_punct(":") {
                let ty = self.type_annot()?;
                if self.starts_routine_body() {
                    if names.len() > 1 {
                        return self.syntax(&["attribute declaration"]);
                    }
                    let f = self.routine_rest(names.remove(0), vec![], Some(ty), span)?;
                    features.push(f);
                } else {
                    self.reject_unsupported_token()?;
                    for n in names {
                        attributes.push((n, ty.clone()));
                    }
                    self.eat_punct(";");
                }
            } else if self.starts_routine_body() {
                if names.len() > 1 {
                    return self.syntax(&["`:`"]);
                }
                let f = self.routine_rest(names.remove(0), vec![], None, span)?;
                features.push(f);
            } else {
                self.reject_unsupported_token()?;
                return self.syntax(&["`(`", "`:`", "`do`", "`require`", "`local`"]);
            }
        }
        Ok(())
    }

    fn starts_routine_body(&self) -> bool {
        self.check_kw("do") || self.check_kw("require") || self.check_kw("local")
    }

    fn formal_list(&mut self) -> PResult<Vec<(String, TypeAnnot)>> {
        self.expect_punct("(")?;
        let mut out = Vec::new();
        while !self.check_punct(")") {
            let group = self.decl_group()?;
            out.extend(group);
            self.eat_punct(";");
        }
        self.expect_punct(")")?;
        Ok(out)
    }

    /// `a, b: TYPE`
    fn decl_group(&mut self) -> PResult<Vec<(String, TypeAnnot)>> {
        let mut names = vec![self.ident()?.text.clone()];
        while self.eat_punct(",") {
            names.push(self.ident()?.text.clone());
        }
        self.expect_punct(":")?;
        let ty = self.type_annot()?;
        Ok(names.into_iter().map(|n| (n, ty.clone())).collect())
    }

    fn type_annot(&mut self) -> PResult<TypeAnnot> {
        let sep_span = self.here();
        let separate = self.eat_kw("separate");
        let tok = self.ident()?;
        let upper = tok.text.to_ascii_uppercase();
        if UNSUPPORTED_TYPES.contains(&upper.as_str()) {
            return self.unsupported(tok.span(), format!("type {upper}"));
        }
        if self.check_punct("[") {
            return self.unsupported(self.here(), "generics");
        }
        let base = match upper.as_str() {
            "INTEGER" | "INTEGER_32" | "INTEGER_64" => BaseType::Integer,
            "BOOLEAN" => BaseType::Boolean,
            _ => BaseType::Class(tok.text.clone()),
        };
        if separate && !matches!(base, BaseType::Class(_)) {
            return self.unsupported(sep_span, format!("separate {upper}"));
        }
        Ok(TypeAnnot { base, separate })
    }

    fn routine_rest(
        &mut self,
        name: String,
        formals: Vec<(String, TypeAnnot)>,
        return_type: Option<TypeAnnot>,
        span: Span,
    ) -> PResult<FeatureAst> {
        let mut require = Vec::new();
        if self.eat_kw("require") {
            if self.check_kw("else") {
                return self.unsupported(self.here(), "require else");
            }
            require = self.assertions()?;
        }
        let mut locals = Vec::new();
        if self.eat_kw("local") {
            while !self.check_kw("do") && !self.at_eof() {
                locals.extend(self.decl_group()?);
                self.eat_punct(";");
            }
        }
        self.reject_unsupported_token()?;
        self.expect_kw("do")?;
        let body = self.compound()?;
        let mut ensure = Vec::new();
        if self.eat_kw("ensure") {
            if self.check_kw("then") {
                return self.unsupported(self.here(), "ensure then");
            }
            ensure = self.assertions()?;
        }
        self.reject_unsupported_token()?;
        self.expect_kw("end")?;
        self.eat_punct(";");
        Ok(FeatureAst { name, formals, return_type, locals, require, ensure, body, span })
    }

    fn at_assertion_end(&self) -> bool {
        self.at_eof()
            || ["do", "local", "ensure", "end", "feature", "class", "invariant", "require", "note"]
                .iter()
                .any(|kw| self.check_kw(kw))
    }

    fn assertions(&mut self) -> PResult<Vec<Assertion>> {
        let mut out = Vec::new();
        while !self.at_assertion_end() {
            self.reject_unsupported_token()?;
            let tag = match (self.peek(), self.peek_at(1)) {
                (Some(t), Some(colon)) if t.kind == TokenKind::Identifier && colon.is_punct(":") => {
                    self.pos += 2;
                    Some(t.text.clone())
                }
                _ => None,
            };
            let expr = self.expr()?;
            out.push(Assertion { tag, expr });
            self.eat_punct(";");
        }
        Ok(out)
    }

    fn at_compound_end(&self) -> bool {
        self.at_eof()
            || ["end", "else", "until", "loop", "ensure", "then", "invariant"]
                .iter()
                .any(|kw| self.check_kw(kw))
            || self.peek().is_some_and(|t| t.is_ident("elseif"))
    }

    fn compound(&mut self) -> PResult<Vec<Instruction>> {
        let mut out = Vec::new();
        while !self.at_compound_end() {
            out.push(self.instruction()?);
            while self.eat_punct(";") {}
        }
        Ok(out)
    }

    fn instruction(&mut self) -> PResult<Instruction> {
        self.reject_unsupported_token()?;
        let span = self.here();
        if self.eat_kw("create") {
            if self.check_punct("{") {
                return self.unsupported(span, "explicit creation type");
            }
            let target = self.ident()?.text.clone();
            self.expect_punct(".")?;
            let procedure = self.ident()?.text.clone();
            let args = if self.check_punct("(") { self.args()? } else { vec![] };
            return Ok(Instruction::Create { target, procedure, args, span });
        }
        if self.eat_kw("if") {
            return self.if_rest(span);
        }
        if self.eat_kw("from") {
            let init = self.compound()?;
            if self.check_kw("invariant") {
                return self.unsupported(self.here(), "loop invariant");
            }
            self.expect_kw("until")?;
            let until = self.expr()?;
            self.expect_kw("loop")?;
            let body = self.compound()?;
            self.expect_kw("end")?;
            return Ok(Instruction::Loop { init, until, body, span });
        }
        // Assignment: `name := expr` or `Result := expr`.
        if let (Some(t), Some(op)) = (self.peek(), self.peek_at(1)) {
            let assignable = t.kind == TokenKind::Identifier || t.is_keyword("Result");
            if assignable && op.is_op(":=") {
                self.pos += 2;
                let target = if t.is_keyword("Result") { "Result".to_string() } else { t.text.clone() };
                let value = self.expr()?;
                return Ok(Instruction::Assign { target, value, span });
            }
        }
        let e = self.postfix()?;
        if self.check_op(":=") {
            return self.unsupported(self.here(), "assignment to a qualified target");
        }
        match e.kind {
            ExprKind::Name { name, args } => Ok(Instruction::Call {
                target: Expr::new(ExprKind::CurrentRef, e.span),
                feature: name,
                args,
                span,
            }),
            ExprKind::QualifiedCall { target, feature, args } => {
                Ok(Instruction::Call { target: *target, feature, args, span })
            }
            _ => Err(ParseError::Syntax {
                location: span,
                expected: vec!["instruction".into()],
                found: "expression".into(),
            }),
        }
    }

    /// After `if` (or `elseif`); `elseif` chains nest in the else branch.
    fn if_rest(&mut self, span: Span) -> PResult<Instruction> {
        let cond = self.expr()?;
        self.expect_kw("then")?;
        let then_branch = self.compound()?;
        let else_branch = if self.peek().is_some_and(|t| t.is_ident("elseif")) {
            let nested_span = self.bump().span();
            return Ok(Instruction::If {
                cond,
                then_branch,
                else_branch: vec![self.if_rest(nested_span)?],
                span,
            });
        } else if self.eat_kw("else") {
            self.compound()?
        } else {
            vec![]
        };
        self.expect_kw("end")?;
        Ok(Instruction::If { cond, then_branch, else_branch, span })
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_punct("(")?;
        let mut out = Vec::new();
        if !self.check_punct(")") {
            loop {
                out.push(self.expr()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(out)
    }

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binop(&self) -> PResult<Option<BinOp>> {
        let Some(t) = self.peek() else { return Ok(None) };
        let op = match t.kind {
            TokenKind::Operator => match t.text.as_str() {
                "+" => BinOp::Add,
                "-" => BinOp::Sub,
                "*" => BinOp::Mul,
                "/" | "//" => BinOp::Div,
                "<" => BinOp::Lt,
                "<=" => BinOp::Le,
                ">" => BinOp::Gt,
                ">=" => BinOp::Ge,
                "=" => BinOp::Eq,
                "/=" => BinOp::Ne,
                ":=" => return Ok(None),
                other => return self.unsupported(t.span(), format!("operator {other}")),
            },
            TokenKind::Keyword if t.is_keyword("and") => BinOp::And,
            TokenKind::Keyword if t.is_keyword("or") => BinOp::Or,
            TokenKind::Identifier if t.is_ident("implies") || t.is_ident("xor") => {
                return self.unsupported(t.span(), t.text.to_ascii_lowercase())
            }
            _ => return Ok(None),
        };
        Ok(Some(op))
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop()? {
            if op.precedence() < min_prec {
                break;
            }
            let op_tok = self.bump();
            if op == BinOp::And && self.check_kw("then") {
                return self.unsupported(op_tok.span(), "and then");
            }
            if op == BinOp::Or && self.check_kw("else") {
                return self.unsupported(op_tok.span(), "or else");
            }
            let rhs = self.binary(op.precedence() + 1)?;
            let span = lhs.span;
            lhs = Expr::new(ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.check_kw("not") {
            let span = self.bump().span();
            let inner = self.unary()?;
            return Ok(Expr::new(ExprKind::Not(Box::new(inner)), span));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.check_punct(".") {
            self.bump();
            let name = self.ident()?;
            let args = if self.check_punct("(") { self.args()? } else { vec![] };
            let span = e.span;
            e = Expr::new(
                ExprKind::QualifiedCall { target: Box::new(e), feature: name.text.clone(), args },
                span,
            );
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        self.reject_unsupported_token()?;
        let Some(t) = self.peek() else {
            return self.syntax(&["expression"]);
        };
        let span = t.span();
        let kind = match t.kind {
            TokenKind::IntegerLiteral => {
                self.bump();
                ExprKind::IntLit(parse_int(&t.text))
            }
            TokenKind::BooleanLiteral => {
                self.bump();
                ExprKind::BoolLit(t.text.eq_ignore_ascii_case("true"))
            }
            TokenKind::Keyword if t.is_keyword("Void") => {
                self.bump();
                ExprKind::VoidLit
            }
            TokenKind::Keyword if t.is_keyword("Current") => {
                self.bump();
                ExprKind::CurrentRef
            }
            TokenKind::Keyword if t.is_keyword("Result") => {
                self.bump();
                ExprKind::ResultRef
            }
            TokenKind::Identifier => {
                self.bump();
                let args = if self.check_punct("(") { self.args()? } else { vec![] };
                ExprKind::Name { name: t.text.clone(), args }
            }
            TokenKind::Punctuation if t.is_punct("(") => {
                self.bump();
                let inner = self.expr()?;
                self.expect_punct(")")?;
                return Ok(inner);
            }
            TokenKind::Operator if t.is_op("-") => {
                self.bump();
                match self.peek() {
                    Some(n) if n.kind == TokenKind::IntegerLiteral => {
                        self.bump();
                        ExprKind::IntLit(-parse_int(&n.text))
                    }
                    _ => {
                        let operand = self.postfix()?;
                        ExprKind::Binary {
                            op: BinOp::Sub,
                            lhs: Box::new(Expr::new(ExprKind::IntLit(0), span)),
                            rhs: Box::new(operand),
                        }
                    }
                }
            }
            _ => return self.syntax(&["expression"]),
        };
        Ok(Expr::new(kind, span))
    }
}

fn parse_int(text: &str) -> i64 {
    // The lexer has already rejected literals that do not fit.
    text.chars().filter(|c| *c != '_').collect::<String>().parse().unwrap_or(0)
}

#[cfg(test)]
pub(crate) fn parse_expr_str(src: &str) -> PResult<Expr> {
    let toks = tokenize(src)?;
    let mut p = Parser::new(&toks);
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}
