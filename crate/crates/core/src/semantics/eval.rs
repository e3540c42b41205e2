use crate::ast::BinOp;
use crate::model::{Expr, FeatureId};

use super::{Configuration, ErrorClass, Frame, ObjId, Value};

/// Result of evaluating an expression in the active frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalOutcome {
    Value(Value),
    /// The first query without a memoized result. Evaluation resumes once
    /// its value has been appended to the frame memo.
    NeedsQuery { target: ObjId, feature: FeatureId, args: Vec<Value> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct EvalFailure {
    pub class: ErrorClass,
    /// Query on a Void target rather than an arithmetic fault.
    pub void_query: bool,
    pub detail: String,
}

impl EvalFailure {
    fn arith(class: ErrorClass, detail: impl Into<String>) -> Self {
        Self { class, void_query: false, detail: detail.into() }
    }
}

pub(crate) enum Flow {
    Done(Value),
    Need { target: ObjId, feature: FeatureId, args: Vec<Value> },
}

/// Post-order evaluator over one frame. Queries consume memo entries in
/// evaluation order; `cursor` is shared by all expressions of an action.
pub(crate) struct Evaluator<'a> {
    pub config: &'a Configuration,
    pub frame: &'a Frame,
    pub cursor: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(config: &'a Configuration, frame: &'a Frame) -> Self {
        Self { config, frame, cursor: 0 }
    }

    pub fn eval(&mut self, e: &Expr) -> Result<Flow, EvalFailure> {
        macro_rules! value {
            ($e:expr) => {
                match self.eval($e)? {
                    Flow::Done(v) => v,
                    need => return Ok(need),
                }
            };
        }
        let v = match e {
            Expr::Int(i) => Value::Int(*i),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Void => Value::Ref(None),
            Expr::Current => Value::Ref(Some(self.frame.current)),
            Expr::Result => self.frame.result,
            Expr::Local(i) => self.frame.locals[*i as usize],
            Expr::Formal(i) => self.frame.formals[*i as usize],
            Expr::Attr(i) => self.config.object(self.frame.current).slots[*i as usize],
            Expr::Query { target, feature, args } => {
                let t = value!(target);
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(value!(a));
                }
                let Some(target) = t.as_ref() else {
                    return Err(EvalFailure {
                        class: ErrorClass::VoidCall,
                        void_query: true,
                        detail: "query on a Void target".into(),
                    });
                };
                match self.frame.memo.get(self.cursor) {
                    Some(v) => {
                        self.cursor += 1;
                        *v
                    }
                    None => return Ok(Flow::Need { target, feature: *feature, args: vals }),
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                let l = value!(lhs);
                let r = value!(rhs);
                binary(*op, l, r)?
            }
            Expr::Not(inner) => match value!(inner) {
                Value::Bool(b) => Value::Bool(!b),
                other => return Err(EvalFailure::arith(ErrorClass::InternalInvariant, format!("not on {other}"))),
            },
        };
        Ok(Flow::Done(v))
    }

    /// Evaluates a list left to right; stops at the first pending query.
    pub fn eval_all(&mut self, es: &[Expr]) -> Result<Result<Vec<Value>, Flow>, EvalFailure> {
        let mut out = Vec::with_capacity(es.len());
        for e in es {
            match self.eval(e)? {
                Flow::Done(v) => out.push(v),
                need => return Ok(Err(need)),
            }
        }
        Ok(Ok(out))
    }
}

fn binary(op: BinOp, l: Value, r: Value) -> Result<Value, EvalFailure> {
    use BinOp::*;
    let overflow = || EvalFailure::arith(ErrorClass::IntOverflow, format!("{l} {} {r} overflows", op.symbol()));
    Ok(match (op, l, r) {
        (Eq, a, b) => Value::Bool(a == b),
        (Ne, a, b) => Value::Bool(a != b),
        (Add, Value::Int(a), Value::Int(b)) => Value::Int(a.checked_add(b).ok_or_else(overflow)?),
        (Sub, Value::Int(a), Value::Int(b)) => Value::Int(a.checked_sub(b).ok_or_else(overflow)?),
        (Mul, Value::Int(a), Value::Int(b)) => Value::Int(a.checked_mul(b).ok_or_else(overflow)?),
        (Div, Value::Int(_), Value::Int(0)) => {
            return Err(EvalFailure::arith(ErrorClass::DivideByZero, format!("{l} / 0")))
        }
        (Div, Value::Int(a), Value::Int(b)) => Value::Int(a.checked_div(b).ok_or_else(overflow)?),
        (Lt, Value::Int(a), Value::Int(b)) => Value::Bool(a < b),
        (Le, Value::Int(a), Value::Int(b)) => Value::Bool(a <= b),
        (Gt, Value::Int(a), Value::Int(b)) => Value::Bool(a > b),
        (Ge, Value::Int(a), Value::Int(b)) => Value::Bool(a >= b),
        (And, Value::Bool(a), Value::Bool(b)) => Value::Bool(a && b),
        (Or, Value::Bool(a), Value::Bool(b)) => Value::Bool(a || b),
        _ => {
            return Err(EvalFailure::arith(
                ErrorClass::InternalInvariant,
                format!("ill-typed operands {l} {} {r}", op.symbol()),
            ))
        }
    })
}

/// Evaluates `expr` in the active frame of `pid`, consuming memoized query
/// results from the start of the memo.
pub fn eval_expression(config: &Configuration, pid: u32, expr: &Expr) -> Result<EvalOutcome, super::EngineError> {
    let frame = config.processor(pid).top().expect("eval_expression on an idle processor");
    let mut ev = Evaluator::new(config, frame);
    match ev.eval(expr) {
        Ok(Flow::Done(v)) => Ok(EvalOutcome::Value(v)),
        Ok(Flow::Need { target, feature, args }) => Ok(EvalOutcome::NeedsQuery { target, feature, args }),
        Err(f) => Err(super::EngineError { class: f.class, pid: Some(pid), feature: None, tag: None, detail: f.detail }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::{Options, Processor};

    fn config(frame: Frame, slots: Vec<Value>) -> Configuration {
        let mut p = Processor::new(0);
        p.region.push(0);
        p.stack.push(frame);
        p.status = super::super::Status::Running;
        Configuration {
            processors: vec![p],
            objects: vec![super::super::ObjectInstance { id: 0, class: 0, slots, handler: 0 }],
            first_processor: 0,
            action_executed_indicator: false,
            reset_token_flag: false,
            options: Options::default(),
            error: None,
            next_seq: 0,
        }
    }

    fn frame(formals: Vec<Value>, memo: Vec<Value>) -> Frame {
        Frame {
            feature: 0,
            current: 0,
            formals,
            locals: vec![],
            result: Value::Int(0),
            state: 0,
            return_state: None,
            memo,
            controls: vec![],
            acquired: vec![],
            restore_to: None,
            passed_locks: vec![],
            reply_to: None,
            creation: false,
        }
    }

    fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary { op, lhs: Box::new(l), rhs: Box::new(r) }
    }

    #[test]
    fn decrement() {
        let c = config(frame(vec![], vec![]), vec![Value::Int(2)]);
        let e = bin(BinOp::Sub, Expr::Attr(0), Expr::Int(1));
        assert_eq!(eval_expression(&c, 0, &e).unwrap(), EvalOutcome::Value(Value::Int(1)));
    }

    #[test]
    fn void_equals_void() {
        let c = config(frame(vec![], vec![]), vec![]);
        let e = bin(BinOp::Eq, Expr::Void, Expr::Void);
        assert_eq!(eval_expression(&c, 0, &e).unwrap(), EvalOutcome::Value(Value::Bool(true)));
    }

    #[test]
    fn separate_query_suspends_then_resumes() {
        let q = Expr::Not(Box::new(Expr::Query { target: Box::new(Expr::Formal(0)), feature: 7, args: vec![] }));
        let c = config(frame(vec![Value::Ref(Some(0))], vec![]), vec![]);
        assert_eq!(
            eval_expression(&c, 0, &q).unwrap(),
            EvalOutcome::NeedsQuery { target: 0, feature: 7, args: vec![] }
        );
        let c = config(frame(vec![Value::Ref(Some(0))], vec![Value::Bool(true)]), vec![]);
        assert_eq!(eval_expression(&c, 0, &q).unwrap(), EvalOutcome::Value(Value::Bool(false)));
    }

    #[test]
    fn arithmetic_faults() {
        let c = config(frame(vec![], vec![]), vec![]);
        let div = bin(BinOp::Div, Expr::Int(1), Expr::Int(0));
        assert_eq!(eval_expression(&c, 0, &div).unwrap_err().class, ErrorClass::DivideByZero);
        let ovf = bin(BinOp::Add, Expr::Int(i64::MAX), Expr::Int(1));
        assert_eq!(eval_expression(&c, 0, &ovf).unwrap_err().class, ErrorClass::IntOverflow);
        let min = bin(BinOp::Div, Expr::Int(i64::MIN), Expr::Int(-1));
        assert_eq!(eval_expression(&c, 0, &min).unwrap_err().class, ErrorClass::IntOverflow);
        let trunc = bin(BinOp::Div, Expr::Int(-7), Expr::Int(2));
        assert_eq!(eval_expression(&c, 0, &trunc).unwrap(), EvalOutcome::Value(Value::Int(-3)));
    }

    #[test]
    fn query_on_void_target() {
        let q = Expr::Query { target: Box::new(Expr::Formal(0)), feature: 0, args: vec![] };
        let c = config(frame(vec![Value::Ref(None)], vec![]), vec![]);
        assert_eq!(eval_expression(&c, 0, &q).unwrap_err().class, ErrorClass::VoidCall);
    }

    #[test]
    fn strict_and_evaluates_both_sides() {
        let q = Expr::Query { target: Box::new(Expr::Current), feature: 0, args: vec![] };
        let e = bin(BinOp::And, Expr::Bool(false), q);
        let c = config(frame(vec![], vec![]), vec![]);
        assert!(matches!(eval_expression(&c, 0, &e).unwrap(), EvalOutcome::NeedsQuery { .. }));
    }
}
