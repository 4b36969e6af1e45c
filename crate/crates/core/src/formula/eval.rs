use std::cmp::Ordering;

use chrono::Datelike;

use super::check::{Builtin, Expr};
use super::syntax::{BinOp, UnOp};
use super::EvalError;
use crate::value::{compare_values, parse_as, SemanticType, Value};

#[derive(Clone, Debug)]
pub(crate) enum RVal<'a> {
    Scalar(Value),
    List(&'a [Value]),
}

pub(crate) struct Ctx<'a> {
    pub args: &'a [Value],
    pub index: i64,
    pub lists: &'a [&'a [Value]],
    pub locals: Vec<RVal<'a>>,
    /// Set when a `slice` had to clamp its requested range.
    pub truncated: bool,
    pub steps: usize,
    pub budget: usize,
}

fn null<'a>() -> RVal<'a> {
    RVal::Scalar(Value::Null)
}

fn finite(f: f64) -> Value {
    if f.is_finite() {
        Value::Float(f)
    } else {
        Value::Null
    }
}

impl<'a> Ctx<'a> {
    fn tick(&mut self, n: usize) -> Result<(), EvalError> {
        self.steps += n;
        if self.steps > self.budget {
            Err(EvalError::StepBudget(self.budget))
        } else {
            Ok(())
        }
    }

    fn scalar(&mut self, e: &Expr) -> Result<Value, EvalError> {
        match self.eval(e)? {
            RVal::Scalar(v) => Ok(v),
            RVal::List(_) => Err(EvalError::Internal("list where a value was expected".into())),
        }
    }

    pub(crate) fn eval(&mut self, e: &Expr) -> Result<RVal<'a>, EvalError> {
        self.tick(1)?;
        Ok(match e {
            Expr::Lit(v) => RVal::Scalar(v.clone()),
            Expr::Param(i) => RVal::Scalar(self.args[*i].clone()),
            Expr::Index => RVal::Scalar(Value::Int(self.index)),
            Expr::List(i) => RVal::List(self.lists[*i]),
            Expr::Local(i) => self.locals[*i].clone(),
            Expr::Let(slot, v, body) => {
                let v = self.eval(v)?;
                if self.locals.len() <= *slot {
                    self.locals.resize(*slot + 1, null());
                }
                let saved = std::mem::replace(&mut self.locals[*slot], v);
                let out = self.eval(body);
                self.locals[*slot] = saved;
                out?
            }
            Expr::Unary(op, inner) => {
                let v = self.scalar(inner)?;
                RVal::Scalar(match (op, v) {
                    (_, Value::Null) => Value::Null,
                    (UnOp::Neg, Value::Int(i)) => i.checked_neg().map_or(Value::Null, Value::Int),
                    (UnOp::Neg, Value::Float(f)) => Value::Float(-f),
                    (UnOp::Not, Value::Bool(b)) => Value::Bool(!b),
                    (_, v) => return Err(EvalError::Internal(format!("bad unary operand {v:?}"))),
                })
            }
            Expr::Binary(op, a, b) => RVal::Scalar(self.binary(*op, a, b)?),
            Expr::If(c, t, f) => match self.scalar(c)? {
                Value::Bool(true) => self.eval(t)?,
                Value::Bool(false) => self.eval(f)?,
                _ => null(),
            },
            Expr::Call(f, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(a)?);
                }
                self.call(*f, vals)?
            }
        })
    }

    fn binary(&mut self, op: BinOp, a: &Expr, b: &Expr) -> Result<Value, EvalError> {
        if matches!(op, BinOp::And | BinOp::Or) {
            let l = self.scalar(a)?;
            let short = if op == BinOp::And { Value::Bool(false) } else { Value::Bool(true) };
            if l == short && matches!(l, Value::Bool(_)) {
                return Ok(short);
            }
            let r = self.scalar(b)?;
            if r == short && matches!(r, Value::Bool(_)) {
                return Ok(short);
            }
            return Ok(match (l, r) {
                (Value::Bool(x), Value::Bool(y)) => Value::Bool(if op == BinOp::And { x && y } else { x || y }),
                _ => Value::Null,
            });
        }
        let l = self.scalar(a)?;
        let r = self.scalar(b)?;
        if l.is_null() || r.is_null() {
            return Ok(Value::Null);
        }
        Ok(match op {
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Rem => arith(op, &l, &r),
            BinOp::Div => match (l.as_f64(), r.as_f64()) {
                (Some(_), Some(y)) if y == 0.0 => Value::Null,
                (Some(x), Some(y)) => finite(x / y),
                _ => return Err(EvalError::Internal("non-numeric division".into())),
            },
            _ => {
                let Some(ord) = compare_values(&l, &r) else {
                    return Err(EvalError::Internal(format!("cannot compare {l:?} with {r:?}")));
                };
                Value::Bool(match op {
                    BinOp::Eq => ord == Ordering::Equal,
                    BinOp::Ne => ord != Ordering::Equal,
                    BinOp::Lt => ord == Ordering::Less,
                    BinOp::Le => ord != Ordering::Greater,
                    BinOp::Gt => ord == Ordering::Greater,
                    _ => ord != Ordering::Less,
                })
            }
        })
    }

    fn call(&mut self, f: Builtin, args: Vec<RVal<'a>>) -> Result<RVal<'a>, EvalError> {
        use Builtin as B;
        if f.is_list_fn() {
            return self.list_call(f, args);
        }
        let vals: Vec<Value> = args
            .into_iter()
            .map(|a| match a {
                RVal::Scalar(v) => Ok(v),
                RVal::List(_) => Err(EvalError::Internal(format!("list passed to `{}`", f.name()))),
            })
            .collect::<Result<_, _>>()?;
        if vals.iter().any(Value::is_null) {
            return Ok(null());
        }
        let num = |i: usize| vals[i].as_f64().unwrap_or(f64::NAN);
        let text = |i: usize| match &vals[i] {
            Value::Text(s) => s.as_str(),
            _ => "",
        };
        let int = |i: usize| match &vals[i] {
            Value::Int(n) => *n,
            _ => 0,
        };
        let date = |i: usize| match &vals[i] {
            Value::Date(d) => Some(*d),
            Value::DateTime(dt) => Some(dt.date()),
            _ => None,
        };
        let v = match f {
            B::Abs => match &vals[0] {
                Value::Int(i) => i.checked_abs().map_or(Value::Null, Value::Int),
                _ => Value::Float(num(0).abs()),
            },
            B::Round | B::Floor | B::Ceil => match &vals[0] {
                Value::Int(i) => Value::Int(*i),
                _ => {
                    let x = num(0);
                    let scale = if vals.len() == 2 { 10f64.powi(int(1).clamp(-300, 300) as i32) } else { 1.0 };
                    let y = match f {
                        B::Round => (x * scale).round() / scale,
                        B::Floor => x.floor(),
                        _ => x.ceil(),
                    };
                    finite(y)
                }
            },
            B::Sqrt => {
                if num(0) < 0.0 {
                    Value::Null
                } else {
                    finite(num(0).sqrt())
                }
            }
            B::Pow => finite(num(0).powf(num(1))),
            B::Min | B::Max => {
                let all_int = vals.iter().all(|v| matches!(v, Value::Int(_)));
                let pick = |best: &Value, v: &Value| {
                    let ord = compare_values(v, best).unwrap_or(Ordering::Equal);
                    (f == B::Min && ord == Ordering::Less) || (f == B::Max && ord == Ordering::Greater)
                };
                let mut best = vals[0].clone();
                for v in &vals[1..] {
                    if pick(&best, v) {
                        best = v.clone();
                    }
                }
                if all_int {
                    best
                } else {
                    best.coerce(SemanticType::Float).unwrap_or(Value::Null)
                }
            }
            B::Concat => Value::Text(vals.iter().map(Value::render).collect()),
            B::Upper => Value::Text(text(0).to_uppercase()),
            B::Lower => Value::Text(text(0).to_lowercase()),
            B::Trim => Value::Text(text(0).trim().to_string()),
            B::Substring => {
                let chars: Vec<char> = text(0).chars().collect();
                let start = (int(1).max(1) - 1).min(chars.len() as i64) as usize;
                let len = int(2).max(0).min((chars.len() - start) as i64) as usize;
                Value::Text(chars[start..start + len].iter().collect())
            }
            B::SplitPart => {
                let (s, d, k) = (text(0), text(1), int(2));
                if d.is_empty() || k < 1 {
                    Value::Null
                } else {
                    s.split(d).nth((k - 1) as usize).map_or(Value::Null, |p| Value::Text(p.to_string()))
                }
            }
            B::TextLength => Value::Int(text(0).chars().count() as i64),
            B::ToText => Value::Text(vals[0].render()),
            B::Year | B::Month | B::Day | B::Weekday => {
                let Some(d) = date(0) else { return Err(EvalError::Internal("date expected".into())) };
                Value::Int(match f {
                    B::Year => d.year() as i64,
                    B::Month => d.month() as i64,
                    B::Day => d.day() as i64,
                    _ => d.weekday().number_from_monday() as i64,
                })
            }
            B::ToNumber => match &vals[0] {
                Value::Bool(b) => Value::Float(if *b { 1.0 } else { 0.0 }),
                Value::Text(s) => parse_as(s.trim(), SemanticType::Float).unwrap_or(Value::Null),
                v => v.coerce(SemanticType::Float).unwrap_or(Value::Null),
            },
            B::ToDate => match &vals[0] {
                Value::Text(s) => parse_as(s.trim(), SemanticType::Date)
                    .or_else(|| match parse_as(s.trim(), SemanticType::Datetime) {
                        Some(Value::DateTime(dt)) => Some(Value::Date(dt.date())),
                        _ => None,
                    })
                    .unwrap_or(Value::Null),
                v => date(0).map_or_else(|| v.clone(), Value::Date),
            },
            _ => unreachable!("list builtins handled above"),
        };
        Ok(RVal::Scalar(v))
    }

    fn list_call(&mut self, f: Builtin, args: Vec<RVal<'a>>) -> Result<RVal<'a>, EvalError> {
        use Builtin as B;
        let RVal::List(list) = args[0] else {
            return Err(EvalError::Internal(format!("`{}` needs a list", f.name())));
        };
        let arg = |i: usize| match &args[i] {
            RVal::Scalar(v) => v.clone(),
            RVal::List(_) => Value::Null,
        };
        self.tick(list.len())?;
        let present = || list.iter().filter(|v| !v.is_null());
        let v = match f {
            B::ListLen => Value::Int(list.len() as i64),
            B::ListCountNonnull => Value::Int(present().count() as i64),
            B::ListGet => match arg(1) {
                Value::Int(i) if i >= 0 && (i as usize) < list.len() => list[i as usize].clone(),
                _ => Value::Null,
            },
            B::Slice => {
                let (Value::Int(a), Value::Int(b)) = (arg(1), arg(2)) else {
                    return Ok(null());
                };
                let len = list.len() as i64;
                let (ca, cb) = (a.clamp(0, len), b.clamp(0, len));
                if ca != a || cb != b {
                    self.truncated = true;
                }
                return Ok(RVal::List(if ca < cb { &list[ca as usize..cb as usize] } else { &list[0..0] }));
            }
            B::ListSum => {
                if present().all(|v| matches!(v, Value::Int(_))) {
                    present()
                        .try_fold(0i64, |acc, v| match v {
                            Value::Int(i) => acc.checked_add(*i),
                            _ => None,
                        })
                        .map_or(Value::Null, Value::Int)
                } else {
                    finite(present().filter_map(Value::as_f64).sum())
                }
            }
            B::ListAvg => {
                let xs: Vec<f64> = present().filter_map(Value::as_f64).collect();
                if xs.is_empty() {
                    Value::Null
                } else {
                    finite(xs.iter().sum::<f64>() / xs.len() as f64)
                }
            }
            B::ListMin | B::ListMax => {
                let want = if f == B::ListMin { Ordering::Less } else { Ordering::Greater };
                let mut best: Option<&Value> = None;
                for v in present() {
                    if best.is_none_or(|b| compare_values(v, b) == Some(want)) {
                        best = Some(v);
                    }
                }
                best.cloned().unwrap_or(Value::Null)
            }
            B::PercentileRank => {
                let v = arg(1);
                let n = present().count();
                if v.is_null() || n == 0 {
                    Value::Null
                } else {
                    let le = present().filter(|x| compare_values(x, &v).is_some_and(|o| o != Ordering::Greater)).count();
                    Value::Float(le as f64 / n as f64)
                }
            }
            _ => unreachable!("scalar builtins handled by call"),
        };
        Ok(RVal::Scalar(v))
    }
}

fn arith(op: BinOp, l: &Value, r: &Value) -> Value {
    if let (Value::Int(x), Value::Int(y)) = (l, r) {
        let res = match op {
            BinOp::Add => x.checked_add(*y),
            BinOp::Sub => x.checked_sub(*y),
            BinOp::Mul => x.checked_mul(*y),
            _ => x.checked_rem_euclid(*y),
        };
        return res.map_or(Value::Null, Value::Int);
    }
    let (Some(x), Some(y)) = (l.as_f64(), r.as_f64()) else {
        return Value::Null;
    };
    finite(match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        _ if y == 0.0 => return Value::Null,
        _ => x.rem_euclid(y),
    })
}
