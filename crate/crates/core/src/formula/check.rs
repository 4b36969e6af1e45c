//! Name resolution and type checking against the builtin catalog.

use super::syntax::{Ast, BinOp, Node, UnOp};
use super::FormulaError;
use crate::value::{SemanticType as S, Value};

/// Static type of an expression. `Null` is the type of the `null` literal,
/// compatible with every scalar type.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ty {
    Null,
    Scalar(S),
    List(S),
}

impl std::fmt::Display for Ty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ty::Null => f.write_str("null"),
            Ty::Scalar(s) => write!(f, "{s}"),
            Ty::List(s) => write!(f, "list of {s}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Abs,
    Round,
    Floor,
    Ceil,
    Sqrt,
    Pow,
    Min,
    Max,
    Concat,
    Upper,
    Lower,
    Trim,
    Substring,
    SplitPart,
    TextLength,
    ToText,
    Year,
    Month,
    Day,
    Weekday,
    ListLen,
    ListGet,
    Slice,
    ListSum,
    ListAvg,
    ListMin,
    ListMax,
    ListCountNonnull,
    PercentileRank,
    ToNumber,
    ToDate,
}

pub const BUILTINS: [(&str, Builtin); 31] = [
    ("abs", Builtin::Abs),
    ("round", Builtin::Round),
    ("floor", Builtin::Floor),
    ("ceil", Builtin::Ceil),
    ("sqrt", Builtin::Sqrt),
    ("pow", Builtin::Pow),
    ("min", Builtin::Min),
    ("max", Builtin::Max),
    ("concat", Builtin::Concat),
    ("upper", Builtin::Upper),
    ("lower", Builtin::Lower),
    ("trim", Builtin::Trim),
    ("substring", Builtin::Substring),
    ("split_part", Builtin::SplitPart),
    ("text_length", Builtin::TextLength),
    ("to_text", Builtin::ToText),
    ("year", Builtin::Year),
    ("month", Builtin::Month),
    ("day", Builtin::Day),
    ("weekday", Builtin::Weekday),
    ("list_len", Builtin::ListLen),
    ("list_get", Builtin::ListGet),
    ("slice", Builtin::Slice),
    ("list_sum", Builtin::ListSum),
    ("list_avg", Builtin::ListAvg),
    ("list_min", Builtin::ListMin),
    ("list_max", Builtin::ListMax),
    ("list_count_nonnull", Builtin::ListCountNonnull),
    ("percentile_rank", Builtin::PercentileRank),
    ("to_number", Builtin::ToNumber),
    ("to_date", Builtin::ToDate),
];

impl Builtin {
    pub fn name(self) -> &'static str {
        BUILTINS.iter().find(|(_, b)| *b == self).map(|(n, _)| *n).expect("catalog is complete")
    }

    /// List builtins skip Null elements instead of propagating them.
    pub fn is_list_fn(self) -> bool {
        matches!(
            self,
            Builtin::ListLen
                | Builtin::ListGet
                | Builtin::Slice
                | Builtin::ListSum
                | Builtin::ListAvg
                | Builtin::ListMin
                | Builtin::ListMax
                | Builtin::ListCountNonnull
                | Builtin::PercentileRank
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Lit(Value),
    Param(usize),
    Index,
    List(usize),
    Local(usize),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
    Let(usize, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn node_count(&self) -> usize {
        1 + match self {
            Expr::Lit(_) | Expr::Param(_) | Expr::Index | Expr::List(_) | Expr::Local(_) => 0,
            Expr::Unary(_, e) => e.node_count(),
            Expr::Binary(_, a, b) | Expr::Let(_, a, b) => a.node_count() + b.node_count(),
            Expr::If(a, b, c) => a.node_count() + b.node_count() + c.node_count(),
            Expr::Call(_, args) => args.iter().map(Expr::node_count).sum(),
        }
    }
}

pub(crate) struct Scope<'a> {
    pub params: &'a [(String, S)],
    pub lists: Option<&'a [String]>,
    pub locals: Vec<(String, Ty)>,
    pub max_locals: usize,
}

fn type_err<T>(offset: usize, message: String) -> Result<T, FormulaError> {
    Err(FormulaError::Type { message, offset })
}

fn is_num(t: Ty) -> bool {
    matches!(t, Ty::Null) || matches!(t, Ty::Scalar(s) if s.is_numeric())
}

fn is_temporal(t: Ty) -> bool {
    matches!(t, Ty::Null) || matches!(t, Ty::Scalar(s) if s.is_temporal())
}

fn is(t: Ty, s: S) -> bool {
    t == Ty::Null || t == Ty::Scalar(s)
}

/// Common scalar type of two branches or operands, if any.
pub(crate) fn unify(a: Ty, b: Ty) -> Option<Ty> {
    match (a, b) {
        (Ty::Null, x) | (x, Ty::Null) if !matches!(x, Ty::List(_)) => Some(x),
        (Ty::Scalar(x), Ty::Scalar(y)) if x == y => Some(a),
        (Ty::Scalar(x), Ty::Scalar(y)) if x.is_numeric() && y.is_numeric() => Some(Ty::Scalar(S::Float)),
        (Ty::Scalar(x), Ty::Scalar(y)) if x.is_temporal() && y.is_temporal() => Some(Ty::Scalar(S::Datetime)),
        _ => None,
    }
}

fn numeric_result(a: Ty, b: Ty) -> Ty {
    match (a, b) {
        (Ty::Scalar(S::Integer), Ty::Scalar(S::Integer)) => Ty::Scalar(S::Integer),
        (Ty::Null, Ty::Null) => Ty::Null,
        (Ty::Null, Ty::Scalar(S::Integer)) | (Ty::Scalar(S::Integer), Ty::Null) => Ty::Scalar(S::Integer),
        _ => Ty::Scalar(S::Float),
    }
}

impl Scope<'_> {
    fn resolve(&self, name: &str, pos: usize) -> Result<(Expr, Ty), FormulaError> {
        if let Some(i) = self.locals.iter().rposition(|(n, _)| n == name) {
            return Ok((Expr::Local(i), self.locals[i].1));
        }
        if let Some(i) = self.params.iter().position(|(n, _)| n == name) {
            return Ok((Expr::Param(i), Ty::Scalar(self.params[i].1)));
        }
        if let Some(lists) = self.lists {
            if name == "index" {
                return Ok((Expr::Index, Ty::Scalar(S::Integer)));
            }
            if let Some(i) = lists.iter().position(|n| n == name) {
                return Ok((Expr::List(i), Ty::List(self.params[i].1)));
            }
        }
        Err(FormulaError::UnknownIdentifier { name: name.to_string(), offset: pos })
    }

    fn scalar(&mut self, n: &Node) -> Result<(Expr, Ty), FormulaError> {
        let (e, t) = self.check(n)?;
        if let Ty::List(_) = t {
            return type_err(n.pos, format!("expected a single value, found {t}"));
        }
        Ok((e, t))
    }

    pub(crate) fn check(&mut self, n: &Node) -> Result<(Expr, Ty), FormulaError> {
        match &n.ast {
            Ast::Lit(v) => Ok((Expr::Lit(v.clone()), v.semantic_type().map_or(Ty::Null, Ty::Scalar))),
            Ast::Ident(name) => self.resolve(name, n.pos),
            Ast::Unary(op, inner) => {
                let (e, t) = self.scalar(inner)?;
                let ty = match op {
                    UnOp::Neg if is_num(t) => t,
                    UnOp::Not if is(t, S::Boolean) => Ty::Scalar(S::Boolean),
                    UnOp::Neg => return type_err(n.pos, format!("cannot negate {t}")),
                    UnOp::Not => return type_err(n.pos, format!("`not` needs boolean, found {t}")),
                };
                Ok((Expr::Unary(*op, Box::new(e)), ty))
            }
            Ast::Binary(op, a, b) => {
                let (ea, ta) = self.scalar(a)?;
                let (eb, tb) = self.scalar(b)?;
                let ty = match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Rem => {
                        if !(is_num(ta) && is_num(tb)) {
                            return type_err(n.pos, format!("`{}` needs numbers, found {ta} and {tb}", op.symbol()));
                        }
                        numeric_result(ta, tb)
                    }
                    BinOp::Div => {
                        if !(is_num(ta) && is_num(tb)) {
                            return type_err(n.pos, format!("`/` needs numbers, found {ta} and {tb}"));
                        }
                        Ty::Scalar(S::Float)
                    }
                    BinOp::And | BinOp::Or => {
                        if !(is(ta, S::Boolean) && is(tb, S::Boolean)) {
                            return type_err(n.pos, format!("`{}` needs booleans, found {ta} and {tb}", op.symbol()));
                        }
                        Ty::Scalar(S::Boolean)
                    }
                    _ => {
                        if unify(ta, tb).is_none() {
                            return type_err(n.pos, format!("cannot compare {ta} with {tb}"));
                        }
                        Ty::Scalar(S::Boolean)
                    }
                };
                Ok((Expr::Binary(*op, Box::new(ea), Box::new(eb)), ty))
            }
            Ast::If(c, t, e) => {
                let (ec, tc) = self.scalar(c)?;
                if !is(tc, S::Boolean) {
                    return type_err(c.pos, format!("condition must be boolean, found {tc}"));
                }
                let (et, tt) = self.scalar(t)?;
                let (ee, te) = self.scalar(e)?;
                let Some(ty) = unify(tt, te) else {
                    return type_err(n.pos, format!("branches have incompatible types {tt} and {te}"));
                };
                Ok((Expr::If(Box::new(ec), Box::new(et), Box::new(ee)), ty))
            }
            Ast::Let(name, v, body) => {
                let (ev, tv) = self.check(v)?;
                let slot = self.locals.len();
                self.locals.push((name.clone(), tv));
                self.max_locals = self.max_locals.max(self.locals.len());
                let res = self.check(body);
                self.locals.pop();
                let (eb, tb) = res?;
                Ok((Expr::Let(slot, Box::new(ev), Box::new(eb)), tb))
            }
            Ast::Call(name, args) => {
                let Some(&(_, f)) = BUILTINS.iter().find(|(n, _)| n == name) else {
                    return Err(FormulaError::UnknownIdentifier { name: name.clone(), offset: n.pos });
                };
                let mut exprs = Vec::with_capacity(args.len());
                let mut tys = Vec::with_capacity(args.len());
                for a in args {
                    let (e, t) = self.check(a)?;
                    exprs.push(e);
                    tys.push(t);
                }
                let ty = call_type(f, &tys, n.pos)?;
                Ok((Expr::Call(f, exprs), ty))
            }
        }
    }
}

fn arity(f: Builtin, tys: &[Ty], allowed: &[usize], pos: usize) -> Result<(), FormulaError> {
    if allowed.contains(&tys.len()) {
        Ok(())
    } else {
        Err(FormulaError::Arity {
            message: format!("`{}` takes {:?} arguments, found {}", f.name(), allowed, tys.len()),
            offset: pos,
        })
    }
}

fn call_type(f: Builtin, tys: &[Ty], pos: usize) -> Result<Ty, FormulaError> {
    use Builtin as B;
    let bad = |what: &str| type_err(pos, format!("`{}` expects {what}, found ({})", f.name(), list(tys)));
    let int = Ty::Scalar(S::Integer);
    let float = Ty::Scalar(S::Float);
    let text = Ty::Scalar(S::Text);
    match f {
        B::Abs | B::Floor | B::Ceil => {
            arity(f, tys, &[1], pos)?;
            if !is_num(tys[0]) {
                return bad("a number");
            }
            Ok(tys[0])
        }
        B::Round => {
            arity(f, tys, &[1, 2], pos)?;
            if !is_num(tys[0]) || tys.get(1).is_some_and(|t| !is(*t, S::Integer)) {
                return bad("(number[, integer digits])");
            }
            Ok(tys[0])
        }
        B::Sqrt => {
            arity(f, tys, &[1], pos)?;
            if !is_num(tys[0]) {
                return bad("a number");
            }
            Ok(float)
        }
        B::Pow => {
            arity(f, tys, &[2], pos)?;
            if !tys.iter().all(|t| is_num(*t)) {
                return bad("two numbers");
            }
            Ok(float)
        }
        B::Min | B::Max => {
            if tys.len() < 2 {
                return arity(f, tys, &[2], pos).map(|_| Ty::Null);
            }
            if !tys.iter().all(|t| is_num(*t)) {
                return bad("numbers");
            }
            Ok(tys.iter().copied().reduce(numeric_result).expect("non-empty"))
        }
        B::Concat => {
            if tys.is_empty() {
                return arity(f, tys, &[1], pos).map(|_| Ty::Null);
            }
            if tys.iter().any(|t| matches!(t, Ty::List(_))) {
                return bad("single values");
            }
            Ok(text)
        }
        B::Upper | B::Lower | B::Trim => {
            arity(f, tys, &[1], pos)?;
            if !is(tys[0], S::Text) {
                return bad("text");
            }
            Ok(text)
        }
        B::Substring => {
            arity(f, tys, &[3], pos)?;
            if !(is(tys[0], S::Text) && is(tys[1], S::Integer) && is(tys[2], S::Integer)) {
                return bad("(text, integer start, integer length)");
            }
            Ok(text)
        }
        B::SplitPart => {
            arity(f, tys, &[3], pos)?;
            if !(is(tys[0], S::Text) && is(tys[1], S::Text) && is(tys[2], S::Integer)) {
                return bad("(text, text delimiter, integer part)");
            }
            Ok(text)
        }
        B::TextLength => {
            arity(f, tys, &[1], pos)?;
            if !is(tys[0], S::Text) {
                return bad("text");
            }
            Ok(int)
        }
        B::ToText => {
            arity(f, tys, &[1], pos)?;
            if matches!(tys[0], Ty::List(_)) {
                return bad("a single value");
            }
            Ok(text)
        }
        B::Year | B::Month | B::Day | B::Weekday => {
            arity(f, tys, &[1], pos)?;
            if !is_temporal(tys[0]) {
                return bad("a date");
            }
            Ok(int)
        }
        B::ListLen | B::ListCountNonnull => {
            arity(f, tys, &[1], pos)?;
            match tys[0] {
                Ty::List(_) => Ok(int),
                _ => bad("a list"),
            }
        }
        B::ListGet => {
            arity(f, tys, &[2], pos)?;
            match (tys[0], is(tys[1], S::Integer)) {
                (Ty::List(s), true) => Ok(Ty::Scalar(s)),
                _ => bad("(list, integer)"),
            }
        }
        B::Slice => {
            arity(f, tys, &[3], pos)?;
            match (tys[0], is(tys[1], S::Integer) && is(tys[2], S::Integer)) {
                (Ty::List(s), true) => Ok(Ty::List(s)),
                _ => bad("(list, integer, integer)"),
            }
        }
        B::ListSum => {
            arity(f, tys, &[1], pos)?;
            match tys[0] {
                Ty::List(S::Integer) => Ok(int),
                Ty::List(S::Float) => Ok(float),
                _ => bad("a list of numbers"),
            }
        }
        B::ListAvg => {
            arity(f, tys, &[1], pos)?;
            match tys[0] {
                Ty::List(s) if s.is_numeric() => Ok(float),
                _ => bad("a list of numbers"),
            }
        }
        B::ListMin | B::ListMax => {
            arity(f, tys, &[1], pos)?;
            match tys[0] {
                Ty::List(s) if s != S::Boolean => Ok(Ty::Scalar(s)),
                _ => bad("a list of numbers, text or dates"),
            }
        }
        B::PercentileRank => {
            arity(f, tys, &[2], pos)?;
            match tys[0] {
                Ty::List(s) if unify(Ty::Scalar(s), tys[1]).is_some() => Ok(float),
                _ => bad("(list, value of the list's type)"),
            }
        }
        B::ToNumber => {
            arity(f, tys, &[1], pos)?;
            if !(is_num(tys[0]) || is(tys[0], S::Text) || is(tys[0], S::Boolean)) {
                return bad("text, number or boolean");
            }
            Ok(float)
        }
        B::ToDate => {
            arity(f, tys, &[1], pos)?;
            if !(is(tys[0], S::Text) || is_temporal(tys[0])) {
                return bad("text or a date");
            }
            Ok(Ty::Scalar(S::Date))
        }
    }
}

fn list(tys: &[Ty]) -> String {
    tys.iter().map(Ty::to_string).collect::<Vec<_>>().join(", ")
}
