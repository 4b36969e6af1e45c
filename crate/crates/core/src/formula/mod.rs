//! The sandboxed formula language derived concepts are written in.
//!
//! A formula is a header naming its parameters followed by one expression:
//!
//! ```text
//! fn(seattleTemp, atlantaTemp) = seattleTemp - atlantaTemp
//! fn(t, index, tList) = list_avg(slice(tList, index - 3, index + 4))
//! ```
//!
//! Declaring `index` makes the formula analytical: after `index` come one list
//! parameter per scalar parameter, holding the whole column.

mod check;
mod eval;
mod syntax;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{Column, Table};
use crate::value::{SemanticType, Value};

pub use check::{Builtin, Expr, Ty, BUILTINS};
pub use syntax::{BinOp, UnOp};

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind")]
pub enum FormulaError {
    #[error("parse error at line {line}, column {column}: expected {}, found {found}", .expected.join(" or "))]
    Parse { offset: usize, line: usize, column: usize, expected: Vec<String>, found: String },
    #[error("unknown identifier `{name}`")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("type error: {message}")]
    Type { message: String, offset: usize },
    #[error("arity error: {message}")]
    Arity { message: String, offset: usize },
}

impl FormulaError {
    pub(crate) fn parse(src: &str, offset: usize, expected: &[&str], found: &str) -> FormulaError {
        let before = &src[..offset.min(src.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        FormulaError::Parse {
            offset,
            line,
            column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: found.to_string(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            FormulaError::Parse { .. } => "ParseError",
            FormulaError::UnknownIdentifier { .. } => "UnknownIdentifier",
            FormulaError::Type { .. } => "TypeError",
            FormulaError::Arity { .. } => "ArityError",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("formula takes {expected} arguments, got {found}")]
    Arguments { expected: usize, found: usize },
    #[error("column lists must be supplied exactly for analytical formulas")]
    Lists,
    #[error("evaluation exceeded its step budget of {0}")]
    StepBudget(usize),
    #[error("internal evaluation error: {0}")]
    Internal(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeriveError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` already exists")]
    DuplicateOutputColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("row {row}: {error}")]
    Eval { row: usize, error: EvalError },
}

#[derive(Clone, Debug)]
pub struct Formula {
    source: String,
    params: Vec<(String, SemanticType)>,
    lists: Option<Vec<String>>,
    body: Expr,
    result: Ty,
}

impl PartialEq for Formula {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source && self.params == other.params
    }
}

/// Parses and type-checks `source` with one type per declared parameter.
pub fn parse_formula(source: &str, param_types: &[SemanticType]) -> Result<Formula, FormulaError> {
    let (header, body) = syntax::parse(source)?;
    if header.params.len() != param_types.len() {
        return Err(FormulaError::Arity {
            message: format!("formula declares {} parameters for {} sources", header.params.len(), param_types.len()),
            offset: header.params.first().map_or(0, |p| p.1),
        });
    }
    let params: Vec<(String, SemanticType)> =
        header.params.iter().map(|(n, _)| n.clone()).zip(param_types.iter().copied()).collect();
    let lists: Option<Vec<String>> = header.analytical.map(|l| l.into_iter().map(|(n, _)| n).collect());
    let mut scope = check::Scope { params: &params, lists: lists.as_deref(), locals: Vec::new(), max_locals: 0 };
    let (body_expr, result) = scope.check(&body)?;
    if let Ty::List(_) = result {
        return Err(FormulaError::Type { message: format!("formula must produce a single value, not a {result}"), offset: body.pos });
    }
    Ok(Formula { source: source.to_string(), params, lists, body: body_expr, result })
}

impl Formula {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn params(&self) -> &[(String, SemanticType)] {
        &self.params
    }

    pub fn param_types(&self) -> Vec<SemanticType> {
        self.params.iter().map(|p| p.1).collect()
    }

    pub fn is_analytical(&self) -> bool {
        self.lists.is_some()
    }

    pub fn body(&self) -> &Expr {
        &self.body
    }

    /// Column type of the values the formula produces. A formula that can only
    /// yield `null` is typed as text.
    pub fn result_type(&self) -> SemanticType {
        match self.result {
            Ty::Scalar(s) => s,
            _ => SemanticType::Text,
        }
    }

    /// Evaluates one row. For analytical formulas a `slice` clamped at either
    /// end of its list makes the row Null.
    pub fn eval_row(&self, args: &[Value], index: usize, lists: &[&[Value]]) -> Result<Value, EvalError> {
        self.eval_row_with(args, index, lists, true)
    }

    /// Like [`Formula::eval_row`] but keeps the value of truncated windows.
    pub fn eval_row_lenient(&self, args: &[Value], index: usize, lists: &[&[Value]]) -> Result<Value, EvalError> {
        self.eval_row_with(args, index, lists, false)
    }

    fn eval_row_with(&self, args: &[Value], index: usize, lists: &[&[Value]], strict: bool) -> Result<Value, EvalError> {
        if args.len() != self.params.len() {
            return Err(EvalError::Arguments { expected: self.params.len(), found: args.len() });
        }
        let want_lists = if self.is_analytical() { self.params.len() } else { 0 };
        if lists.len() != want_lists {
            return Err(EvalError::Lists);
        }
        let args: Vec<Value> = args
            .iter()
            .zip(&self.params)
            .map(|(v, (_, ty))| v.coerce(*ty).unwrap_or(Value::Null))
            .collect();
        let longest = lists.iter().map(|l| l.len()).max().unwrap_or(0);
        let mut ctx = eval::Ctx {
            args: &args,
            index: index as i64,
            lists,
            locals: Vec::new(),
            truncated: false,
            steps: 0,
            budget: self.body.node_count() * (longest + 1) + 16,
        };
        let out = match ctx.eval(&self.body)? {
            eval::RVal::Scalar(v) => v,
            eval::RVal::List(_) => return Err(EvalError::Internal("formula produced a list".into())),
        };
        if strict && ctx.truncated {
            return Ok(Value::Null);
        }
        Ok(out.coerce(self.result_type()).unwrap_or(Value::Null))
    }
}

#[derive(Serialize, Deserialize, JsonSchema)]
struct FormulaRepr {
    source: String,
    param_types: Vec<SemanticType>,
}

impl Serialize for Formula {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FormulaRepr { source: self.source.clone(), param_types: self.param_types() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = FormulaRepr::deserialize(d)?;
        parse_formula(&r.source, &r.param_types).map_err(serde::de::Error::custom)
    }
}

impl JsonSchema for Formula {
    fn schema_name() -> std::borrow::Cow<'static, str> {
        "Formula".into()
    }

    fn json_schema(g: &mut schemars::SchemaGenerator) -> schemars::Schema {
        FormulaRepr::json_schema(g)
    }
}

fn accepts(param: SemanticType, column: SemanticType) -> bool {
    param == column
        || (param == SemanticType::Float && column == SemanticType::Integer)
        || (param == SemanticType::Datetime && column == SemanticType::Date)
        || param == SemanticType::Text
}

/// Extends `t` with `out_name`, computed by `f` over `source_columns` row by row.
pub fn apply_derivation(t: &Table, f: &Formula, source_columns: &[String], out_name: &str) -> Result<Table, DeriveError> {
    let idx: Vec<usize> = source_columns
        .iter()
        .map(|c| t.column_index(c).ok_or_else(|| DeriveError::UnknownColumn(c.clone())))
        .collect::<Result<_, _>>()?;
    if t.column_index(out_name).is_some() {
        return Err(DeriveError::DuplicateOutputColumn(out_name.to_string()));
    }
    if idx.len() != f.params.len() {
        return Err(DeriveError::TypeMismatch(format!(
            "formula takes {} parameters, {} columns given",
            f.params.len(),
            idx.len()
        )));
    }
    for (&i, (name, ty)) in idx.iter().zip(&f.params) {
        let col = &t.columns()[i];
        if !accepts(*ty, col.ty) {
            return Err(DeriveError::TypeMismatch(format!(
                "parameter `{name}` is {ty} but column `{}` is {}",
                col.name, col.ty
            )));
        }
    }
    let columns: Vec<Vec<Value>> = idx
        .iter()
        .zip(&f.params)
        .map(|(&i, (_, ty))| t.column_values(i).map(|v| v.coerce(*ty).unwrap_or(Value::Null)).collect())
        .collect();
    let lists: Vec<&[Value]> = if f.is_analytical() { columns.iter().map(Vec::as_slice).collect() } else { Vec::new() };
    let mut out = Vec::with_capacity(t.num_rows());
    let mut args = Vec::with_capacity(idx.len());
    for row in 0..t.num_rows() {
        args.clear();
        args.extend(columns.iter().map(|c| c[row].clone()));
        out.push(f.eval_row(&args, row, &lists).map_err(|error| DeriveError::Eval { row, error })?);
    }
    t.with_column(Column::new(out_name, f.result_type()), out)
        .map_err(|e| DeriveError::TypeMismatch(e.to_string()))
}
