//! The reshaping language: `pivot_longer`, `pivot_wider`, `separate` and
//! `separate_rows` composed over the input table, plus a reference evaluator.

mod schema;
mod text;

use rustc_hash::FxHashMap;
use std::fmt;

use thiserror::Error;

use crate::table::{Column, Table, TableError};
use crate::value::{CanonicalKey, SemanticType, Value};

pub use schema::{output_schema, AbstractColumn, AbstractTable, SchemaColumn};
pub use text::ParseProgramError;

/// Delimiters the engine considers for `separate` and `separate_rows`.
pub const DELIMITERS: [&str; 8] = [",", ";", "|", "-", "_", "/", ":", " "];

/// Column name a `pivot_wider` generates for a cell value.
pub fn wider_column_name(v: &Value) -> String {
    match v {
        Value::Null => "NA".to_string(),
        other => other.render().trim().to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Program {
    Input,
    PivotLonger {
        child: Box<Program>,
        columns: Vec<String>,
        key_name: String,
        value_name: String,
    },
    PivotWider {
        child: Box<Program>,
        name_col: String,
        value_col: String,
    },
    Separate {
        child: Box<Program>,
        col: String,
        left_name: String,
        right_name: String,
        delimiter: String,
    },
    SeparateRows {
        child: Box<Program>,
        col: String,
        delimiter: String,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReshapeError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("output column `{0}` would be duplicated")]
    DuplicateOutputColumn(String),
    #[error("pivot_wider group has conflicting values for `{0}`")]
    NonScalarGroup(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl From<TableError> for ReshapeError {
    fn from(e: TableError) -> Self {
        match e {
            TableError::DuplicateColumn(c) => ReshapeError::DuplicateOutputColumn(c),
            other => ReshapeError::InvalidParameter(other.to_string()),
        }
    }
}

impl Program {
    pub fn child(&self) -> Option<&Program> {
        match self {
            Program::Input => None,
            Program::PivotLonger { child, .. }
            | Program::PivotWider { child, .. }
            | Program::Separate { child, .. }
            | Program::SeparateRows { child, .. } => Some(child),
        }
    }

    /// Number of operators, not counting the input reference.
    pub fn size(&self) -> usize {
        match self.child() {
            None => 0,
            Some(c) => 1 + c.size(),
        }
    }

    pub fn op_name(&self) -> &'static str {
        match self {
            Program::Input => "input",
            Program::PivotLonger { .. } => "pivot_longer",
            Program::PivotWider { .. } => "pivot_wider",
            Program::Separate { .. } => "separate",
            Program::SeparateRows { .. } => "separate_rows",
        }
    }

    /// Rank used to order candidates of equal size.
    pub fn op_rank(&self) -> u8 {
        match self {
            Program::Input => 0,
            Program::PivotWider { .. } => 1,
            Program::PivotLonger { .. } => 2,
            Program::Separate { .. } => 3,
            Program::SeparateRows { .. } => 4,
        }
    }

    /// Operators from the one applied first to the outermost.
    pub fn ops_inner_first(&self) -> Vec<&Program> {
        let mut ops = Vec::new();
        let mut cur = self;
        while let Some(child) = cur.child() {
            ops.push(cur);
            cur = child;
        }
        ops.reverse();
        ops
    }

    pub fn eval(&self, input: &Table) -> Result<Table, ReshapeError> {
        match self {
            Program::Input => Ok(input.clone()),
            Program::PivotLonger {
                child,
                columns,
                key_name,
                value_name,
            } => pivot_longer(&child.eval(input)?, columns, key_name, value_name),
            Program::PivotWider {
                child,
                name_col,
                value_col,
            } => pivot_wider(&child.eval(input)?, name_col, value_col),
            Program::Separate {
                child,
                col,
                left_name,
                right_name,
                delimiter,
            } => separate(&child.eval(input)?, col, left_name, right_name, delimiter),
            Program::SeparateRows {
                child,
                col,
                delimiter,
            } => separate_rows(&child.eval(input)?, col, delimiter),
        }
    }

    /// Applies only the outermost operator to an already evaluated child result.
    pub fn eval_step(&self, child_output: &Table) -> Result<Table, ReshapeError> {
        match self {
            Program::Input => Ok(child_output.clone()),
            Program::PivotLonger {
                columns,
                key_name,
                value_name,
                ..
            } => pivot_longer(child_output, columns, key_name, value_name),
            Program::PivotWider {
                name_col,
                value_col,
                ..
            } => pivot_wider(child_output, name_col, value_col),
            Program::Separate {
                col,
                left_name,
                right_name,
                delimiter,
                ..
            } => separate(child_output, col, left_name, right_name, delimiter),
            Program::SeparateRows { col, delimiter, .. } => {
                separate_rows(child_output, col, delimiter)
            }
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        text::write_program(self, f)
    }
}

impl std::str::FromStr for Program {
    type Err = ParseProgramError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        text::parse_program(s)
    }
}

impl serde::Serialize for Program {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Program {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn index_of(t: &Table, name: &str) -> Result<usize, ReshapeError> {
    t.column_index(name)
        .ok_or_else(|| ReshapeError::UnknownColumn(name.to_string()))
}

fn non_empty_token(s: &str) -> Value {
    if s.is_empty() {
        Value::Null
    } else {
        Value::Text(s.to_string())
    }
}

pub(crate) fn pivot_longer(
    t: &Table,
    columns: &[String],
    key_name: &str,
    value_name: &str,
) -> Result<Table, ReshapeError> {
    if columns.is_empty() {
        return Err(ReshapeError::InvalidParameter(
            "pivot_longer needs at least one column".into(),
        ));
    }
    let mut listed = Vec::with_capacity(columns.len());
    for c in columns {
        let i = index_of(t, c)?;
        if listed.contains(&i) {
            return Err(ReshapeError::InvalidParameter(format!(
                "column `{c}` listed twice"
            )));
        }
        listed.push(i);
    }
    if listed.len() >= t.num_columns() {
        return Err(ReshapeError::InvalidParameter(
            "pivot_longer columns must be a strict subset of the table".into(),
        ));
    }
    if key_name == value_name {
        return Err(ReshapeError::DuplicateOutputColumn(key_name.to_string()));
    }
    let retained: Vec<usize> = (0..t.num_columns()).filter(|i| !listed.contains(i)).collect();
    let mut out_cols: Vec<Column> = retained.iter().map(|&i| t.columns()[i].clone()).collect();
    for name in [key_name, value_name] {
        if out_cols.iter().any(|c| c.name == name) {
            return Err(ReshapeError::DuplicateOutputColumn(name.to_string()));
        }
    }
    let value_ty = listed
        .iter()
        .map(|&i| t.columns()[i].ty)
        .reduce(SemanticType::join)
        .expect("non-empty");
    out_cols.push(Column::new(key_name, SemanticType::Text));
    out_cols.push(Column::new(value_name, value_ty));

    let mut rows = Vec::with_capacity(t.num_rows() * listed.len());
    for row in t.rows() {
        for &i in &listed {
            let mut out: Vec<Value> = retained.iter().map(|&r| row[r].clone()).collect();
            out.push(Value::Text(t.columns()[i].name.clone()));
            out.push(row[i].clone());
            rows.push(out);
        }
    }
    Ok(Table::new(t.name(), out_cols, rows)?)
}

pub(crate) fn pivot_wider(t: &Table, name_col: &str, value_col: &str) -> Result<Table, ReshapeError> {
    let ni = index_of(t, name_col)?;
    let vi = index_of(t, value_col)?;
    if ni == vi {
        return Err(ReshapeError::InvalidParameter(
            "pivot_wider name and value columns must differ".into(),
        ));
    }
    let key_cols: Vec<usize> = (0..t.num_columns()).filter(|&i| i != ni && i != vi).collect();

    let mut new_names: Vec<String> = Vec::new();
    let mut name_index: FxHashMap<CanonicalKey, usize> = FxHashMap::default();
    let mut groups: Vec<(Vec<Value>, Vec<Option<Value>>)> = Vec::new();
    let mut group_index: FxHashMap<Vec<CanonicalKey>, usize> = FxHashMap::default();

    for row in t.rows() {
        let name_key = row[ni].canonical_key();
        let slot = *name_index.entry(name_key).or_insert_with(|| {
            new_names.push(wider_column_name(&row[ni]));
            new_names.len() - 1
        });
        let gkey: Vec<CanonicalKey> = key_cols.iter().map(|&i| row[i].canonical_key()).collect();
        let g = *group_index.entry(gkey).or_insert_with(|| {
            groups.push((key_cols.iter().map(|&i| row[i].clone()).collect(), Vec::new()));
            groups.len() - 1
        });
        let cells = &mut groups[g].1;
        if cells.len() <= slot {
            cells.resize(slot + 1, None);
        }
        match &cells[slot] {
            Some(existing) if *existing != row[vi] => {
                return Err(ReshapeError::NonScalarGroup(new_names[slot].clone()));
            }
            Some(_) => {}
            None => cells[slot] = Some(row[vi].clone()),
        }
    }

    let mut out_cols: Vec<Column> = key_cols.iter().map(|&i| t.columns()[i].clone()).collect();
    let value_ty = t.columns()[vi].ty;
    for name in &new_names {
        if out_cols.iter().any(|c| &c.name == name) {
            return Err(ReshapeError::DuplicateOutputColumn(name.clone()));
        }
        out_cols.push(Column::new(name.clone(), value_ty));
    }
    let width = new_names.len();
    let rows = groups
        .into_iter()
        .map(|(mut key, cells)| {
            key.extend((0..width).map(|s| cells.get(s).cloned().flatten().unwrap_or(Value::Null)));
            key
        })
        .collect();
    Ok(Table::new(t.name(), out_cols, rows)?)
}

pub(crate) fn separate(
    t: &Table,
    col: &str,
    left_name: &str,
    right_name: &str,
    delimiter: &str,
) -> Result<Table, ReshapeError> {
    let ci = index_of(t, col)?;
    if delimiter.is_empty() {
        return Err(ReshapeError::InvalidParameter("empty delimiter".into()));
    }
    if left_name == right_name {
        return Err(ReshapeError::DuplicateOutputColumn(left_name.to_string()));
    }
    for name in [left_name, right_name] {
        if t
            .columns()
            .iter()
            .enumerate()
            .any(|(i, c)| i != ci && c.name == name)
        {
            return Err(ReshapeError::DuplicateOutputColumn(name.to_string()));
        }
    }
    let mut cols = t.columns().to_vec();
    cols.splice(
        ci..=ci,
        [
            Column::new(left_name, SemanticType::Text),
            Column::new(right_name, SemanticType::Text),
        ],
    );
    let rows = t
        .rows()
        .iter()
        .map(|row| {
            let (l, r) = match &row[ci] {
                Value::Null => (Value::Null, Value::Null),
                v => {
                    let s = v.render();
                    match s.split_once(delimiter) {
                        Some((l, r)) => (non_empty_token(l), non_empty_token(r)),
                        None => (non_empty_token(&s), Value::Null),
                    }
                }
            };
            let mut out = row.clone();
            out.splice(ci..=ci, [l, r]);
            out
        })
        .collect();
    Ok(Table::new(t.name(), cols, rows)?)
}

pub(crate) fn separate_rows(t: &Table, col: &str, delimiter: &str) -> Result<Table, ReshapeError> {
    let ci = index_of(t, col)?;
    if delimiter.is_empty() {
        return Err(ReshapeError::InvalidParameter("empty delimiter".into()));
    }
    let mut cols = t.columns().to_vec();
    cols[ci].ty = SemanticType::Text;
    let mut rows = Vec::with_capacity(t.num_rows());
    for row in t.rows() {
        match &row[ci] {
            Value::Null => rows.push(row.clone()),
            v => {
                for token in v.render().split(delimiter) {
                    let mut out = row.clone();
                    out[ci] = non_empty_token(token.trim());
                    rows.push(out);
                }
            }
        }
    }
    Ok(Table::new(t.name(), cols, rows)?)
}

/// Tokens a cell's text can be split into by any sequence of `separate` /
/// `separate_rows` steps: every span whose ends sit at the string ends or at
/// delimiter occurrences.
pub fn delimited_pieces(s: &str) -> Vec<&str> {
    let mut starts = vec![0];
    let mut ends = Vec::new();
    for (i, ch) in s.char_indices() {
        let mut buf = [0u8; 4];
        if DELIMITERS.contains(&&*ch.encode_utf8(&mut buf)) {
            ends.push(i);
            starts.push(i + ch.len_utf8());
        }
    }
    ends.push(s.len());
    let mut pieces = Vec::new();
    for &a in &starts {
        for &b in &ends {
            if a <= b {
                pieces.push(&s[a..b]);
            }
        }
    }
    pieces
}
