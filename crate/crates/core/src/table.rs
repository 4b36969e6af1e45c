//! Typed tables and their CSV / JSON-rows encodings.

use std::collections::HashSet;
use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::value::{infer_type, parse_as, SemanticType, Value};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: SemanticType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: SemanticType) -> Self {
        Column { name: name.into(), ty }
    }
}

/// Wire formats accepted by [`Table::parse`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum TableFormat {
    Csv,
    JsonRows,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("table has no columns")]
    EmptyHeader,
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("row {row} has {found} cells, expected {expected}")]
    Arity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("value `{value}` does not fit column `{column}` of type {ty}")]
    CellType {
        column: String,
        ty: SemanticType,
        value: String,
    },
}

/// An immutable, rectangular table whose cells match their column types.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    name: String,
    columns: Vec<Column>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    /// Builds a table, coercing cells into their column types (integers widen to
    /// float, dates to datetime, anything to text).
    pub fn new(
        name: impl Into<String>,
        columns: Vec<Column>,
        rows: Vec<Vec<Value>>,
    ) -> Result<Table, TableError> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(TableError::DuplicateColumn(c.name.clone()));
            }
        }
        let mut coerced = Vec::with_capacity(rows.len());
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != columns.len() {
                return Err(TableError::Arity {
                    row: r,
                    expected: columns.len(),
                    found: row.len(),
                });
            }
            let mut out = Vec::with_capacity(row.len());
            for (cell, col) in row.into_iter().zip(&columns) {
                if cell.semantic_type().is_none_or(|t| t == col.ty) {
                    out.push(cell);
                    continue;
                }
                match cell.coerce(col.ty) {
                    Some(v) => out.push(v),
                    None => {
                        return Err(TableError::CellType {
                            column: col.name.clone(),
                            ty: col.ty,
                            value: cell.render(),
                        })
                    }
                }
            }
            coerced.push(out);
        }
        Ok(Table {
            name: name.into(),
            columns,
            rows: coerced,
        })
    }

    /// Infers each column's type from raw text cells (`None` = missing).
    pub fn from_raw(
        name: impl Into<String>,
        header: Vec<String>,
        raw_rows: Vec<Vec<Option<String>>>,
    ) -> Result<Table, TableError> {
        if header.is_empty() {
            return Err(TableError::EmptyHeader);
        }
        let mut columns = Vec::with_capacity(header.len());
        for (i, name) in header.into_iter().enumerate() {
            let evidence: Vec<&str> = raw_rows
                .iter()
                .filter_map(|r| r.get(i).and_then(|c| c.as_deref()))
                .collect();
            columns.push(Column::new(name, infer_type(&evidence)));
        }
        let rows = raw_rows
            .into_iter()
            .map(|raw| {
                columns
                    .iter()
                    .enumerate()
                    .map(|(i, col)| match raw.get(i).and_then(|c| c.as_deref()) {
                        None => Value::Null,
                        Some(s) => parse_as(s, col.ty).unwrap_or(Value::Null),
                    })
                    .collect()
            })
            .collect();
        Table::new(name, columns, rows)
    }

    pub fn parse(input: &[u8], format: TableFormat, name: &str) -> Result<Table, TableError> {
        match format {
            TableFormat::Csv => parse_csv(input, name),
            TableFormat::JsonRows => parse_json_rows(input, name),
        }
    }

    pub fn serialize(&self, format: TableFormat) -> Vec<u8> {
        match format {
            TableFormat::Csv => self.to_csv(),
            TableFormat::JsonRows => {
                serde_json::to_vec(&self.to_json_rows()).expect("json rows serialize")
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_values(&self, idx: usize) -> impl Iterator<Item = &Value> + '_ {
        self.rows.iter().map(move |r| &r[idx])
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Table {
        self.name = name.into();
        self
    }

    /// Renames one column; fails when the new name is already taken.
    pub fn rename_column(mut self, from: &str, to: &str) -> Result<Table, TableError> {
        if from == to {
            return Ok(self);
        }
        if self.column_index(to).is_some() {
            return Err(TableError::DuplicateColumn(to.to_string()));
        }
        if let Some(i) = self.column_index(from) {
            self.columns[i].name = to.to_string();
        }
        Ok(self)
    }

    /// Appends a column; values are coerced to `column.ty`.
    pub fn with_column(&self, column: Column, values: Vec<Value>) -> Result<Table, TableError> {
        let mut columns = self.columns.clone();
        columns.push(column);
        let rows = self
            .rows
            .iter()
            .zip(values)
            .map(|(r, v)| {
                let mut r = r.clone();
                r.push(v);
                r
            })
            .collect::<Vec<_>>();
        if rows.len() != self.rows.len() {
            return Err(TableError::Arity {
                row: rows.len(),
                expected: self.rows.len(),
                found: rows.len(),
            });
        }
        Table::new(self.name.clone(), columns, rows)
    }

    /// A page of rows, `offset..offset+limit`.
    pub fn page(&self, offset: usize, limit: usize) -> Table {
        let rows = self.rows.iter().skip(offset).take(limit).cloned().collect();
        Table {
            name: self.name.clone(),
            columns: self.columns.clone(),
            rows,
        }
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .expect("in-memory csv write");
        for row in &self.rows {
            w.write_record(row.iter().map(Value::render))
                .expect("in-memory csv write");
        }
        w.into_inner().expect("in-memory csv flush")
    }

    pub fn to_json_rows(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj = self
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(c, v)| (c.name.clone(), v.to_json()))
                        .collect::<serde_json::Map<_, _>>();
                    serde_json::Value::Object(obj)
                })
                .collect(),
        )
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        writeln!(f, "{}", names.join(" | "))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", cells.join(" | "))?;
        }
        Ok(())
    }
}

fn parse_csv(input: &[u8], name: &str) -> Result<Table, TableError> {
    let input = std::str::from_utf8(input)
        .map_err(|e| TableError::MalformedInput(format!("input is not UTF-8: {e}")))?;
    let input = input.strip_prefix('\u{feff}').unwrap_or(input);
    // Every RFC-4180 quote is part of an open/close pair or a doubled escape.
    if input.bytes().filter(|&b| b == b'"').count() % 2 != 0 {
        return Err(TableError::MalformedInput("unbalanced quotes".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(TableError::EmptyHeader),
        Some(rec) => rec.map_err(|e| TableError::MalformedInput(e.to_string()))?,
    };
    let header: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    if header.iter().all(String::is_empty) {
        return Err(TableError::EmptyHeader);
    }
    if let Some(pos) = header.iter().position(String::is_empty) {
        return Err(TableError::MalformedInput(format!(
            "column {} has an empty name",
            pos + 1
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| TableError::MalformedInput(e.to_string()))?;
        if rec.len() > header.len() {
            return Err(TableError::MalformedInput(format!(
                "row {} has {} fields but the header has {}",
                i + 1,
                rec.len(),
                header.len()
            )));
        }
        rows.push(rec.iter().map(|c| Some(c.to_string())).collect());
    }
    Table::from_raw(name, header, rows)
}

fn parse_json_rows(input: &[u8], name: &str) -> Result<Table, TableError> {
    let doc: serde_json::Value = serde_json::from_slice(input)
        .map_err(|e| TableError::MalformedInput(format!("invalid JSON: {e}")))?;
    let items = doc
        .as_array()
        .ok_or_else(|| TableError::MalformedInput("expected a JSON array of objects".into()))?;
    let mut header: Vec<String> = Vec::new();
    let mut objects = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let obj = item.as_object().ok_or_else(|| {
            TableError::MalformedInput(format!("element {i} is not a JSON object"))
        })?;
        for key in obj.keys() {
            if !header.contains(key) {
                header.push(key.clone());
            }
        }
        objects.push(obj);
    }
    if header.is_empty() {
        return Err(TableError::EmptyHeader);
    }
    let mut rows = Vec::with_capacity(objects.len());
    for (i, obj) in objects.into_iter().enumerate() {
        let mut row = Vec::with_capacity(header.len());
        for key in &header {
            let cell = match obj.get(key) {
                None => None,
                Some(v) => Value::json_raw(v).ok_or_else(|| {
                    TableError::MalformedInput(format!(
                        "element {i}, key `{key}`: nested values are not supported"
                    ))
                })?,
            };
            row.push(cell);
        }
        rows.push(row);
    }
    Table::from_raw(name, header, rows)
}

#[derive(Serialize, Deserialize, JsonSchema)]
#[schemars(rename = "Table")]
struct TableRepr {
    name: String,
    columns: Vec<Column>,
    rows: Vec<Vec<serde_json::Value>>,
}

impl Serialize for Table {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TableRepr {
            name: self.name.clone(),
            columns: self.columns.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(Value::to_json).collect())
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Table {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = TableRepr::deserialize(deserializer)?;
        let mut rows = Vec::with_capacity(repr.rows.len());
        for raw in repr.rows {
            let mut row = Vec::with_capacity(raw.len());
            for (cell, col) in raw.iter().zip(&repr.columns) {
                let v = match cell {
                    serde_json::Value::String(s) => parse_as(s, col.ty),
                    other => Value::from_json(other),
                }
                .ok_or_else(|| D::Error::custom(format!("bad cell in column `{}`", col.name)))?;
                row.push(v);
            }
            if raw.len() != repr.columns.len() {
                return Err(D::Error::custom("row arity does not match columns"));
            }
            rows.push(row);
        }
        Table::new(repr.name, repr.columns, rows).map_err(D::Error::custom)
    }
}

impl JsonSchema for Table {
    fn schema_name() -> std::borrow::Cow<'static, str> {
        "Table".into()
    }

    fn json_schema(generator: &mut schemars::SchemaGenerator) -> schemars::Schema {
        TableRepr::json_schema(generator)
    }
}

/// The running example: daily temperatures for two cities in long form.
pub fn fixture_t0() -> Table {
    let csv = "Date,City,Temperature\n\
               2020-01-01,Seattle,51\n\
               2020-01-01,Atlanta,45\n\
               2020-01-02,Seattle,45\n\
               2020-01-02,Atlanta,47\n\
               2020-01-03,Seattle,48\n\
               2020-01-03,Atlanta,56\n";
    Table::parse(csv.as_bytes(), TableFormat::Csv, "T0").expect("fixture parses")
}
