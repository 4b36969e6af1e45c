//! Static evaluation of reshaping programs over an abstraction of a table that
//! keeps column names, types and per-column value sets but forgets rows.

use std::collections::HashSet;
use std::sync::Arc;

use schemars::JsonSchema;
use serde::Serialize;

use super::{delimited_pieces, wider_column_name, Program, ReshapeError};
use crate::table::Table;
use crate::value::{parse_as, CanonicalKey, SemanticType, Value};

/// One column of a statically computed output schema.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemaColumn {
    Named {
        name: String,
        #[serde(rename = "type")]
        ty: SemanticType,
    },
    /// Columns generated by `pivot_wider`, one per distinct value of the name column.
    Wildcard {
        names: Vec<String>,
        #[serde(rename = "type")]
        ty: SemanticType,
    },
}

#[derive(Clone, Debug)]
pub struct AbstractColumn {
    pub name: String,
    pub ty: SemanticType,
    /// Over-approximation of the rendered non-null cells the column can hold.
    pub values: Arc<HashSet<String>>,
    /// Whether the column may hold nulls.
    pub nullable: bool,
    /// Set when the column was generated by a `pivot_wider`; identifies the group.
    pub wildcard: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct AbstractTable {
    pub columns: Vec<AbstractColumn>,
    next_wildcard: usize,
}

fn value_set<'a>(values: impl Iterator<Item = &'a Value>) -> HashSet<String> {
    values.filter(|v| !v.is_null()).map(Value::render).collect()
}

pub(crate) fn text_key(s: &str) -> Option<CanonicalKey> {
    let t = s.trim();
    (!t.is_empty()).then(|| Value::Text(t.to_string()).canonical_key())
}

fn non_empty(s: &str) -> Option<String> {
    (!s.is_empty()).then(|| s.to_string())
}

impl AbstractTable {
    pub fn of(t: &Table) -> AbstractTable {
        let columns = t
            .columns()
            .iter()
            .enumerate()
            .map(|(i, c)| AbstractColumn {
                name: c.name.clone(),
                ty: c.ty,
                values: Arc::new(value_set(t.column_values(i))),
                nullable: t.column_values(i).any(Value::is_null),
                wildcard: None,
            })
            .collect();
        AbstractTable {
            columns,
            next_wildcard: 0,
        }
    }

    fn index(&self, name: &str) -> Result<usize, ReshapeError> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| ReshapeError::UnknownColumn(name.to_string()))
    }

    fn check_unique(&self) -> Result<(), ReshapeError> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(ReshapeError::DuplicateOutputColumn(c.name.clone()));
            }
        }
        Ok(())
    }

    /// Abstract transformer for the outermost operator of `p`.
    pub fn apply(&self, p: &Program) -> Result<AbstractTable, ReshapeError> {
        let mut out = self.clone();
        match p {
            Program::Input => {}
            Program::PivotLonger {
                columns,
                key_name,
                value_name,
                ..
            } => {
                if columns.is_empty() {
                    return Err(ReshapeError::InvalidParameter("empty column list".into()));
                }
                let mut listed = Vec::new();
                for c in columns {
                    let i = self.index(c)?;
                    if listed.contains(&i) {
                        return Err(ReshapeError::InvalidParameter(format!("`{c}` listed twice")));
                    }
                    listed.push(i);
                }
                if listed.len() >= self.columns.len() {
                    return Err(ReshapeError::InvalidParameter(
                        "pivot_longer columns must be a strict subset".into(),
                    ));
                }
                let keys: HashSet<String> = listed
                    .iter()
                    .map(|&i| self.columns[i].name.clone())
                    .collect();
                let ty = listed
                    .iter()
                    .map(|&i| self.columns[i].ty)
                    .reduce(SemanticType::join)
                    .expect("non-empty");
                let nullable = listed.iter().any(|&i| self.columns[i].nullable);
                let mut vals = HashSet::new();
                for &i in &listed {
                    let col = &self.columns[i];
                    if col.ty == ty {
                        vals.extend(col.values.iter().cloned());
                    } else {
                        // Widening changes the rendering (5 -> 5.0, dates gain a time).
                        vals.extend(col.values.iter().map(|raw| {
                            parse_as(raw, col.ty)
                                .and_then(|v| v.coerce(ty))
                                .map(|v| v.render())
                                .unwrap_or_else(|| raw.clone())
                        }));
                    }
                }
                out.columns = (0..self.columns.len())
                    .filter(|i| !listed.contains(i))
                    .map(|i| self.columns[i].clone())
                    .collect();
                out.columns.push(AbstractColumn {
                    name: key_name.clone(),
                    ty: SemanticType::Text,
                    values: Arc::new(keys),
                    nullable: false,
                    wildcard: None,
                });
                out.columns.push(AbstractColumn {
                    name: value_name.clone(),
                    ty,
                    values: Arc::new(vals),
                    nullable,
                    wildcard: None,
                });
            }
            Program::PivotWider {
                name_col,
                value_col,
                ..
            } => {
                let ni = self.index(name_col)?;
                let vi = self.index(value_col)?;
                if ni == vi {
                    return Err(ReshapeError::InvalidParameter("name and value columns must differ".into()));
                }
                let mut names: Vec<String> = self.columns[ni]
                    .values
                    .iter()
                    .map(|raw| raw.trim().to_string())
                    .collect();
                if self.columns[ni].nullable {
                    names.push(wider_column_name(&Value::Null));
                }
                names.sort();
                names.dedup();
                let group = out.next_wildcard;
                out.next_wildcard += 1;
                let value_col = self.columns[vi].clone();
                out.columns = (0..self.columns.len())
                    .filter(|&i| i != ni && i != vi)
                    .map(|i| self.columns[i].clone())
                    .collect();
                for name in names {
                    out.columns.push(AbstractColumn {
                        name,
                        ty: value_col.ty,
                        values: value_col.values.clone(),
                        nullable: true,
                        wildcard: Some(group),
                    });
                }
            }
            Program::Separate {
                col,
                left_name,
                right_name,
                delimiter,
                ..
            } => {
                let ci = self.index(col)?;
                if delimiter.is_empty() {
                    return Err(ReshapeError::InvalidParameter("empty delimiter".into()));
                }
                if left_name == right_name {
                    return Err(ReshapeError::DuplicateOutputColumn(left_name.clone()));
                }
                let mut left = HashSet::new();
                let mut right = HashSet::new();
                for s in self.columns[ci].values.iter() {
                    match s.split_once(delimiter.as_str()) {
                        Some((l, r)) => {
                            left.extend(non_empty(l));
                            right.extend(non_empty(r));
                        }
                        None => left.extend(non_empty(s)),
                    }
                }
                out.columns.splice(
                    ci..=ci,
                    [
                        AbstractColumn {
                            name: left_name.clone(),
                            ty: SemanticType::Text,
                            values: Arc::new(left),
                            nullable: true,
                            wildcard: None,
                        },
                        AbstractColumn {
                            name: right_name.clone(),
                            ty: SemanticType::Text,
                            values: Arc::new(right),
                            nullable: true,
                            wildcard: None,
                        },
                    ],
                );
            }
            Program::SeparateRows { col, delimiter, .. } => {
                let ci = self.index(col)?;
                if delimiter.is_empty() {
                    return Err(ReshapeError::InvalidParameter("empty delimiter".into()));
                }
                let tokens: HashSet<String> = self.columns[ci]
                    .values
                    .iter()
                    .flat_map(|s| s.split(delimiter.as_str()).filter_map(|t| non_empty(t.trim())))
                    .collect();
                out.columns[ci].ty = SemanticType::Text;
                out.columns[ci].values = Arc::new(tokens);
                out.columns[ci].nullable = true;
                out.columns[ci].wildcard = None;
            }
        }
        out.check_unique()?;
        Ok(out)
    }

    /// Every value any further reshaping could place in a cell: current cells,
    /// column names (via `pivot_longer`) and delimiter-bounded pieces of both.
    pub fn reachable_values(&self) -> HashSet<CanonicalKey> {
        let mut out = HashSet::new();
        for c in &self.columns {
            add_pieces(&c.name, &mut out);
            for raw in c.values.iter() {
                add_pieces(raw, &mut out);
            }
        }
        out
    }

    /// Canonical keys of the non-null cells of column `i`.
    pub fn keys(&self, i: usize) -> HashSet<CanonicalKey> {
        self.columns[i].values.iter().filter_map(|s| text_key(s)).collect()
    }

    pub fn schema(&self) -> Vec<SchemaColumn> {
        let mut out: Vec<SchemaColumn> = Vec::new();
        let mut last_group = None;
        for c in &self.columns {
            match c.wildcard {
                None => {
                    last_group = None;
                    out.push(SchemaColumn::Named {
                        name: c.name.clone(),
                        ty: c.ty,
                    })
                }
                Some(g) if last_group == Some(g) => {
                    if let Some(SchemaColumn::Wildcard { names, .. }) = out.last_mut() {
                        names.push(c.name.clone());
                    }
                }
                Some(g) => {
                    last_group = Some(g);
                    out.push(SchemaColumn::Wildcard {
                        names: vec![c.name.clone()],
                        ty: c.ty,
                    })
                }
            }
        }
        out
    }
}

/// Adds the keys of every delimiter-bounded piece of `s`. A date also adds the
/// pieces of its midnight-datetime rendering, which `pivot_longer` produces
/// when it widens a date column.
pub(crate) fn add_pieces(s: &str, out: &mut HashSet<CanonicalKey>) {
    for piece in delimited_pieces(s) {
        if let Some(k) = text_key(piece) {
            out.insert(k);
        }
    }
    if let Some(Value::Date(d)) = parse_as(s, SemanticType::Date) {
        let widened = Value::Date(d).coerce(SemanticType::Datetime).expect("date widens").render();
        for piece in delimited_pieces(&widened) {
            if let Some(k) = text_key(piece) {
                out.insert(k);
            }
        }
    }
}

fn abstract_eval(p: &Program, input: &AbstractTable) -> Result<AbstractTable, ReshapeError> {
    match p.child() {
        None => Ok(input.clone()),
        Some(child) => abstract_eval(child, input)?.apply(p),
    }
}

/// Result schema of `p` on `input` without evaluating rows. Columns generated by
/// `pivot_wider` are grouped into a wildcard whose names come from the distinct
/// values the name column can hold.
pub fn output_schema(p: &Program, input: &Table) -> Result<Vec<SchemaColumn>, ReshapeError> {
    Ok(abstract_eval(p, &AbstractTable::of(input))?.schema())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{fixture_t0, TableFormat};

    fn named(name: &str, ty: SemanticType) -> SchemaColumn {
        SchemaColumn::Named {
            name: name.into(),
            ty,
        }
    }

    #[test]
    fn pivot_longer_schema() {
        let t = Table::parse(
            b"Date,Seattle,Atlanta\n2020-01-01,51,45\n",
            TableFormat::Csv,
            "w",
        )
        .unwrap();
        let p = Program::PivotLonger {
            child: Box::new(Program::Input),
            columns: vec!["Seattle".into(), "Atlanta".into()],
            key_name: "City".into(),
            value_name: "Temp".into(),
        };
        assert_eq!(
            output_schema(&p, &t).unwrap(),
            vec![
                named("Date", SemanticType::Date),
                named("City", SemanticType::Text),
                named("Temp", SemanticType::Integer)
            ]
        );
    }

    #[test]
    fn identity_schema() {
        let t0 = fixture_t0();
        let schema = output_schema(&Program::Input, &t0).unwrap();
        let expected: Vec<_> = t0.columns().iter().map(|c| named(&c.name, c.ty)).collect();
        assert_eq!(schema, expected);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let p = Program::Separate {
            child: Box::new(Program::Input),
            col: "Nope".into(),
            left_name: "a".into(),
            right_name: "b".into(),
            delimiter: "-".into(),
        };
        assert_eq!(
            output_schema(&p, &fixture_t0()),
            Err(ReshapeError::UnknownColumn("Nope".into()))
        );
    }

    #[test]
    fn pivot_wider_reports_wildcard() {
        let p = Program::PivotWider {
            child: Box::new(Program::Input),
            name_col: "City".into(),
            value_col: "Temperature".into(),
        };
        let schema = output_schema(&p, &fixture_t0()).unwrap();
        assert_eq!(schema[0], named("Date", SemanticType::Date));
        match &schema[1] {
            SchemaColumn::Wildcard { names, ty } => {
                assert_eq!(names, &["Atlanta", "Seattle"]);
                assert_eq!(*ty, SemanticType::Integer);
            }
            other => panic!("expected wildcard, got {other:?}"),
        }
    }
}
