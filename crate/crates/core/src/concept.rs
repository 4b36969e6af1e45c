//! Data concepts: named fields that may or may not be columns yet.

use std::collections::{HashMap, HashSet};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::Formula;
use crate::table::Table;
use crate::value::{infer_value_type, SemanticType, Value};

pub const MAX_EXAMPLES: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConceptKind {
    Original,
    Custom,
    Derived { sources: Vec<String>, description: String, formula: Formula },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum Resolution {
    Known { table: String, column: String },
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DataConcept {
    pub id: String,
    pub name: String,
    #[serde(flatten)]
    pub kind: ConceptKind,
    pub semantic_type: SemanticType,
    pub example_values: Vec<Value>,
    pub resolution: Resolution,
}

impl DataConcept {
    pub fn is_known(&self) -> bool {
        matches!(self.resolution, Resolution::Known { .. })
    }

    pub fn is_derived(&self) -> bool {
        matches!(self.kind, ConceptKind::Derived { .. })
    }

    pub fn sources(&self) -> &[String] {
        match &self.kind {
            ConceptKind::Derived { sources, .. } => sources,
            _ => &[],
        }
    }

    pub fn column(&self) -> Option<&str> {
        match &self.resolution {
            Resolution::Known { column, .. } => Some(column),
            Resolution::Unknown => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConceptError {
    #[error("a concept named `{0}` already exists")]
    DuplicateName(String),
    #[error("a custom concept needs at least one example value")]
    EmptyExamples,
    #[error("concept name is empty")]
    EmptyName,
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("no column bound for concept `{0}`")]
    BindingIncomplete(String),
    #[error("concept `{0}` is still referenced by `{1}`")]
    InUse(String, String),
}

/// First `MAX_EXAMPLES` distinct non-null values in order.
pub fn sample_examples<'a>(values: impl IntoIterator<Item = &'a Value>) -> Vec<Value> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for v in values {
        if !v.is_null() && seen.insert(v.canonical_key()) {
            out.push(v.clone());
            if out.len() == MAX_EXAMPLES {
                break;
            }
        }
    }
    out
}

fn accepts(param: SemanticType, column: SemanticType) -> bool {
    param == column
        || (param == SemanticType::Float && column == SemanticType::Integer)
        || (param == SemanticType::Datetime && column == SemanticType::Date)
        || param == SemanticType::Text
}

/// The session's concept shelf. Ids are `c1`, `c2`, ... in creation order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ConceptShelf {
    concepts: Vec<DataConcept>,
    next_id: u64,
}

impl ConceptShelf {
    pub fn concepts(&self) -> &[DataConcept] {
        &self.concepts
    }

    pub fn get(&self, id: &str) -> Option<&DataConcept> {
        self.concepts.iter().find(|c| c.id == id)
    }

    pub fn by_name(&self, name: &str) -> Option<&DataConcept> {
        self.concepts.iter().find(|c| c.name == name)
    }

    fn get_mut(&mut self, id: &str) -> Option<&mut DataConcept> {
        self.concepts.iter_mut().find(|c| c.id == id)
    }

    fn fresh_id(&mut self) -> String {
        self.next_id += 1;
        format!("c{}", self.next_id)
    }

    fn check_name(&self, name: &str) -> Result<(), ConceptError> {
        if name.trim().is_empty() {
            return Err(ConceptError::EmptyName);
        }
        if self.by_name(name).is_some() {
            return Err(ConceptError::DuplicateName(name.to_string()));
        }
        Ok(())
    }

    /// One known original concept per column of `t`. Columns whose name is
    /// already on the shelf are skipped.
    pub fn load_original(&mut self, t: &Table, table_id: &str) -> Vec<DataConcept> {
        let mut out = Vec::new();
        for (i, col) in t.columns().iter().enumerate() {
            if self.by_name(&col.name).is_some() {
                continue;
            }
            let c = DataConcept {
                id: self.fresh_id(),
                name: col.name.clone(),
                kind: ConceptKind::Original,
                semantic_type: col.ty,
                example_values: sample_examples(t.column_values(i)),
                resolution: Resolution::Known { table: table_id.to_string(), column: col.name.clone() },
            };
            self.concepts.push(c.clone());
            out.push(c);
        }
        out
    }

    pub fn create_custom(&mut self, name: &str, examples: Vec<Value>) -> Result<DataConcept, ConceptError> {
        self.check_name(name)?;
        let examples: Vec<Value> = examples.into_iter().filter(|v| !v.is_null()).collect();
        if examples.is_empty() {
            return Err(ConceptError::EmptyExamples);
        }
        let ty = infer_value_type(&examples);
        let example_values = examples.iter().take(MAX_EXAMPLES).map(|v| v.coerce(ty).unwrap_or(Value::Null)).collect();
        let c = DataConcept {
            id: self.fresh_id(),
            name: name.to_string(),
            kind: ConceptKind::Custom,
            semantic_type: ty,
            example_values,
            resolution: Resolution::Unknown,
        };
        self.concepts.push(c.clone());
        Ok(c)
    }

    /// Checks that `formula` fits `sources` without touching the shelf.
    pub fn check_derivation(&self, name: &str, sources: &[String], formula: &Formula) -> Result<(), ConceptError> {
        self.check_name(name)?;
        if sources.len() != formula.params().len() {
            return Err(ConceptError::TypeMismatch(format!(
                "formula takes {} parameters but {} sources were given",
                formula.params().len(),
                sources.len()
            )));
        }
        for (id, (param, ty)) in sources.iter().zip(formula.params()) {
            let src = self.get(id).ok_or_else(|| ConceptError::UnknownConcept(id.clone()))?;
            if !accepts(*ty, src.semantic_type) {
                return Err(ConceptError::TypeMismatch(format!(
                    "parameter `{param}` is {ty} but `{}` is {}",
                    src.name, src.semantic_type
                )));
            }
        }
        Ok(())
    }

    /// Adds a derived concept. It is known, bound to `table_id`, iff every
    /// source is known; the caller is responsible for the column itself.
    pub fn create_derived(
        &mut self,
        name: &str,
        sources: Vec<String>,
        description: &str,
        formula: Formula,
        table_id: &str,
        example_values: Vec<Value>,
    ) -> Result<DataConcept, ConceptError> {
        self.check_derivation(name, &sources, &formula)?;
        let known = sources.iter().all(|s| self.get(s).is_some_and(DataConcept::is_known));
        let c = DataConcept {
            id: self.fresh_id(),
            name: name.to_string(),
            semantic_type: formula.result_type(),
            kind: ConceptKind::Derived { sources, description: description.to_string(), formula },
            example_values: sample_examples(&example_values),
            resolution: if known {
                Resolution::Known { table: table_id.to_string(), column: name.to_string() }
            } else {
                Resolution::Unknown
            },
        };
        self.concepts.push(c.clone());
        Ok(c)
    }

    /// Binds each listed unknown concept to a column of `t` (stored under
    /// `table_id`), taking its type and examples from the column, then resolves
    /// derived concepts whose sources have all become known. Returns the ids
    /// of derived concepts resolved this way, sources before dependents; their
    /// columns are named after the concept and must be added by the caller.
    pub fn resolve(
        &mut self,
        concepts: &[String],
        binding: &HashMap<String, String>,
        t: &Table,
        table_id: &str,
    ) -> Result<Vec<String>, ConceptError> {
        for id in concepts {
            let c = self.get(id).ok_or_else(|| ConceptError::UnknownConcept(id.clone()))?;
            if c.is_known() {
                continue;
            }
            let col = binding.get(id).ok_or_else(|| ConceptError::BindingIncomplete(c.name.clone()))?;
            if t.column(col).is_none() {
                return Err(ConceptError::BindingIncomplete(c.name.clone()));
            }
        }
        for id in concepts {
            let Some(col) = binding.get(id) else { continue };
            let i = t.column_index(col).expect("checked above");
            let (ty, examples) = (t.columns()[i].ty, sample_examples(t.column_values(i)));
            let c = self.get_mut(id).expect("checked above");
            if c.is_known() {
                continue;
            }
            c.resolution = Resolution::Known { table: table_id.to_string(), column: col.clone() };
            c.semantic_type = ty;
            c.example_values = examples;
        }
        Ok(self.resolve_dependents(table_id))
    }

    fn resolve_dependents(&mut self, table_id: &str) -> Vec<String> {
        let mut resolved = Vec::new();
        loop {
            let ready = self.concepts.iter().position(|c| {
                !c.is_known() && c.is_derived() && c.sources().iter().all(|s| self.get(s).is_some_and(DataConcept::is_known))
            });
            let Some(i) = ready else { break };
            let c = &mut self.concepts[i];
            c.resolution = Resolution::Known { table: table_id.to_string(), column: c.name.clone() };
            resolved.push(c.id.clone());
        }
        resolved
    }

    /// Points known concepts whose column exists in `t` at `table_id`.
    pub fn rebind(&mut self, t: &Table, table_id: &str) {
        for c in &mut self.concepts {
            if let Resolution::Known { table, column } = &mut c.resolution {
                if t.column(column).is_some() {
                    *table = table_id.to_string();
                }
            }
        }
    }

    pub fn set_examples(&mut self, id: &str, values: Vec<Value>) {
        if let Some(c) = self.get_mut(id) {
            c.example_values = values;
        }
    }

    /// Ids of concepts derived from `id`.
    pub fn dependents(&self, id: &str) -> Vec<&DataConcept> {
        self.concepts.iter().filter(|c| c.sources().iter().any(|s| s == id)).collect()
    }

    /// Removes a concept nothing else derives from. Chart references are the
    /// caller's to check.
    pub fn delete(&mut self, id: &str) -> Result<DataConcept, ConceptError> {
        let i = self.concepts.iter().position(|c| c.id == id).ok_or_else(|| ConceptError::UnknownConcept(id.to_string()))?;
        if let Some(d) = self.dependents(id).first() {
            return Err(ConceptError::InUse(self.concepts[i].name.clone(), d.name.clone()));
        }
        Ok(self.concepts.remove(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;
    use crate::table::fixture_t0;
    use proptest::prelude::*;

    fn ints(xs: &[i64]) -> Vec<Value> {
        xs.iter().map(|&x| Value::Int(x)).collect()
    }

    #[test]
    fn originals_from_t0() {
        let mut shelf = ConceptShelf::default();
        let cs = shelf.load_original(&fixture_t0(), "t0");
        let names: Vec<&str> = cs.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["Date", "City", "Temperature"]);
        assert!(cs.iter().all(DataConcept::is_known));
        assert_eq!(cs[1].example_values, vec![Value::from("Seattle"), Value::from("Atlanta")]);
        assert_eq!(cs[2].example_values, ints(&[51, 45, 47, 48, 56]));
        let empty = Table::new("e", vec![], vec![]).unwrap();
        assert!(ConceptShelf::default().load_original(&empty, "t").is_empty());
    }

    #[test]
    fn custom_concepts() {
        let mut shelf = ConceptShelf::default();
        let c = shelf.create_custom("Atlanta Temp", ints(&[45, 47, 56, 41])).unwrap();
        assert!(!c.is_known());
        assert_eq!(c.semantic_type, SemanticType::Integer);
        assert_eq!(shelf.create_custom("Atlanta Temp", ints(&[1])), Err(ConceptError::DuplicateName("Atlanta Temp".into())));
        assert_eq!(shelf.create_custom("x", vec![]), Err(ConceptError::EmptyExamples));
        let t = shelf.create_custom("Label", vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(t.semantic_type, SemanticType::Text);
    }

    fn diff() -> Formula {
        parse_formula("fn(a, b) = a - b", &[SemanticType::Integer, SemanticType::Integer]).unwrap()
    }

    #[test]
    fn derived_gating_and_resolution() {
        let mut shelf = ConceptShelf::default();
        let a = shelf.create_custom("Seattle Temp", ints(&[51, 45])).unwrap().id;
        let b = shelf.create_custom("Atlanta Temp", ints(&[45, 47])).unwrap().id;
        let d = shelf.create_derived("Difference", vec![a.clone(), b.clone()], "diff", diff(), "t0", vec![]).unwrap();
        assert!(!d.is_known());
        let three = parse_formula("fn(a, b, c) = a", &[SemanticType::Integer; 3]).unwrap();
        assert!(matches!(
            shelf.create_derived("X", vec![a.clone(), b.clone()], "", three, "t0", vec![]),
            Err(ConceptError::TypeMismatch(_))
        ));

        let pivoted = Table::parse(b"Date,Atlanta,Seattle\n2020-01-01,45,51\n", crate::table::TableFormat::Csv, "p").unwrap();
        let mut binding = HashMap::new();
        binding.insert(a.clone(), "Seattle".to_string());
        assert_eq!(
            shelf.resolve(&[a.clone(), b.clone()], &binding, &pivoted, "t1"),
            Err(ConceptError::BindingIncomplete("Atlanta Temp".into()))
        );
        binding.insert(b.clone(), "Atlanta".to_string());
        let newly = shelf.resolve(&[a.clone(), b.clone()], &binding, &pivoted, "t1").unwrap();
        assert_eq!(newly, vec![d.id.clone()]);
        assert!(shelf.concepts().iter().all(DataConcept::is_known));
        assert_eq!(shelf.resolve(&[], &HashMap::new(), &pivoted, "t1").unwrap(), Vec::<String>::new());
    }

    #[test]
    fn deletion_respects_dependents() {
        let mut shelf = ConceptShelf::default();
        let a = shelf.create_custom("A", ints(&[1])).unwrap().id;
        let b = shelf.create_custom("B", ints(&[2])).unwrap().id;
        let d = shelf.create_derived("D", vec![a.clone(), b], "", diff(), "t0", vec![]).unwrap().id;
        assert!(matches!(shelf.delete(&a), Err(ConceptError::InUse(..))));
        shelf.delete(&d).unwrap();
        shelf.delete(&a).unwrap();
        assert!(shelf.get(&a).is_none());
    }

    #[derive(Clone, Debug)]
    enum Op {
        Custom,
        Derive(usize, usize),
        Resolve(Vec<usize>),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            Just(Op::Custom),
            (0usize..16, 0usize..16).prop_map(|(a, b)| Op::Derive(a, b)),
            prop::collection::vec(0usize..16, 0..4).prop_map(Op::Resolve),
        ]
    }

    proptest! {
        /// Reference model: originals known, customs known once bound, derived
        /// known iff all sources are.
        #[test]
        fn known_state_follows_the_rules(ops in prop::collection::vec(op(), 1..30)) {
            let t = Table::parse(b"x,y\n1,2\n", crate::table::TableFormat::Csv, "t").unwrap();
            let mut shelf = ConceptShelf::default();
            shelf.load_original(&t, "t0");
            let mut bound: HashSet<String> = HashSet::new();
            let mut before: HashMap<String, (bool, String)> = HashMap::new();
            for (k, o) in ops.into_iter().enumerate() {
                let ids: Vec<String> = shelf.concepts().iter().map(|c| c.id.clone()).collect();
                match o {
                    Op::Custom => { shelf.create_custom(&format!("u{k}"), ints(&[k as i64])).unwrap(); }
                    Op::Derive(a, b) => {
                        let (a, b) = (ids[a % ids.len()].clone(), ids[b % ids.len()].clone());
                        shelf.create_derived(&format!("d{k}"), vec![a, b], "", diff(), "t0", vec![]).unwrap();
                    }
                    Op::Resolve(picks) => {
                        let customs: Vec<String> = shelf.concepts().iter()
                            .filter(|c| c.kind == ConceptKind::Custom && !c.is_known()).map(|c| c.id.clone()).collect();
                        if customs.is_empty() { continue; }
                        let chosen: Vec<String> = picks.iter().map(|p| customs[p % customs.len()].clone()).collect();
                        let binding = chosen.iter().map(|id| (id.clone(), "x".to_string())).collect();
                        shelf.resolve(&chosen, &binding, &t, "t1").unwrap();
                        bound.extend(chosen);
                    }
                }
                let mut model: HashMap<String, bool> = HashMap::new();
                for c in shelf.concepts() {
                    let known = match &c.kind {
                        ConceptKind::Original => true,
                        ConceptKind::Custom => bound.contains(&c.id),
                        ConceptKind::Derived { sources, .. } => sources.iter().all(|s| model[s]),
                    };
                    model.insert(c.id.clone(), known);
                    prop_assert_eq!(c.is_known(), known, "{}", c.name);
                    let kind = format!("{:?}", std::mem::discriminant(&c.kind));
                    if let Some((was_known, was_kind)) = before.get(&c.id) {
                        prop_assert!(!was_known || c.is_known());
                        prop_assert_eq!(was_kind, &kind);
                    }
                    before.insert(c.id.clone(), (c.is_known(), kind));
                }
            }
        }
    }
}
