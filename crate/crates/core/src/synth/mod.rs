//! Programming-by-example synthesis of reshaping programs: find `p` with
//! `E ⊆ p(T)` by enumerating programs bottom-up, pruned by abstract values.

mod subsume;

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reshape::{AbstractTable, Program, DELIMITERS};
use crate::table::Table;
use crate::value::{CanonicalKey, Value};

pub use subsume::check_subsumption;

/// `pivot_longer` parameterizations tried per partial program.
pub const MAX_LONGER_SUBSETS: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ExampleRelation {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExampleError {
    #[error("example relation needs at least one column")]
    NoColumns,
    #[error("example relation needs at least two rows")]
    TooFewRows,
    #[error("duplicate example column `{0}`")]
    DuplicateColumn(String),
    #[error("example row {row} has {found} cells, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("example row {row} has an empty cell in `{column}`")]
    NullCell { row: usize, column: String },
}

impl ExampleRelation {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<Value>>) -> Result<Self, ExampleError> {
        let e = ExampleRelation { columns, rows };
        e.validate()?;
        Ok(e)
    }

    pub fn from_table(t: &Table) -> Result<Self, ExampleError> {
        Self::new(t.columns().iter().map(|c| c.name.clone()).collect(), t.rows().to_vec())
    }

    pub fn validate(&self) -> Result<(), ExampleError> {
        if self.columns.is_empty() {
            return Err(ExampleError::NoColumns);
        }
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c) {
                return Err(ExampleError::DuplicateColumn(c.clone()));
            }
        }
        if self.rows.len() < 2 {
            return Err(ExampleError::TooFewRows);
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(ExampleError::Ragged { row: r, expected: self.columns.len(), found: row.len() });
            }
            if let Some(c) = row.iter().position(Value::is_null) {
                return Err(ExampleError::NullCell { row: r, column: self.columns[c].clone() });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct BoundColumn {
    pub example: String,
    pub column: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
pub struct RankKey {
    pub ast_size: usize,
    pub tie_break: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub program: Program,
    pub column_binding: Vec<BoundColumn>,
    pub rank_key: RankKey,
    pub output: Table,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthesisLimits {
    pub max_depth: usize,
    pub max_candidates: usize,
    pub timeout: Duration,
}

impl Default for SynthesisLimits {
    fn default() -> Self {
        SynthesisLimits { max_depth: 2, max_candidates: 5, timeout: Duration::from_secs(10) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct UnreachableValue {
    pub column: String,
    pub value: String,
    /// Closest values the input can produce, by edit distance.
    pub nearest: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct NoProgramDiagnostic {
    pub unreachable: Vec<UnreachableValue>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid example relation: {0}")]
    InvalidExample(#[from] ExampleError),
    #[error("input table has no rows")]
    EmptyTable,
    #[error("no reshaping program produces the example{}", describe_unreachable(.0))]
    NoProgram(NoProgramDiagnostic),
    #[error("synthesis timed out after {explored} programs")]
    Timeout { explored: usize },
}

fn describe_unreachable(d: &NoProgramDiagnostic) -> String {
    if d.unreachable.is_empty() {
        return String::new();
    }
    let vals: Vec<String> = d.unreachable.iter().map(|u| format!("{:?}", u.value)).collect();
    format!("; values not found in the data: {}", vals.join(", "))
}

/// Canonical values any program in the grammar can place in a cell: the input's
/// cells, its column names, and delimiter-bounded pieces of both.
pub fn abstract_inventory(t: &Table) -> HashSet<CanonicalKey> {
    AbstractTable::of(t).reachable_values()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prune {
    Keep,
    Cut,
}

/// Sound pruning test for a partial program with `remaining` operators still
/// available: cut when an example value cannot be produced anymore, or, with
/// nothing left to apply, when no injective value-compatible binding exists.
pub fn prune_partial(
    partial: &Program,
    t: &Table,
    e: &ExampleRelation,
    remaining: usize,
) -> Result<Prune, crate::reshape::ReshapeError> {
    let inventory = abstract_inventory(t);
    if e.rows.iter().flatten().any(|v| !inventory.contains(&v.canonical_key())) {
        return Ok(Prune::Cut);
    }
    let out = partial.eval(t)?;
    Ok(prune_evaluated(&out, e, remaining))
}

fn prune_evaluated(out: &Table, e: &ExampleRelation, remaining: usize) -> Prune {
    if remaining == 0 {
        let enc = subsume::encode(e, out);
        let cands = subsume::column_candidates(&enc, e.columns.len());
        return if subsume::has_matching(&cands, out.num_columns()) { Prune::Keep } else { Prune::Cut };
    }
    let reachable = AbstractTable::of(out).reachable_values();
    if e.rows.iter().flatten().all(|v| reachable.contains(&v.canonical_key())) {
        Prune::Keep
    } else {
        Prune::Cut
    }
}

/// Ranked reshaping programs whose output subsumes `e`.
pub fn synthesize(t: &Table, e: &ExampleRelation, limits: SynthesisLimits) -> Result<Vec<SynthesisResult>, SynthError> {
    search(t, e, limits, true)
}

/// The same search with pruning disabled; used to check that pruning never
/// changes the result.
pub fn synthesize_unpruned(
    t: &Table,
    e: &ExampleRelation,
    limits: SynthesisLimits,
) -> Result<Vec<SynthesisResult>, SynthError> {
    search(t, e, limits, false)
}

struct Node {
    program: Program,
    table: Table,
    /// Columns named by a naming parameter; renamed after matching.
    introduced: Vec<String>,
}

struct Found {
    ops: String,
    affinity: usize,
    index: usize,
    program: Program,
    binding: Vec<BoundColumn>,
    output: Table,
}

fn search(t: &Table, e: &ExampleRelation, limits: SynthesisLimits, prune: bool) -> Result<Vec<SynthesisResult>, SynthError> {
    e.validate()?;
    if t.num_rows() == 0 {
        return Err(SynthError::EmptyTable);
    }
    let deadline = Instant::now() + limits.timeout;
    let inventory = abstract_inventory(t);
    let diagnostic = diagnose(e, &inventory);
    if prune && !diagnostic.unreachable.is_empty() {
        return Err(SynthError::NoProgram(diagnostic));
    }

    let mut results: Vec<SynthesisResult> = Vec::new();
    let mut seen_outputs: HashSet<Vec<u8>> = HashSet::new();
    let mut level = vec![Node { program: Program::Input, table: t.clone(), introduced: Vec::new() }];
    let mut explored = 0usize;
    let mut timed_out = false;

    for depth in 0..=limits.max_depth {
        let remaining = limits.max_depth - depth;
        let mut found: Vec<Found> = Vec::new();
        let mut kept: Vec<Node> = Vec::new();
        for (index, node) in level.into_iter().enumerate() {
            if Instant::now() > deadline {
                timed_out = true;
                break;
            }
            explored += 1;
            if prune && prune_evaluated(&node.table, e, remaining) == Prune::Cut {
                continue;
            }
            if let Some(binding) = check_subsumption(e, &node.table) {
                found.push(finish(e, t, &node, binding, index));
            }
            if remaining > 0 {
                kept.push(node);
            }
        }
        found.sort_by(|a, b| (&a.ops, a.affinity, a.index).cmp(&(&b.ops, b.affinity, b.index)));
        for f in found {
            if results.len() >= limits.max_candidates {
                break;
            }
            if !seen_outputs.insert(fingerprint(&f.output)) {
                continue;
            }
            let tie_break = format!("{}:{:04}:{:08}", f.ops, f.affinity, f.index);
            results.push(SynthesisResult {
                rank_key: RankKey { ast_size: f.program.size(), tie_break },
                program: f.program,
                column_binding: f.binding,
                output: f.output,
            });
        }
        if timed_out || results.len() >= limits.max_candidates || remaining == 0 {
            break;
        }
        level = Vec::new();
        for node in &kept {
            if Instant::now() > deadline {
                timed_out = true;
                break;
            }
            expand(node, &mut level);
        }
        if timed_out {
            break;
        }
    }

    if !results.is_empty() {
        Ok(results)
    } else if timed_out {
        Err(SynthError::Timeout { explored })
    } else {
        Err(SynthError::NoProgram(diagnostic))
    }
}

fn ops_string(p: &Program) -> String {
    p.ops_inner_first().iter().map(|p| char::from(b'0' + p.op_rank())).collect()
}

fn diagnose(e: &ExampleRelation, inventory: &HashSet<CanonicalKey>) -> NoProgramDiagnostic {
    let mut unreachable = Vec::new();
    let mut seen = HashSet::new();
    let mut pool: Option<Vec<String>> = None;
    for row in &e.rows {
        for (c, v) in row.iter().enumerate() {
            let key = v.canonical_key();
            if inventory.contains(&key) || !seen.insert(key) {
                continue;
            }
            let pool = pool.get_or_insert_with(|| {
                let mut p: Vec<String> = inventory.iter().filter_map(render_key).collect();
                p.sort();
                p
            });
            let value = v.render();
            let mut scored: Vec<(usize, &String)> =
                pool.iter().map(|p| (strsim::levenshtein(&value, p), p)).collect();
            scored.sort();
            unreachable.push(UnreachableValue {
                column: e.columns[c].clone(),
                value,
                nearest: scored.into_iter().take(3).map(|(_, p)| p.clone()).collect(),
            });
        }
    }
    NoProgramDiagnostic { unreachable }
}

fn render_key(k: &CanonicalKey) -> Option<String> {
    Some(match k {
        CanonicalKey::Null => return None,
        CanonicalKey::Bool(b) => b.to_string(),
        CanonicalKey::Int(i) => i.to_string(),
        CanonicalKey::Float(bits) => Value::Float(f64::from_bits(*bits)).render(),
        CanonicalKey::Text(s) => s.clone(),
        CanonicalKey::Date(d) => Value::Date(*d).render(),
        CanonicalKey::DateTime(d) => Value::DateTime(*d).render(),
    })
}

fn fingerprint(t: &Table) -> Vec<u8> {
    let mut out: Vec<u8> = t.columns().iter().flat_map(|c| c.ty.as_str().bytes().chain([0])).collect();
    out.extend(t.to_csv());
    out
}

fn words(s: &str) -> HashSet<String> {
    s.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

/// How well output column names echo the example's names; higher is closer.
fn name_affinity(binding: &[BoundColumn]) -> usize {
    binding
        .iter()
        .map(|b| {
            if b.example.trim().eq_ignore_ascii_case(b.column.trim()) {
                4
            } else {
                words(&b.example).intersection(&words(&b.column)).count()
            }
        })
        .sum()
}

fn finish(e: &ExampleRelation, t: &Table, node: &Node, binding: Vec<BoundColumn>, index: usize) -> Found {
    let ops = ops_string(&node.program);
    let affinity = 9999 - name_affinity(&binding).min(9999);
    let renames: HashMap<String, String> = binding
        .iter()
        .filter(|b| node.introduced.contains(&b.column) && b.column != b.example)
        .map(|b| (b.column.clone(), b.example.clone()))
        .collect();
    if !renames.is_empty() {
        let renamed = rename(&node.program, &renames);
        if let Ok(out) = renamed.eval(t) {
            if let Some(b) = check_subsumption(e, &out) {
                return Found { ops, affinity, index, program: renamed, binding: b, output: out };
            }
        }
    }
    Found { ops, affinity, index, program: node.program.clone(), binding, output: node.table.clone() }
}

fn rename(p: &Program, map: &HashMap<String, String>) -> Program {
    let r = |s: &String| map.get(s).cloned().unwrap_or_else(|| s.clone());
    match p {
        Program::Input => Program::Input,
        Program::PivotLonger { child, columns, key_name, value_name } => Program::PivotLonger {
            child: Box::new(rename(child, map)),
            columns: columns.iter().map(r).collect(),
            key_name: r(key_name),
            value_name: r(value_name),
        },
        Program::PivotWider { child, name_col, value_col } => Program::PivotWider {
            child: Box::new(rename(child, map)),
            name_col: r(name_col),
            value_col: r(value_col),
        },
        Program::Separate { child, col, left_name, right_name, delimiter } => Program::Separate {
            child: Box::new(rename(child, map)),
            col: r(col),
            left_name: r(left_name),
            right_name: r(right_name),
            delimiter: delimiter.clone(),
        },
        Program::SeparateRows { child, col, delimiter } => Program::SeparateRows {
            child: Box::new(rename(child, map)),
            col: r(col),
            delimiter: delimiter.clone(),
        },
    }
}

fn fresh(base: &str, t: &Table, taken: &[&str]) -> String {
    let free = |n: &str| t.column_index(n).is_none() && !taken.contains(&n);
    if free(base) {
        return base.to_string();
    }
    (2..).map(|i| format!("{base}_{i}")).find(|n| free(n)).expect("unbounded")
}

fn present_delimiters(t: &Table, col: usize) -> Vec<&'static str> {
    DELIMITERS
        .iter()
        .copied()
        .filter(|d| t.column_values(col).any(|v| !v.is_null() && v.render().contains(d)))
        .collect()
}

/// Column subsets for `pivot_longer`, larger first, then in schema order. On
/// wide tables the budget goes to melts that keep only a column or two.
fn longer_subsets(eligible: &[usize], n_columns: usize) -> Vec<Vec<usize>> {
    let max = n_columns.saturating_sub(1).min(eligible.len());
    let mut out = Vec::new();
    for size in (1..=max).rev() {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            if out.len() >= MAX_LONGER_SUBSETS {
                return out;
            }
            out.push(idx.iter().map(|&i| eligible[i]).collect());
            let mut k = size;
            while k > 0 && idx[k - 1] == eligible.len() - size + k - 1 {
                k -= 1;
            }
            if k == 0 {
                break;
            }
            idx[k - 1] += 1;
            for m in k..size {
                idx[m] = idx[m - 1] + 1;
            }
        }
    }
    out
}

fn expand(node: &Node, out: &mut Vec<Node>) {
    let t = &node.table;
    let names: Vec<&str> = t.columns().iter().map(|c| c.name.as_str()).collect();
    let mut push = |program: Program, introduced: Vec<String>| {
        if let Ok(table) = program.eval_step(t) {
            let mut all = node.introduced.clone();
            all.extend(introduced);
            all.retain(|c| table.column_index(c).is_some());
            out.push(Node { program, table, introduced: all });
        }
    };
    let child = || Box::new(node.program.clone());

    for &name_col in &names {
        for &value_col in &names {
            if name_col != value_col {
                push(
                    Program::PivotWider { child: child(), name_col: name_col.into(), value_col: value_col.into() },
                    Vec::new(),
                );
            }
        }
    }

    let eligible: Vec<usize> =
        (0..names.len()).filter(|&i| !node.introduced.iter().any(|c| c == names[i])).collect();
    for subset in longer_subsets(&eligible, names.len()) {
        let key = fresh("name", t, &[]);
        let value = fresh("value", t, &[&key]);
        push(
            Program::PivotLonger {
                child: child(),
                columns: subset.iter().map(|&i| names[i].to_string()).collect(),
                key_name: key.clone(),
                value_name: value.clone(),
            },
            vec![key, value],
        );
    }

    for (i, &col) in names.iter().enumerate() {
        for d in present_delimiters(t, i) {
            let left = fresh(&format!("{col}_1"), t, &[]);
            let right = fresh(&format!("{col}_2"), t, &[&left]);
            push(
                Program::Separate {
                    child: child(),
                    col: col.into(),
                    left_name: left.clone(),
                    right_name: right.clone(),
                    delimiter: d.into(),
                },
                vec![left, right],
            );
        }
    }

    for (i, &col) in names.iter().enumerate() {
        for d in present_delimiters(t, i) {
            push(Program::SeparateRows { child: child(), col: col.into(), delimiter: d.into() }, Vec::new());
        }
    }
}
