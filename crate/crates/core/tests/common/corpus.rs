//! Random reshaping problems: a table, a program of depth 0 to 2 that runs on
//! it, and an example relation sampled from the program's output.

use conceptviz::reshape::{Program, DELIMITERS};
use conceptviz::synth::ExampleRelation;
use conceptviz::table::{Column, Table};
use conceptviz::value::{SemanticType, Value};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn random_table(rng: &mut ChaCha8Rng) -> Table {
    let ncols = rng.gen_range(2..=6);
    let nrows = rng.gen_range(2..=30);
    let mut cols = Vec::new();
    let mut data: Vec<Vec<Value>> = vec![Vec::new(); nrows];
    for c in 0..ncols {
        let kind = rng.gen_range(0..5);
        let (ty, gen): (SemanticType, Box<dyn Fn(&mut ChaCha8Rng, usize) -> Value>) = match kind {
            0 => (SemanticType::Integer, Box::new(|r: &mut ChaCha8Rng, _| Value::Int(r.gen_range(0..20)))),
            1 => (SemanticType::Text, Box::new(|r: &mut ChaCha8Rng, _| Value::Text(["a", "b", "c", "d"][r.gen_range(0..4)].into()))),
            2 => (SemanticType::Text, Box::new(|r: &mut ChaCha8Rng, _| {
                let d = DELIMITERS[r.gen_range(0..3)];
                Value::Text(format!("{}{}{}", ["x", "y", "z"][r.gen_range(0..3)], d, r.gen_range(0..5)))
            })),
            3 => (SemanticType::Integer, Box::new(|_: &mut ChaCha8Rng, i| Value::Int(i as i64))),
            _ => (SemanticType::Text, Box::new(|r: &mut ChaCha8Rng, i| Value::Text(format!("k{}", i / r.gen_range(1..3))))),
        };
        cols.push(Column::new(format!("c{c}"), ty));
        for (i, row) in data.iter_mut().enumerate() {
            row.push(gen(rng, i));
        }
    }
    Table::new("t", cols, data).unwrap()
}

/// Names the sampler itself gives to new columns.
const SAMPLER_NAMES: [&str; 4] = ["key", "val", "left", "right"];

/// Columns `pivot_longer` may list. Lengthening a column the sampler named
/// would turn that invented name into a cell value, which no program over the
/// input alone can be expected to reproduce.
fn longer_eligible(names: &[String]) -> Vec<String> {
    names.iter().filter(|n| !SAMPLER_NAMES.contains(&n.as_str())).cloned().collect()
}

pub fn random_step(rng: &mut ChaCha8Rng, child: Program, t: &Table) -> Program {
    let names: Vec<String> = t.columns().iter().map(|c| c.name.clone()).collect();
    let n = names.len();
    match rng.gen_range(0..4) {
        0 if n >= 2 => {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n);
            while b == a {
                b = rng.gen_range(0..n);
            }
            Program::PivotWider { child: Box::new(child), name_col: names[a].clone(), value_col: names[b].clone() }
        }
        1 if n >= 2 && !longer_eligible(&names).is_empty() => {
            let eligible = longer_eligible(&names);
            let k = rng.gen_range(1..=eligible.len().min(n - 1));
            let cols: Vec<String> = eligible.choose_multiple(rng, k).cloned().collect();
            Program::PivotLonger { child: Box::new(child), columns: cols, key_name: "key".into(), value_name: "val".into() }
        }
        2 => Program::Separate {
            child: Box::new(child),
            col: names[rng.gen_range(0..n)].clone(),
            left_name: "left".into(),
            right_name: "right".into(),
            delimiter: DELIMITERS[rng.gen_range(0..3)].into(),
        },
        _ => Program::SeparateRows {
            child: Box::new(child),
            col: names[rng.gen_range(0..n)].clone(),
            delimiter: DELIMITERS[rng.gen_range(0..3)].into(),
        },
    }
}

pub fn instance(rng: &mut ChaCha8Rng) -> (Table, Program, ExampleRelation) {
    loop {
        let t = random_table(rng);
        let depth = rng.gen_range(0..=2);
        let mut p = Program::Input;
        let mut out = t.clone();
        let mut ok = true;
        for _ in 0..depth {
            let q = random_step(rng, p.clone(), &out);
            match q.eval_step(&out) {
                Ok(o) => {
                    p = q;
                    out = o;
                }
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || out.num_rows() < 2 {
            continue;
        }
        let k = rng.gen_range(1..=out.num_columns().min(3));
        let cols: Vec<usize> = (0..out.num_columns()).collect::<Vec<_>>().choose_multiple(rng, k).copied().collect();
        let nr = rng.gen_range(2..=out.num_rows().min(4));
        let rows: Vec<Vec<Value>> = (0..out.num_rows())
            .collect::<Vec<_>>()
            .choose_multiple(rng, nr)
            .map(|&r| cols.iter().map(|&c| out.rows()[r][c].clone()).collect())
            .collect();
        let names = cols.iter().map(|&c| out.columns()[c].name.clone()).collect();
        if let Ok(e) = ExampleRelation::new(names, rows) {
            return (t, p, e);
        }
    }
}
