use rustc_hash::FxHashMap as HashMap;

use crate::table::Table;
use crate::value::CanonicalKey;

use super::{BoundColumn, ExampleRelation};

/// Example cells and output cells mapped to small ids over the example's
/// distinct canonical keys; output cells that never occur in the example are `None`.
pub(crate) struct Encoded {
    pub example_rows: Vec<Vec<u32>>,
    pub out_columns: Vec<Vec<Option<u32>>>,
}

pub(crate) fn encode(e: &ExampleRelation, out: &Table) -> Encoded {
    let mut ids: HashMap<CanonicalKey, u32> = HashMap::default();
    let example_rows = e
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| {
                    let n = ids.len() as u32;
                    *ids.entry(v.canonical_key()).or_insert(n)
                })
                .collect()
        })
        .collect();
    let mut text_cache: HashMap<&str, Option<u32>> = HashMap::default();
    let out_columns = (0..out.num_columns())
        .map(|c| {
            out.column_values(c)
                .map(|v| match v {
                    crate::value::Value::Text(s) => *text_cache
                        .entry(s.as_str())
                        .or_insert_with(|| ids.get(&v.canonical_key()).copied()),
                    crate::value::Value::Null => None,
                    other => ids.get(&other.canonical_key()).copied(),
                })
                .collect()
        })
        .collect();
    Encoded { example_rows, out_columns }
}

fn counts<I: IntoIterator<Item = u32>>(it: I) -> HashMap<u32, usize> {
    let mut m = HashMap::default();
    for x in it {
        *m.entry(x).or_insert(0) += 1;
    }
    m
}

fn contained(need: &HashMap<u32, usize>, have: &HashMap<u32, usize>) -> bool {
    need.iter().all(|(k, n)| have.get(k).is_some_and(|h| h >= n))
}

/// Output columns able to host each example column, by multiset containment of cells.
pub(crate) fn column_candidates(enc: &Encoded, width: usize) -> Vec<Vec<usize>> {
    let have: Vec<HashMap<u32, usize>> =
        enc.out_columns.iter().map(|col| counts(col.iter().flatten().copied())).collect();
    (0..width)
        .map(|j| {
            let need = counts(enc.example_rows.iter().map(|r| r[j]));
            (0..enc.out_columns.len()).filter(|&i| contained(&need, &have[i])).collect()
        })
        .collect()
}

/// Whether some injective assignment maps every example column to a candidate.
pub(crate) fn has_matching(candidates: &[Vec<usize>], n_out: usize) -> bool {
    fn augment(j: usize, cands: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &i in &cands[j] {
            if seen[i] {
                continue;
            }
            seen[i] = true;
            if owner[i].is_none_or(|k| augment(k, cands, seen, owner)) {
                owner[i] = Some(j);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; n_out];
    (0..candidates.len()).all(|j| augment(j, candidates, &mut vec![false; n_out], &mut owner))
}

fn rows_contained(enc: &Encoded, assigned: &[usize]) -> bool {
    let k = assigned.len();
    let mut need: HashMap<&[u32], usize> = HashMap::default();
    for r in &enc.example_rows {
        *need.entry(&r[..k]).or_insert(0) += 1;
    }
    let n_rows = enc.out_columns.first().map_or(0, Vec::len);
    let mut buf = Vec::with_capacity(k);
    for row in 0..n_rows {
        buf.clear();
        for &c in assigned {
            match enc.out_columns[c][row] {
                Some(id) => buf.push(id),
                None => break,
            }
        }
        if buf.len() != k {
            continue;
        }
        if let Some(n) = need.get_mut(buf.as_slice()) {
            *n -= 1;
            if *n == 0 {
                need.remove(buf.as_slice());
                if need.is_empty() {
                    return true;
                }
            }
        }
    }
    need.is_empty()
}

/// Finds an injective binding of example columns to `out` columns under which
/// the example's rows form a sub-multiset of the projected output rows.
/// Exact name matches are tried first, then columns in output order.
pub fn check_subsumption(e: &ExampleRelation, out: &Table) -> Option<Vec<BoundColumn>> {
    if e.columns.is_empty() || e.columns.len() > out.num_columns() {
        return None;
    }
    let enc = encode(e, out);
    let mut candidates = column_candidates(&enc, e.columns.len());
    if !has_matching(&candidates, out.num_columns()) {
        return None;
    }
    for (j, cands) in candidates.iter_mut().enumerate() {
        cands.sort_by_key(|&i| (out.columns()[i].name != e.columns[j], i));
    }

    fn search(enc: &Encoded, cands: &[Vec<usize>], assigned: &mut Vec<usize>) -> bool {
        let j = assigned.len();
        if j == cands.len() {
            return true;
        }
        for &i in &cands[j] {
            if assigned.contains(&i) {
                continue;
            }
            assigned.push(i);
            if rows_contained(enc, assigned) && search(enc, cands, assigned) {
                return true;
            }
            assigned.pop();
        }
        false
    }

    let mut assigned = Vec::new();
    search(&enc, &candidates, &mut assigned).then(|| {
        e.columns
            .iter()
            .zip(assigned)
            .map(|(name, i)| BoundColumn { example: name.clone(), column: out.columns()[i].name.clone() })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reshape::Program;
    use crate::table::fixture_t0;
    use crate::value::Value;

    fn example(cols: &[&str], rows: Vec<Vec<Value>>) -> ExampleRelation {
        ExampleRelation::new(cols.iter().map(|c| c.to_string()).collect(), rows).unwrap()
    }

    fn pivoted() -> Table {
        Program::PivotWider { child: Box::new(Program::Input), name_col: "City".into(), value_col: "Temperature".into() }
            .eval(&fixture_t0())
            .unwrap()
    }

    #[test]
    fn binds_pivoted_temperatures() {
        let e = example(
            &["Seattle Temp", "Atlanta Temp"],
            vec![vec![51.into(), 45.into()], vec![45.into(), 47.into()]],
        );
        let b = check_subsumption(&e, &pivoted()).unwrap();
        assert_eq!(b[0].column, "Seattle");
        assert_eq!(b[1].column, "Atlanta");
    }

    #[test]
    fn multiset_semantics() {
        let t = Table::parse(b"a,b\nx,y\nx,z\n", crate::table::TableFormat::Csv, "t").unwrap();
        let once = example(&["a", "b"], vec![vec!["x".into(), "y".into()], vec!["x".into(), "z".into()]]);
        assert!(check_subsumption(&once, &t).is_some());
        let twice = example(&["a", "b"], vec![vec!["x".into(), "y".into()], vec!["x".into(), "y".into()]]);
        assert!(check_subsumption(&twice, &t).is_none());
    }

    #[test]
    fn values_govern_not_names() {
        let e = example(&["Date", "City"], vec![vec![1.into(), 2.into()], vec![3.into(), 4.into()]]);
        assert!(check_subsumption(&e, &fixture_t0()).is_none());
    }

    #[test]
    fn prefers_exact_names() {
        let t = Table::parse(b"a,b\n1,1\n2,2\n", crate::table::TableFormat::Csv, "t").unwrap();
        let e = example(&["b"], vec![vec![1.into()], vec![2.into()]]);
        assert_eq!(check_subsumption(&e, &t).unwrap()[0].column, "b");
        let e = example(&["z"], vec![vec![1.into()], vec![2.into()]]);
        assert_eq!(check_subsumption(&e, &t).unwrap()[0].column, "a");
    }

    #[test]
    fn matching_needs_distinct_columns() {
        assert!(has_matching(&[vec![0, 1], vec![0]], 2));
        assert!(!has_matching(&[vec![0], vec![0]], 2));
    }
}
