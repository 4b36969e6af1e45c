use serde_json::json;

use super::*;
use crate::chart::{projection, Aggregate};
use crate::codegen::OfflineBackend;
use crate::table::{fixture_t0, TableFormat};

fn id(s: &Session, name: &str) -> String {
    s.shelf.by_name(name).unwrap_or_else(|| panic!("no concept {name}")).id.clone()
}

fn ints(xs: &[i64]) -> Vec<Value> {
    xs.iter().map(|&x| Value::Int(x)).collect()
}

fn column(t: &Table, name: &str) -> Vec<Value> {
    t.column_values(t.column_index(name).unwrap()).cloned().collect()
}

fn assert_reshape_first(p: &Provenance) {
    let first_derive = p.steps.iter().position(|s| matches!(s, Step::Derive { .. })).unwrap_or(usize::MAX);
    let last_reshape = p.steps.iter().rposition(|s| matches!(s, Step::Reshape { .. }));
    assert!(last_reshape.map_or(true, |r| r < first_derive));
}

/// Session after the two custom temperature concepts have been created.
fn with_customs() -> Session {
    let mut s = Session::new("s", fixture_t0());
    s.create_custom("Atlanta Temp", ints(&[45, 47, 56, 41])).unwrap();
    s.create_custom("Seattle Temp", ints(&[51, 45, 48])).unwrap();
    s
}

fn pivot_example() -> ExampleRelation {
    ExampleRelation::new(vec!["Seattle Temp".into(), "Atlanta Temp".into()], vec![ints(&[51, 45]), ints(&[45, 47])]).unwrap()
}

fn scatter(s: &Session) -> Vec<Encoding> {
    vec![Encoding::field("x", &id(s, "Seattle Temp")), Encoding::field("y", &id(s, "Atlanta Temp"))]
}

/// Runs the pivot scenario through to the saved chart.
fn pivoted() -> Session {
    let mut s = with_customs();
    let enc = scatter(&s);
    s.formulate("scatter", &enc).unwrap();
    let top = s.complete_formulate(&pivot_example()).unwrap()[0].id.clone();
    s.save_chart(&top).unwrap();
    s
}

#[test]
fn known_concepts_are_ready() {
    let mut s = Session::new("s", fixture_t0());
    let enc = [
        Encoding::field("x", &id(&s, "Date")),
        Encoding::field("y", &id(&s, "Temperature")),
        Encoding::field("color", &id(&s, "City")),
    ];
    let FormulateOutcome::Ready { candidates } = s.formulate("scatter", &enc).unwrap() else { panic!("expected ready") };
    assert_eq!(candidates.len(), 1);
    assert_eq!(
        projection(&candidates[0].spec),
        json!({ "mark": "circle", "encoding": { "x": {"field": "Date", "type": "temporal"}, "y": {"field": "Temperature", "type": "quantitative"}, "color": {"field": "City"} } })
    );
    assert_eq!(candidates[0].provenance.program, "none");
    let before = s.shelf.clone();
    s.save_chart(&candidates[0].id).unwrap();
    assert_eq!(s.shelf.concepts().iter().map(DataConcept::is_known).collect::<Vec<_>>(), before.concepts().iter().map(DataConcept::is_known).collect::<Vec<_>>());
}

#[test]
fn unknown_concepts_ask_for_an_example() {
    let mut s = with_customs();
    let enc = scatter(&s);
    let out = s.formulate("scatter", &enc).unwrap();
    let FormulateOutcome::NeedsExampleRelation { columns, prefilled, .. } = out else { panic!("expected example request") };
    assert_eq!(columns, vec!["Seattle Temp", "Atlanta Temp"]);
    assert_eq!(prefilled, vec![vec![Value::Null, Value::Int(45)], vec![Value::Null, Value::Int(47)]]);
    assert!(matches!(
        s.formulate("scatter", &enc[..1]),
        Err(SessionError::Chart(ChartError::MissingRequiredChannel(_)))
    ));
}

#[test]
fn pivot_scenario() {
    let mut s = with_customs();
    let enc = scatter(&s);
    s.formulate("scatter", &enc).unwrap();
    let cands = s.complete_formulate(&pivot_example()).unwrap();
    let top = &cands[0];
    assert_eq!(top.provenance.program, r#"(pivot_wider (input) name_col="City" value_col="Temperature")"#);
    assert_eq!(
        projection(&top.spec),
        json!({ "mark": "circle", "encoding": { "x": {"field": "Seattle Temp", "type": "quantitative"}, "y": {"field": "Atlanta Temp", "type": "quantitative"} } })
    );
    assert_eq!(column(&top.table, "Seattle Temp"), ints(&[51, 45, 48]));
    for c in &cands {
        assert_reshape_first(&c.provenance);
    }

    s.save_chart(&top.id.clone()).unwrap();
    assert!(s.shelf.concepts().iter().all(DataConcept::is_known));
    assert_eq!(s.current().columns().iter().map(|c| c.name.as_str()).collect::<Vec<_>>(), vec!["Date", "Seattle Temp", "Atlanta Temp"]);
    assert!(matches!(s.formulate("scatter", &enc).unwrap(), FormulateOutcome::Ready { .. }));
}

#[test]
fn saving_twice_is_stale() {
    let mut s = with_customs();
    let enc = scatter(&s);
    s.formulate("scatter", &enc).unwrap();
    let cands = s.complete_formulate(&pivot_example()).unwrap();
    s.save_chart(&cands[0].id).unwrap();
    assert_eq!(s.save_chart(&cands[0].id), Err(SessionError::StaleCandidate(cands[0].id.clone())));
    assert_eq!(s.save_chart("k999"), Err(SessionError::UnknownCandidate("k999".into())));
}

#[test]
fn mutations_invalidate_candidates() {
    let mut s = with_customs();
    let enc = scatter(&s);
    s.formulate("scatter", &enc).unwrap();
    let cands = s.complete_formulate(&pivot_example()).unwrap();
    s.create_custom("Other", ints(&[1])).unwrap();
    assert!(matches!(s.save_chart(&cands[0].id), Err(SessionError::StaleCandidate(_))));
    assert_eq!(s.complete_formulate(&pivot_example()), Err(SessionError::NoPendingFormulate));
}

#[test]
fn typo_is_diagnosed() {
    let mut s = with_customs();
    let enc = scatter(&s);
    s.formulate("scatter", &enc).unwrap();
    let e = ExampleRelation::new(vec!["Seattle Temp".into(), "Atlanta Temp".into()], vec![ints(&[51, 45]), ints(&[45, 477])]).unwrap();
    let Err(SessionError::Synth(SynthError::NoProgram(d))) = s.complete_formulate(&e) else { panic!("expected no program") };
    assert_eq!(d.unreachable[0].value, "477");
    let wrong = ExampleRelation::new(vec!["Atlanta Temp".into(), "Seattle Temp".into()], vec![ints(&[45, 51]), ints(&[47, 45])]).unwrap();
    assert!(matches!(s.complete_formulate(&wrong), Err(SessionError::ExampleMismatch { .. })));
}

#[test]
fn ambiguous_examples_give_ranked_candidates() {
    let t = Table::parse(b"k,n,v\na,x,1\na,y,2\nb,x,3\nb,y,4\n", TableFormat::Csv, "amb").unwrap();
    let mut s = Session::new("s", t);
    s.create_custom("K", vec!["a".into(), "b".into()]).unwrap();
    s.create_custom("V", ints(&[1, 3])).unwrap();
    let enc = vec![Encoding::field("x", &id(&s, "K")), Encoding::field("y", &id(&s, "V"))];
    s.formulate("scatter", &enc).unwrap();
    let e = ExampleRelation::new(vec!["K".into(), "V".into()], vec![vec!["a".into(), Value::Int(1)], vec!["b".into(), Value::Int(3)]]).unwrap();
    let cands = s.complete_formulate(&e).unwrap();
    assert!(cands.len() >= 2);
    assert_eq!(cands[0].provenance.program, "(input)");
    assert!(cands[1].provenance.program.starts_with("(pivot_wider"));
}

#[test]
fn derivations_extend_the_working_table() {
    let mut s = pivoted();
    let (sea, atl) = (id(&s, "Seattle Temp"), id(&s, "Atlanta Temp"));
    let g = s.preview_derivation(&[sea.clone(), atl.clone()], "Calculate seattle atlanta temp diff", "Difference", &OfflineBackend).unwrap();
    assert_eq!(g.candidates.len(), 2);
    let d = s.commit_derivation("Difference", &[sea.clone(), atl.clone()], "diff", &g.candidates[0].source_text, Origin::Offline).unwrap();
    assert!(d.is_known());
    assert_eq!(column(s.current(), "Difference"), ints(&[6, -2, -8]));

    let g = s.preview_derivation(&[sea.clone(), atl.clone()], "check which city is warmer, Atlanta, Seattle, or same", "Warmer", &OfflineBackend).unwrap();
    s.commit_derivation("Warmer", &[sea.clone(), atl], "warmer", &g.candidates[0].source_text, Origin::Offline).unwrap();
    assert_eq!(column(s.current(), "Warmer"), vec![Value::from("Seattle"), Value::from("Atlanta"), Value::from("Atlanta")]);

    let enc = [
        Encoding::field("x", &id(&s, "Date")),
        Encoding::field("y", &id(&s, "Difference")),
        Encoding::field("color", &id(&s, "Warmer")),
    ];
    let FormulateOutcome::Ready { candidates } = s.formulate("bar", &enc).unwrap() else { panic!("expected ready") };
    assert_eq!(candidates[0].spec["encoding"]["color"], json!({"field": "Warmer"}));

    let hist = [Encoding::field("x", &id(&s, "Warmer"))];
    let FormulateOutcome::Ready { candidates } = s.formulate("histogram", &hist).unwrap() else { panic!("expected ready") };
    assert_eq!(candidates[0].spec["encoding"]["y"], json!({"aggregate": "count"}));

    let bad = s.commit_derivation("Broken", &[sea], "", "fn(a) = a +", Origin::UserEdited);
    assert!(matches!(bad, Err(SessionError::Formula(FormulaError::Parse { .. }))));
}

#[test]
fn derived_from_unknown_resolves_on_save() {
    let mut s = with_customs();
    let (sea, atl) = (id(&s, "Seattle Temp"), id(&s, "Atlanta Temp"));
    let d = s.commit_derivation("Difference", &[sea, atl], "diff", "fn(a, b) = a - b", Origin::UserEdited).unwrap();
    assert!(!d.is_known());
    assert!(s.current().column("Difference").is_none());

    let enc = [Encoding::field("x", &id(&s, "Date")), Encoding::field("y", &id(&s, "Difference"))];
    let FormulateOutcome::NeedsExampleRelation { columns, .. } = s.formulate("bar", &enc).unwrap() else { panic!() };
    assert_eq!(columns, vec!["Date", "Seattle Temp", "Atlanta Temp"]);
    let e = ExampleRelation::new(
        columns,
        vec![vec![Value::from("2020-01-01"), Value::Int(51), Value::Int(45)], vec![Value::from("2020-01-02"), Value::Int(45), Value::Int(47)]],
    )
    .unwrap();
    let cands = s.complete_formulate(&e).unwrap();
    assert_reshape_first(&cands[0].provenance);
    assert_eq!(column(&cands[0].table, "Difference"), ints(&[6, -2, -8]));
    s.save_chart(&cands[0].id).unwrap();
    assert!(s.shelf.concepts().iter().all(DataConcept::is_known));
    assert!(matches!(s.formulate("bar", &enc).unwrap(), FormulateOutcome::Ready { .. }));
}

#[test]
fn moving_average_line() {
    let mut s = pivoted();
    let sea = id(&s, "Seattle Temp");
    let g = s.preview_derivation(&[sea.clone()], "7-day moving average of seattle temp, centered", "Seattle MA", &OfflineBackend).unwrap();
    assert!(g.candidates[0].source_text.ends_with("list_avg(slice(seattleTempList, index - 3, index + 4))"));
    s.commit_derivation("Seattle MA", &[sea], "ma", &g.candidates[0].source_text, Origin::Offline).unwrap();
    // three rows cannot fill a centered 7-day window
    assert!(column(s.current(), "Seattle MA").iter().all(Value::is_null));
    let enc = [Encoding::field("x", &id(&s, "Date")), Encoding::field("y", &id(&s, "Seattle MA"))];
    assert!(matches!(s.formulate("line", &enc).unwrap(), FormulateOutcome::Ready { .. }));
}

#[test]
fn aggregates_on_axes() {
    let mut s = Session::new("s", fixture_t0());
    let enc = [Encoding::field("x", &id(&s, "City")), Encoding::aggregated("y", Some(&id(&s, "Temperature")), Aggregate::Avg)];
    let FormulateOutcome::Ready { candidates } = s.formulate("bar", &enc).unwrap() else { panic!() };
    assert_eq!(candidates[0].spec["encoding"]["y"], json!({"field": "Temperature", "type": "quantitative", "aggregate": "mean"}));
}

#[test]
fn deletion_and_templates() {
    let mut s = pivoted();
    let sea = id(&s, "Seattle Temp");
    assert!(matches!(s.delete_concept(&sea), Err(SessionError::UsedByChart(..))));
    let city = id(&s, "City");
    s.delete_concept(&city).unwrap();
    let doc = r#"{"layer": [{"mark": "line", "encoding": {"x": "{{channel:x}}", "y": "{{channel:y}}"}}, {"mark": "point", "encoding": {"x": "{{channel:x}}", "y": "{{channel:y}}"}}]}"#;
    let t = s.register_template(doc).unwrap();
    let enc = [Encoding::field("x", &id(&s, "Date")), Encoding::field("y", &sea)];
    assert!(matches!(s.formulate(&t.id, &enc).unwrap(), FormulateOutcome::Ready { .. }));
}

#[test]
fn replay_reproduces_the_session() {
    let mut s = pivoted();
    let (sea, atl) = (id(&s, "Seattle Temp"), id(&s, "Atlanta Temp"));
    s.preview_derivation(&[sea.clone(), atl.clone()], "Calculate seattle atlanta temp diff", "Difference", &OfflineBackend).unwrap();
    s.commit_derivation("Difference", &[sea, atl], "diff", "fn(a, b) = a - b", Origin::Offline).unwrap();
    let enc = [Encoding::field("x", &id(&s, "Date")), Encoding::field("y", &id(&s, "Difference"))];
    s.formulate("bar", &enc).unwrap();
    let again = Session::replay(&s.audit).unwrap();
    assert_eq!(again, s);
    assert!(Session::replay(&[]).is_err());
}

#[test]
fn session_files_round_trip() {
    let s = pivoted();
    let dir = std::env::temp_dir().join(format!("conceptviz-session-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("s.json");
    save_session(&path, &s).unwrap();
    assert_eq!(load_session(&path).unwrap(), s);
    std::fs::write(&path, r#"{"format": "conceptviz-session", "version": 99, "session": {}}"#).unwrap();
    assert!(matches!(load_session(&path), Err(SessionFileError::Unsupported { .. })));
    std::fs::remove_dir_all(&dir).unwrap();
}
