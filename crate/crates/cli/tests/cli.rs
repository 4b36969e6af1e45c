use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value as Json};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_conceptviz"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).env_remove("OPENAI_API_KEY").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn projection(doc: &Json) -> Json {
    let mut enc = serde_json::Map::new();
    for (ch, v) in doc["encoding"].as_object().unwrap() {
        let mut m = serde_json::Map::new();
        for k in ["field", "type"] {
            if let Some(x) = v.get(k) {
                m.insert(k.into(), x.clone());
            }
        }
        enc.insert(ch.clone(), Json::Object(m));
    }
    json!({ "mark": doc["mark"], "encoding": enc })
}

#[test]
fn synth_prints_the_pivot() {
    let dir = tempfile::tempdir().unwrap();
    let t0 = fixture("t0.csv");
    let o = run(&["synth", "--table", t0.to_str().unwrap(), "--example", fixture("pivot_example.csv").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let first = stdout(&o).lines().next().unwrap().to_string();
    assert_eq!(first, r#"1. (pivot_wider (input) name_col="City" value_col="Temperature")"#);

    let json_out = run(
        &["synth", "--table", t0.to_str().unwrap(), "--example", fixture("pivot_example.csv").to_str().unwrap(), "--json"],
        dir.path(),
    );
    let parsed: Json = serde_json::from_slice(&json_out.stdout).unwrap();
    assert_eq!(parsed[0]["binding"][0], json!({"example": "Seattle Temp", "column": "Seattle"}));
}

#[test]
fn synth_identity_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let ex = dir.path().join("id.csv");
    std::fs::write(&ex, "City,Temperature\nSeattle,51\nAtlanta,45\n").unwrap();
    let t0 = fixture("t0.csv");
    let o = run(&["synth", "--table", t0.to_str().unwrap(), "--example", ex.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("1. (input)\n"));

    let typo = run(&["synth", "--table", t0.to_str().unwrap(), "--example", fixture("typo_example.csv").to_str().unwrap()], dir.path());
    assert_eq!(typo.status.code(), Some(2));
    assert!(stdout(&typo).contains("\"477\""));

    let missing = run(&["synth", "--table", "nope.csv", "--example", ex.to_str().unwrap()], dir.path());
    assert_eq!(missing.status.code(), Some(1));
    let usage = run(&["synth", "--table"], dir.path());
    assert_eq!(usage.status.code(), Some(64));
}

fn pivoted_csv(dir: &Path) -> PathBuf {
    let p = dir.join("pivoted.csv");
    std::fs::write(&p, "Date,Seattle Temp,Atlanta Temp\n2020-01-01,51,45\n2020-01-02,45,47\n2020-01-03,48,56\n").unwrap();
    p
}

#[test]
fn derive_difference() {
    let dir = tempfile::tempdir().unwrap();
    let table = pivoted_csv(dir.path());
    let args = [
        "derive",
        "--table",
        table.to_str().unwrap(),
        "--sources",
        "Seattle Temp,Atlanta Temp",
        "--desc",
        "calculate seattle atlanta temp diff",
        "--out",
        "Difference",
    ];
    let o = run(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let diffs: Vec<String> = stdout(&o).lines().skip(1).map(|l| l.rsplit(',').next().unwrap().to_string()).collect();
    assert_eq!(diffs, ["6", "-2", "-8"]);

    let mut second = args.to_vec();
    second.extend(["--pick", "2", "--show-candidates"]);
    let o = run(&second, dir.path());
    let diffs: Vec<String> = stdout(&o).lines().skip(1).map(|l| l.rsplit(',').next().unwrap().to_string()).collect();
    assert_eq!(diffs, ["6", "2", "8"]);
    let listing = String::from_utf8_lossy(&o.stderr);
    assert!(listing.contains("[1] fn(seattleTemp, atlantaTemp) = seattleTemp - atlantaTemp"));
    assert!(listing.contains("(45, 47) -> -2"));

    let mut unknown = args.to_vec();
    unknown[4] = "Seattle Temp,Nowhere";
    assert_eq!(run(&unknown, dir.path()).status.code(), Some(1));

    let mut remote = args.to_vec();
    remote.extend(["--backend", "remote"]);
    let o = run(&remote, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("backend unavailable"));
}

#[test]
fn formulate_pivot_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let t0 = fixture("t0.csv");
    assert!(run(&["session", "new", "--table", t0.to_str().unwrap(), "--out", "s.json"], d).status.success());
    assert!(run(&["session", "custom", "--session", "s.json", "--name", "Atlanta Temp", "--examples", "45,47,56,41"], d).status.success());
    assert!(run(&["session", "custom", "--session", "s.json", "--name", "Seattle Temp", "--examples", "51,45,48"], d).status.success());
    std::fs::write(
        d.join("chart.json"),
        r#"{"template": "scatter", "encodings": [{"channel": "x", "concept": "Seattle Temp"}, {"channel": "y", "concept": "Atlanta Temp"}]}"#,
    )
    .unwrap();

    let ask = run(&["formulate", "--session", "s.json", "--chart", "chart.json"], d);
    assert_eq!(ask.status.code(), Some(3));
    assert!(stdout(&ask).contains("Seattle Temp,Atlanta Temp\n,45\n,47\n"));

    let ex = fixture("pivot_example.csv");
    let o = run(&["formulate", "--session", "s.json", "--chart", "chart.json", "--example", ex.to_str().unwrap(), "--save", "1"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let spec: Json = serde_json::from_str(&std::fs::read_to_string(d.join("candidate-1.spec.json")).unwrap()).unwrap();
    assert_eq!(
        projection(&spec),
        json!({"mark": "circle", "encoding": {"x": {"field": "Seattle Temp", "type": "quantitative"}, "y": {"field": "Atlanta Temp", "type": "quantitative"}}})
    );
    assert_eq!(
        std::fs::read_to_string(d.join("candidate-1.table.csv")).unwrap(),
        "Date,Seattle Temp,Atlanta Temp\n2020-01-01,51,45\n2020-01-02,45,47\n2020-01-03,48,56\n"
    );

    let again = run(&["formulate", "--session", "s.json", "--chart", "chart.json", "--out-dir", "again"], d);
    assert_eq!(again.status.code(), Some(0));
    assert!(d.join("again/candidate-1.spec.json").exists());
    assert!(!d.join("again/candidate-2.spec.json").exists());

    std::fs::write(d.join("bad.json"), r#"{"template": "scatter", "encodings": [{"channel": "x", "concept": "Seattle Temp"}]}"#).unwrap();
    assert_eq!(run(&["formulate", "--session", "s.json", "--chart", "bad.json"], d).status.code(), Some(1));
}

#[test]
fn formulate_ambiguous_example_writes_ranked_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("amb.csv"), "k,n,v\na,x,1\na,y,2\nb,x,3\nb,y,4\n").unwrap();
    std::fs::write(d.join("ex.csv"), "K,V\na,1\nb,3\n").unwrap();
    assert!(run(&["session", "new", "--table", "amb.csv", "--out", "s.json"], d).status.success());
    assert!(run(&["session", "custom", "--session", "s.json", "--name", "K", "--examples", "a,b"], d).status.success());
    assert!(run(&["session", "custom", "--session", "s.json", "--name", "V", "--examples", "1,3"], d).status.success());
    std::fs::write(d.join("chart.json"), r#"{"template": "scatter", "encodings": [{"channel": "x", "concept": "K"}, {"channel": "y", "concept": "V"}]}"#).unwrap();
    let o = run(&["formulate", "--session", "s.json", "--chart", "chart.json", "--example", "ex.csv"], d);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert!(lines.len() >= 2);
    assert!(lines[0].starts_with("candidate-1: (input)"));
    assert!(lines[1].starts_with("candidate-2: (pivot_wider"));
    for k in 1..=lines.len() {
        assert!(d.join(format!("candidate-{k}.table.csv")).exists());
        assert!(d.join(format!("candidate-{k}.spec.json")).exists());
    }
}

#[test]
fn session_derive_with_offline_backend() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let table = pivoted_csv(d);
    assert!(run(&["session", "new", "--table", table.to_str().unwrap(), "--out", "s.json"], d).status.success());
    let o = run(
        &["session", "derive", "--session", "s.json", "--sources", "Seattle Temp,Atlanta Temp", "--desc", "calculate seattle atlanta temp diff", "--name", "Difference"],
        d,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let shown = run(&["session", "show", "--session", "s.json", "--json"], d);
    let s: Json = serde_json::from_slice(&shown.stdout).unwrap();
    let diff = s["shelf"]["concepts"].as_array().unwrap().iter().find(|c| c["name"] == "Difference").unwrap();
    assert_eq!(diff["example_values"], json!([6, -2, -8]));
    let rejected = run(
        &["session", "derive", "--session", "s.json", "--sources", "Seattle Temp", "--desc", "something unheard of", "--name", "X"],
        d,
    );
    assert_eq!(rejected.status.code(), Some(2));
}
