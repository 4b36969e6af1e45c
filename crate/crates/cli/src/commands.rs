use std::fs;
use std::io::Write;
use std::net::{IpAddr, Ipv4Addr};
use std::path::Path;

use conceptviz::codegen::{
    backend_from_config, generate_candidates, CandidateFormula, DerivationRequest, Generation, Origin, SourceSpec,
};
use conceptviz::concept::{sample_examples, ConceptKind};
use conceptviz::formula::apply_derivation;
use conceptviz::session::{load_session, save_session, ChartCandidate, FormulateOutcome, Session};
use conceptviz::synth::{synthesize, ExampleRelation, SynthError, SynthesisLimits, SynthesisResult};
use conceptviz::table::{Table, TableFormat};
use conceptviz::value::{parse_cell, Value};
use conceptviz_server::api::FormulateRequest;
use serde_json::json;

use crate::fail::{Failure, NEEDS_EXAMPLE, NO_RESULT};
use crate::{config, DeriveArgs, FormulateArgs, ServeArgs, SessionCommand, SynthArgs};

const PREVIEW_ROWS: usize = 10;

fn read_table(path: &Path) -> Result<Table, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::error(format!("{}: {e}", path.display())))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
    Table::parse(&bytes, TableFormat::Csv, name).map_err(|e| Failure::error(format!("{}: {e}", path.display())))
}

fn read_example(path: &Path) -> Result<ExampleRelation, Failure> {
    ExampleRelation::from_table(&read_table(path)?).map_err(|e| Failure::error(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::error(format!("{}: {e}", path.display())))
}

fn csv_string(t: &Table) -> String {
    String::from_utf8_lossy(&t.to_csv()).into_owned()
}

fn indent(text: &str, by: &str) -> String {
    text.lines().map(|l| format!("{by}{l}\n")).collect()
}

pub fn synth(a: SynthArgs) -> Result<(), Failure> {
    let t = read_table(&a.table)?;
    let e = read_example(&a.example)?;
    let limits = SynthesisLimits { max_depth: a.max_depth, ..SynthesisLimits::default() };
    match synthesize(&t, &e, limits) {
        Ok(results) => {
            print_results(&results, a.json);
            Ok(())
        }
        Err(SynthError::NoProgram(d)) => {
            if a.json {
                println!("{}", json!({ "error": "NoProgram", "unreachable": d.unreachable }));
            } else {
                println!("no reshaping program produces the example");
                for u in &d.unreachable {
                    println!("  value {:?} in column {:?} does not occur in the input; nearest: {}", u.value, u.column, u.nearest.join(", "));
                }
            }
            Err(Failure { code: NO_RESULT, message: String::new() })
        }
        Err(e) => Err(e.into()),
    }
}

fn print_results(results: &[SynthesisResult], as_json: bool) {
    if as_json {
        let out: Vec<_> = results
            .iter()
            .enumerate()
            .map(|(i, r)| {
                json!({
                    "rank": i + 1,
                    "program": r.program.to_string(),
                    "binding": r.column_binding,
                    "rank_key": r.rank_key,
                    "preview": r.output.page(0, PREVIEW_ROWS),
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
        return;
    }
    for (i, r) in results.iter().enumerate() {
        println!("{}. {}", i + 1, r.program);
        let binding: Vec<String> = r.column_binding.iter().map(|b| format!("{} <- {}", b.example, b.column)).collect();
        println!("   size {}; binding: {}", r.rank_key.ast_size, binding.join(", "));
        print!("{}", indent(&csv_string(&r.output.page(0, PREVIEW_ROWS)), "   | "));
        if r.output.num_rows() > PREVIEW_ROWS {
            println!("   | ... {} more rows", r.output.num_rows() - PREVIEW_ROWS);
        }
    }
}

fn show_candidates(g: &Generation) {
    for (i, c) in g.candidates.iter().enumerate() {
        eprintln!("[{}] {}", i + 1, c.source_text);
        for s in &c.sample_outputs {
            let inputs: Vec<String> = s.inputs.iter().map(Value::render).collect();
            eprintln!("      ({}) -> {}", inputs.join(", "), s.output.render());
        }
    }
    for r in &g.rejected {
        eprintln!("[rejected: {}] {}", r.reason, r.source_text);
    }
}

fn pick(g: &Generation, n: usize) -> Result<&CandidateFormula, Failure> {
    if n == 0 || n > g.candidates.len() {
        return Err(Failure::error(format!("--pick {n} is out of range; {} candidate(s) survived", g.candidates.len())));
    }
    Ok(&g.candidates[n - 1])
}

pub fn derive(a: DeriveArgs) -> Result<(), Failure> {
    let t = read_table(&a.table)?;
    let mut sources = Vec::new();
    for name in &a.sources {
        let i = t.column_index(name).ok_or_else(|| Failure::error(format!("unknown column `{name}`")))?;
        sources.push(SourceSpec {
            name: name.clone(),
            ty: t.columns()[i].ty,
            samples: sample_examples(t.column_values(i)).into_iter().take(3).collect(),
        });
    }
    let req = DerivationRequest { description: a.desc.clone(), sources, target: a.out.clone() };
    let backend = backend_from_config(&config::backend(a.backend.config.as_deref(), a.backend.backend.as_deref())?);
    let generation = generate_candidates(&req, backend.as_ref())?;
    if a.show_candidates {
        show_candidates(&generation);
    }
    let chosen = pick(&generation, a.pick)?;
    let out = apply_derivation(&t, &chosen.formula, &a.sources, &a.out).map_err(|e| Failure::error(e.to_string()))?;
    std::io::stdout().write_all(&out.to_csv()).map_err(|e| Failure::error(e.to_string()))
}

fn load(path: &Path) -> Result<Session, Failure> {
    load_session(path).map_err(|e| Failure::error(format!("{}: {e}", path.display())))
}

fn store(path: &Path, s: &Session) -> Result<(), Failure> {
    save_session(path, s).map_err(|e| Failure::error(format!("{}: {e}", path.display())))
}

/// Concept references may be ids or names.
fn concept_ref(s: &Session, r: &str) -> Result<String, Failure> {
    if s.shelf.get(r).is_some() {
        return Ok(r.to_string());
    }
    s.shelf.by_name(r).map(|c| c.id.clone()).ok_or_else(|| Failure::error(format!("unknown concept `{r}`")))
}

fn write_candidates(dir: &Path, candidates: &[ChartCandidate]) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::error(format!("{}: {e}", dir.display())))?;
    for (i, c) in candidates.iter().enumerate() {
        let k = i + 1;
        let table = dir.join(format!("candidate-{k}.table.csv"));
        let spec = dir.join(format!("candidate-{k}.spec.json"));
        write_file(&table, &c.table.to_csv())?;
        let mut doc = serde_json::to_string_pretty(&c.spec).expect("serializable");
        doc.push('\n');
        write_file(&spec, doc.as_bytes())?;
        println!("candidate-{k}: {}  ({}, {})", c.provenance.program, table.display(), spec.display());
    }
    Ok(())
}

pub fn formulate(a: FormulateArgs) -> Result<(), Failure> {
    let mut s = load(&a.session)?;
    let text = fs::read_to_string(&a.chart).map_err(|e| Failure::error(format!("{}: {e}", a.chart.display())))?;
    let mut chart: FormulateRequest =
        serde_json::from_str(&text).map_err(|e| Failure::error(format!("{}: {e}", a.chart.display())))?;
    for enc in &mut chart.encodings {
        if let Some(c) = &enc.concept {
            enc.concept = Some(concept_ref(&s, c)?);
        }
    }
    let candidates = match s.formulate(&chart.template, &chart.encodings)? {
        FormulateOutcome::Ready { candidates } => candidates,
        FormulateOutcome::NeedsExampleRelation { columns, prefilled, .. } => match &a.example {
            Some(path) => s.complete_formulate(&read_example(path)?)?,
            None => {
                println!("this chart uses unknown concepts; pass --example with a CSV like:");
                println!("{}", columns.join(","));
                for row in &prefilled {
                    println!("{}", row.iter().map(Value::render).collect::<Vec<_>>().join(","));
                }
                return Err(Failure { code: NEEDS_EXAMPLE, message: String::new() });
            }
        },
    };
    write_candidates(&a.out_dir, &candidates)?;
    if let Some(k) = a.save {
        let c = candidates
            .get(k.wrapping_sub(1))
            .ok_or_else(|| Failure::error(format!("--save {k} is out of range; {} candidate(s)", candidates.len())))?;
        let saved = s.save_chart(&c.id)?;
        store(&a.session, &s)?;
        println!("saved {} as {}", c.id, saved.id);
    }
    Ok(())
}

fn kind_label(k: &ConceptKind) -> &'static str {
    match k {
        ConceptKind::Original => "original",
        ConceptKind::Custom => "custom",
        ConceptKind::Derived { .. } => "derived",
    }
}

fn print_session(s: &Session) {
    println!("session {} (version {}), working table {}", s.id, s.version, s.current_table);
    println!("concepts:");
    for c in s.shelf.concepts() {
        let examples: Vec<String> = c.example_values.iter().map(Value::render).collect();
        println!(
            "  {:<5} {:<20} {:<8} {:<9} {:<8} [{}]",
            c.id,
            c.name,
            kind_label(&c.kind),
            c.semantic_type.as_str(),
            if c.is_known() { "known" } else { "unknown" },
            examples.join(", ")
        );
    }
    if !s.charts.is_empty() {
        println!("charts:");
        for ch in &s.charts {
            println!("  {} {} on {} ({})", ch.id, ch.template, ch.table, ch.provenance.program);
        }
    }
    println!("working table:");
    print!("{}", indent(&csv_string(&s.current().page(0, PREVIEW_ROWS)), "  | "));
}

pub fn session(c: SessionCommand) -> Result<(), Failure> {
    match c {
        SessionCommand::New { table, out, id } => {
            let t = read_table(&table)?;
            let id = id.unwrap_or_else(|| out.file_stem().and_then(|s| s.to_str()).unwrap_or("session").to_string());
            let s = Session::new(&id, t);
            store(&out, &s)?;
            print_session(&s);
            Ok(())
        }
        SessionCommand::Custom { session, name, examples } => {
            let mut s = load(&session)?;
            let values: Vec<Value> = examples.iter().map(|v| parse_cell(v)).filter(|v| !v.is_null()).collect();
            let c = s.create_custom(&name, values)?;
            store(&session, &s)?;
            println!("created {} {}", c.id, c.name);
            Ok(())
        }
        SessionCommand::Derive { session, sources, desc, name, pick: n, formula, backend } => {
            let mut s = load(&session)?;
            let ids = sources.iter().map(|r| concept_ref(&s, r)).collect::<Result<Vec<_>, _>>()?;
            let (text, origin) = match formula {
                Some(f) => (f, Origin::UserEdited),
                None => {
                    let b = backend_from_config(&config::backend(backend.config.as_deref(), backend.backend.as_deref())?);
                    let g = s.preview_derivation(&ids, &desc, &name, b.as_ref())?;
                    let c = pick(&g, n)?;
                    (c.source_text.clone(), c.origin)
                }
            };
            let c = s.commit_derivation(&name, &ids, &desc, &text, origin)?;
            store(&session, &s)?;
            println!("created {} {} = {}", c.id, c.name, text);
            Ok(())
        }
        SessionCommand::Show { session, json } => {
            let s = load(&session)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&s).expect("serializable"));
            } else {
                print_session(&s);
            }
            Ok(())
        }
    }
}

pub fn serve(a: ServeArgs) -> Result<(), Failure> {
    let mut cfg = config::load(a.config.as_deref())?;
    if let Some(b) = a.bind {
        cfg.bind = b;
    }
    if a.expose {
        cfg.bind.set_ip(IpAddr::V4(Ipv4Addr::UNSPECIFIED));
    }
    if let Some(p) = a.port {
        cfg.bind.set_port(p);
    }
    if let Some(d) = a.data_dir {
        cfg.data_dir = d;
    }
    cfg.cors_origins.extend(a.cors_origins);
    config::set_kind(&mut cfg.backend, a.backend.as_deref());
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::error(e.to_string()))?;
    rt.block_on(conceptviz_server::serve(cfg)).map_err(|e| Failure::error(e.to_string()))
}
