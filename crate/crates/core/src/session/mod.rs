//! Authoring sessions: the working table, the concept shelf, saved charts and
//! the formulate / complete / save loop.
//!
//! Every successful command is appended to the audit log as an [`Event`];
//! [`Session::replay`] rebuilds a session by re-running them.

mod file;

use std::collections::{BTreeMap, HashMap, HashSet};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::chart::{assemble_spec, find_template, register_custom_template, ChartError, ChartTemplate, Encoding};
use crate::codegen::{
    generate_candidates, CodegenError, DerivationRequest, Exchange, Generation, GenerationBackend, Origin, Rejection,
    SourceSpec,
};
use crate::concept::{sample_examples, ConceptError, ConceptKind, ConceptShelf, DataConcept, Resolution};
use crate::formula::{apply_derivation, parse_formula, DeriveError, FormulaError};
use crate::synth::{synthesize, ExampleRelation, SynthError, SynthesisLimits, SynthesisResult};
use crate::table::Table;
use crate::value::Value;

pub use file::{load_session, parse_session, save_session, SessionFile, SessionFileError, SESSION_FORMAT, SESSION_FORMAT_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "step", rename_all = "lowercase")]
pub enum Step {
    Reshape { program: String },
    Derive { concept: String, formula: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ConceptBinding {
    pub concept: String,
    pub name: String,
    /// Column of the reshaped table before it was renamed to the concept.
    pub column: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Provenance {
    /// Reshaping program, or `none` when the working table was used as is.
    pub program: String,
    pub steps: Vec<Step>,
    pub binding: Vec<ConceptBinding>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ChartCandidate {
    pub id: String,
    pub version: u64,
    pub template: String,
    pub encodings: Vec<Encoding>,
    pub table: Table,
    pub spec: Json,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum FormulateOutcome {
    Ready { candidates: Vec<ChartCandidate> },
    NeedsExampleRelation {
        columns: Vec<String>,
        concepts: Vec<String>,
        /// Two rows; cells the author still has to fill are null.
        prefilled: Vec<Vec<Value>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PendingFormulate {
    pub template: String,
    pub encodings: Vec<Encoding>,
    pub columns: Vec<String>,
    pub concepts: Vec<String>,
    pub version: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SavedChart {
    pub id: String,
    pub template: String,
    pub encodings: Vec<Encoding>,
    pub table: String,
    pub spec: Json,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Event {
    Created { session: String, table: Table },
    CustomConcept { name: String, examples: Vec<Value> },
    DerivePreview { request: DerivationRequest, exchanges: Vec<Exchange>, candidates: Vec<String>, rejected: Vec<Rejection> },
    DerivedConcept { name: String, sources: Vec<String>, description: String, formula: String, origin: Origin },
    TemplateRegistered { doc: String },
    Formulated { template: String, encodings: Vec<Encoding> },
    FormulateCompleted { example: ExampleRelation },
    ChartSaved { candidate: String },
    ConceptDeleted { concept: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AuditEntry {
    pub seq: u64,
    /// RFC 3339 timestamp.
    pub at: String,
    pub event: Event,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error(transparent)]
    Concept(#[from] ConceptError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Derive(#[from] DeriveError),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("concept `{0}` has no column in the working table")]
    NotInWorkingTable(String),
    #[error("no formulate request is waiting for an example relation")]
    NoPendingFormulate,
    #[error("example relation columns {found:?} do not match {expected:?}")]
    ExampleMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("no unknown concept has example values to prefill")]
    NoUnknownExamples,
    #[error("candidate `{0}` is stale; the session has changed since it was made")]
    StaleCandidate(String),
    #[error("unknown candidate `{0}`")]
    UnknownCandidate(String),
    #[error("every candidate failed: {}", .0.join("; "))]
    NoCandidates(Vec<String>),
    #[error("concept `{0}` is used by saved chart `{1}`")]
    UsedByChart(String, String),
    #[error("cannot replay audit log: {0}")]
    Replay(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Session {
    pub id: String,
    /// Bumped by every change to tables, concepts, templates or charts.
    pub version: u64,
    pub tables: BTreeMap<String, Table>,
    pub current_table: String,
    pub shelf: ConceptShelf,
    pub templates: Vec<ChartTemplate>,
    pub charts: Vec<SavedChart>,
    pub pending: Option<PendingFormulate>,
    pub candidates: Vec<ChartCandidate>,
    pub audit: Vec<AuditEntry>,
    next_table: u64,
    next_chart: u64,
    next_candidate: u64,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Fills the column of each concept in `ids` into `fields`, appending derived
/// columns to `t` as needed.
fn ensure_columns(
    shelf: &ConceptShelf,
    t: &mut Table,
    fields: &mut HashMap<String, String>,
    ids: &[String],
    steps: &mut Vec<Step>,
    depth: usize,
) -> Result<(), SessionError> {
    for id in ids {
        if fields.get(id).is_some_and(|c| t.column(c).is_some()) {
            continue;
        }
        let c = shelf.get(id).ok_or_else(|| SessionError::UnknownConcept(id.clone()))?;
        if let Some(col) = c.column().filter(|col| t.column(col).is_some()) {
            fields.insert(id.clone(), col.to_string());
            continue;
        }
        let ConceptKind::Derived { sources, formula, .. } = &c.kind else {
            return Err(SessionError::NotInWorkingTable(c.name.clone()));
        };
        if depth > shelf.concepts().len() {
            return Err(SessionError::NotInWorkingTable(c.name.clone()));
        }
        ensure_columns(shelf, t, fields, sources, steps, depth + 1)?;
        let cols: Vec<String> = sources.iter().map(|s| fields[s].clone()).collect();
        *t = apply_derivation(t, formula, &cols, &c.name)?;
        fields.insert(id.clone(), c.name.clone());
        steps.push(Step::Derive { concept: c.name.clone(), formula: formula.source().to_string() });
    }
    Ok(())
}

fn encoded_concepts(encodings: &[Encoding]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for e in encodings {
        if let Some(c) = &e.concept {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
    }
    out
}

impl Session {
    pub fn new(id: &str, table: Table) -> Session {
        let mut s = Session::bare(id, table.clone());
        s.log(Event::Created { session: id.to_string(), table });
        s
    }

    fn bare(id: &str, table: Table) -> Session {
        let mut s = Session {
            id: id.to_string(),
            version: 0,
            tables: BTreeMap::new(),
            current_table: String::new(),
            shelf: ConceptShelf::default(),
            templates: Vec::new(),
            charts: Vec::new(),
            pending: None,
            candidates: Vec::new(),
            audit: Vec::new(),
            next_table: 0,
            next_chart: 0,
            next_candidate: 0,
        };
        let tid = s.add_table(table.clone());
        s.current_table = tid.clone();
        s.shelf.load_original(&table, &tid);
        s
    }

    fn log(&mut self, event: Event) {
        let seq = self.audit.len() as u64 + 1;
        self.audit.push(AuditEntry { seq, at: now(), event });
    }

    fn add_table(&mut self, t: Table) -> String {
        self.next_table += 1;
        let id = format!("t{}", self.next_table);
        self.tables.insert(id.clone(), t);
        id
    }

    /// Moves the session forward; outstanding candidates become stale.
    fn bump(&mut self) {
        self.version += 1;
        self.candidates.clear();
        self.pending = None;
    }

    pub fn current(&self) -> &Table {
        &self.tables[&self.current_table]
    }

    fn concept(&self, id: &str) -> Result<&DataConcept, SessionError> {
        self.shelf.get(id).ok_or_else(|| SessionError::UnknownConcept(id.to_string()))
    }

    pub fn create_custom(&mut self, name: &str, examples: Vec<Value>) -> Result<DataConcept, SessionError> {
        let c = self.shelf.create_custom(name, examples.clone())?;
        self.bump();
        self.log(Event::CustomConcept { name: name.to_string(), examples });
        Ok(c)
    }

    /// The code-generation request for deriving `target` from `sources`.
    pub fn derivation_request(&self, sources: &[String], description: &str, target: &str) -> Result<DerivationRequest, SessionError> {
        if self.shelf.by_name(target).is_some() {
            return Err(ConceptError::DuplicateName(target.to_string()).into());
        }
        let sources = sources
            .iter()
            .map(|id| {
                let c = self.concept(id)?;
                Ok(SourceSpec { name: c.name.clone(), ty: c.semantic_type, samples: c.example_values.iter().take(3).cloned().collect() })
            })
            .collect::<Result<Vec<_>, SessionError>>()?;
        Ok(DerivationRequest { description: description.to_string(), sources, target: target.to_string() })
    }

    /// Logs the prompts, completions and verdicts of a derivation preview.
    pub fn record_preview(&mut self, request: &DerivationRequest, outcome: &Result<Generation, CodegenError>) {
        let (exchanges, candidates, rejected) = match outcome {
            Ok(g) => (g.exchanges.clone(), g.candidates.iter().map(|c| c.source_text.clone()).collect(), g.rejected.clone()),
            Err(CodegenError::AllCandidatesRejected { rejected, exchanges }) => (exchanges.clone(), Vec::new(), rejected.clone()),
            Err(_) => return,
        };
        self.log(Event::DerivePreview { request: request.clone(), exchanges, candidates, rejected });
    }

    pub fn preview_derivation(
        &mut self,
        sources: &[String],
        description: &str,
        target: &str,
        backend: &dyn GenerationBackend,
    ) -> Result<Generation, SessionError> {
        let req = self.derivation_request(sources, description, target)?;
        let outcome = generate_candidates(&req, backend);
        self.record_preview(&req, &outcome);
        Ok(outcome?)
    }

    /// Adds a derived concept with formula `source`. When every source is
    /// known the working table gains the new column right away.
    pub fn commit_derivation(
        &mut self,
        name: &str,
        sources: &[String],
        description: &str,
        source: &str,
        origin: Origin,
    ) -> Result<DataConcept, SessionError> {
        let types = sources.iter().map(|id| Ok(self.concept(id)?.semantic_type)).collect::<Result<Vec<_>, SessionError>>()?;
        let formula = parse_formula(source, &types)?;
        self.shelf.check_derivation(name, sources, &formula)?;
        let all_known = sources.iter().all(|id| self.shelf.get(id).is_some_and(DataConcept::is_known));
        let (table_id, examples) = if all_known {
            let mut fields = HashMap::new();
            let mut t = self.current().clone();
            ensure_columns(&self.shelf, &mut t, &mut fields, sources, &mut Vec::new(), 0)?;
            let cols: Vec<String> = sources.iter().map(|s| fields[s].clone()).collect();
            let t = apply_derivation(&t, &formula, &cols, name)?;
            let examples = t.column_index(name).map(|i| sample_examples(t.column_values(i))).unwrap_or_default();
            let tid = self.add_table(t.clone());
            self.current_table = tid.clone();
            self.shelf.rebind(&t, &tid);
            (tid, examples)
        } else {
            (self.current_table.clone(), Vec::new())
        };
        let c = self.shelf.create_derived(name, sources.to_vec(), description, formula, &table_id, examples)?;
        self.bump();
        self.log(Event::DerivedConcept {
            name: name.to_string(),
            sources: sources.to_vec(),
            description: description.to_string(),
            formula: source.to_string(),
            origin,
        });
        Ok(c)
    }

    pub fn register_template(&mut self, doc: &str) -> Result<ChartTemplate, SessionError> {
        let t = register_custom_template(doc)?;
        if let Some(existing) = self.templates.iter().find(|x| x.id == t.id) {
            return Ok(existing.clone());
        }
        self.templates.push(t.clone());
        self.bump();
        self.log(Event::TemplateRegistered { doc: doc.to_string() });
        Ok(t)
    }

    pub fn delete_concept(&mut self, id: &str) -> Result<DataConcept, SessionError> {
        let c = self.concept(id)?.clone();
        if let Some(chart) = self.charts.iter().find(|ch| ch.encodings.iter().any(|e| e.concept.as_deref() == Some(id))) {
            return Err(SessionError::UsedByChart(c.name, chart.id.clone()));
        }
        let removed = self.shelf.delete(id)?;
        self.bump();
        self.log(Event::ConceptDeleted { concept: id.to_string() });
        Ok(removed)
    }

    fn template(&self, id: &str) -> Result<ChartTemplate, SessionError> {
        find_template(id, &self.templates).ok_or_else(|| ChartError::UnknownTemplate(id.to_string()).into())
    }

    fn check_encodings(&self, template: &ChartTemplate, encodings: &[Encoding]) -> Result<(), SessionError> {
        for e in encodings {
            if template.channel(&e.channel).is_none() {
                return Err(ChartError::UnknownChannel(e.channel.clone()).into());
            }
            if let Some(c) = &e.concept {
                self.concept(c)?;
            }
        }
        for ch in &template.channels {
            if ch.required && ch.fixed.is_none() && !encodings.iter().any(|e| e.channel == ch.name) {
                return Err(ChartError::MissingRequiredChannel(ch.name.clone()).into());
            }
        }
        Ok(())
    }

    fn non_derived_roots(&self, id: &str, out: &mut Vec<String>, seen: &mut HashSet<String>) {
        if !seen.insert(id.to_string()) {
            return;
        }
        match self.shelf.get(id) {
            Some(c) if c.is_derived() => {
                for s in c.sources() {
                    self.non_derived_roots(s, out, seen);
                }
            }
            Some(_) => out.push(id.to_string()),
            None => {}
        }
    }

    fn issue(&mut self, template: &str, encodings: &[Encoding], table: Table, spec: Json, provenance: Provenance) -> ChartCandidate {
        self.next_candidate += 1;
        ChartCandidate {
            id: format!("k{}", self.next_candidate),
            version: self.version,
            template: template.to_string(),
            encodings: encodings.to_vec(),
            table,
            spec,
            provenance,
        }
    }

    fn assemble(
        &self,
        template: &ChartTemplate,
        encodings: &[Encoding],
        t: &Table,
        fields: &HashMap<String, String>,
    ) -> Result<Json, SessionError> {
        let view: Vec<DataConcept> = self
            .shelf
            .concepts()
            .iter()
            .map(|c| {
                let mut c = c.clone();
                if let Some(col) = fields.get(&c.id) {
                    c.resolution = Resolution::Known { table: "candidate".into(), column: col.clone() };
                }
                c
            })
            .collect();
        Ok(assemble_spec(template, encodings, &view, t)?)
    }

    /// Either a chart candidate from the working table, or the example
    /// relation the author must fill in when unknown concepts are encoded.
    pub fn formulate(&mut self, template_id: &str, encodings: &[Encoding]) -> Result<FormulateOutcome, SessionError> {
        let template = self.template(template_id)?;
        self.check_encodings(&template, encodings)?;
        let encoded = encoded_concepts(encodings);
        let any_unknown = encoded.iter().any(|id| self.shelf.get(id).is_some_and(|c| !c.is_known()));

        let outcome = if any_unknown {
            let (mut roots, mut seen) = (Vec::new(), HashSet::new());
            for id in &encoded {
                self.non_derived_roots(id, &mut roots, &mut seen);
            }
            let columns: Vec<String> = roots.iter().map(|id| self.shelf.get(id).map(|c| c.name.clone()).unwrap_or_default()).collect();
            // most examples wins; ties go to the concept created first
            let pick = self
                .shelf
                .concepts()
                .iter()
                .filter(|c| roots.contains(&c.id) && !c.is_known() && !c.example_values.is_empty())
                .fold(None::<&DataConcept>, |best, c| match best {
                    Some(b) if b.example_values.len() >= c.example_values.len() => Some(b),
                    _ => Some(c),
                })
                .ok_or(SessionError::NoUnknownExamples)?;
            let at = roots.iter().position(|id| *id == pick.id).unwrap_or(0);
            let prefilled = (0..2)
                .map(|r| {
                    let mut row = vec![Value::Null; roots.len()];
                    row[at] = pick.example_values.get(r).cloned().unwrap_or(Value::Null);
                    row
                })
                .collect();
            self.candidates.clear();
            self.pending = Some(PendingFormulate {
                template: template_id.to_string(),
                encodings: encodings.to_vec(),
                columns: columns.clone(),
                concepts: roots.clone(),
                version: self.version,
            });
            FormulateOutcome::NeedsExampleRelation { columns, concepts: roots, prefilled }
        } else {
            let mut t = self.current().clone();
            let (mut fields, mut steps) = (HashMap::new(), Vec::new());
            ensure_columns(&self.shelf, &mut t, &mut fields, &encoded, &mut steps, 0)?;
            let spec = self.assemble(&template, encodings, &t, &fields)?;
            let provenance = Provenance { program: "none".into(), steps, binding: Vec::new() };
            let c = self.issue(template_id, encodings, t, spec, provenance);
            self.candidates = vec![c.clone()];
            self.pending = None;
            FormulateOutcome::Ready { candidates: vec![c] }
        };
        self.log(Event::Formulated { template: template_id.to_string(), encodings: encodings.to_vec() });
        Ok(outcome)
    }

    fn candidate_from(
        &self,
        pending: &PendingFormulate,
        template: &ChartTemplate,
        r: &SynthesisResult,
    ) -> Result<(Table, Json, Provenance), SessionError> {
        let mut t = r.output.clone();
        let mut binding = Vec::new();
        let mut fields = HashMap::new();
        // two passes so that swapped names cannot collide
        for (k, b) in r.column_binding.iter().enumerate() {
            t = t.rename_column(&b.column, &format!("\u{1}{k}")).map_err(|e| SessionError::NoCandidates(vec![e.to_string()]))?;
        }
        for (k, b) in r.column_binding.iter().enumerate() {
            t = t.rename_column(&format!("\u{1}{k}"), &b.example).map_err(|e| SessionError::NoCandidates(vec![e.to_string()]))?;
            let id = pending.columns.iter().position(|c| *c == b.example).map(|i| pending.concepts[i].clone()).unwrap_or_default();
            fields.insert(id.clone(), b.example.clone());
            binding.push(ConceptBinding { concept: id, name: b.example.clone(), column: b.column.clone() });
        }
        let mut steps = vec![Step::Reshape { program: r.program.to_string() }];
        ensure_columns(&self.shelf, &mut t, &mut fields, &encoded_concepts(&pending.encodings), &mut steps, 0)?;
        let spec = self.assemble(template, &pending.encodings, &t, &fields)?;
        Ok((t, spec, Provenance { program: r.program.to_string(), steps, binding }))
    }

    /// Synthesizes reshaping programs for the pending request's example
    /// relation and turns each into a chart candidate, in ranked order.
    pub fn complete_formulate(&mut self, e: &ExampleRelation) -> Result<Vec<ChartCandidate>, SessionError> {
        self.complete_formulate_with(e, SynthesisLimits::default())
    }

    pub fn complete_formulate_with(&mut self, e: &ExampleRelation, limits: SynthesisLimits) -> Result<Vec<ChartCandidate>, SessionError> {
        let pending = self.pending.clone().ok_or(SessionError::NoPendingFormulate)?;
        if pending.version != self.version {
            return Err(SessionError::NoPendingFormulate);
        }
        if e.columns != pending.columns {
            return Err(SessionError::ExampleMismatch { expected: pending.columns.clone(), found: e.columns.clone() });
        }
        let template = self.template(&pending.template)?;
        let results = synthesize(self.current(), e, limits)?;
        let mut built = Vec::new();
        let mut failures = Vec::new();
        for r in &results {
            match self.candidate_from(&pending, &template, r) {
                Ok(x) => built.push(x),
                Err(err) => failures.push(format!("{}: {err}", r.program)),
            }
        }
        if built.is_empty() {
            return Err(SessionError::NoCandidates(failures));
        }
        let candidates: Vec<ChartCandidate> = built
            .into_iter()
            .map(|(t, spec, prov)| self.issue(&pending.template, &pending.encodings, t, spec, prov))
            .collect();
        self.candidates = candidates.clone();
        self.log(Event::FormulateCompleted { example: e.clone() });
        Ok(candidates)
    }

    /// Saves a candidate: its table becomes the working table and the unknown
    /// concepts it binds become known.
    pub fn save_chart(&mut self, candidate_id: &str) -> Result<SavedChart, SessionError> {
        let Some(c) = self.candidates.iter().find(|c| c.id == candidate_id).cloned() else {
            let issued = candidate_id.strip_prefix('k').and_then(|n| n.parse::<u64>().ok()).is_some_and(|n| n <= self.next_candidate);
            return Err(if issued {
                SessionError::StaleCandidate(candidate_id.to_string())
            } else {
                SessionError::UnknownCandidate(candidate_id.to_string())
            });
        };
        if c.version != self.version {
            return Err(SessionError::StaleCandidate(candidate_id.to_string()));
        }
        let mut t = c.table.clone();
        let tid = format!("t{}", self.next_table + 1);
        let ids: Vec<String> = c.provenance.binding.iter().map(|b| b.concept.clone()).collect();
        let map: HashMap<String, String> = c.provenance.binding.iter().map(|b| (b.concept.clone(), b.name.clone())).collect();
        let mut shelf = self.shelf.clone();
        let dependents = shelf.resolve(&ids, &map, &t, &tid)?;
        let mut fields = HashMap::new();
        for d in &dependents {
            if t.column(&shelf.get(d).map(|x| x.name.clone()).unwrap_or_default()).is_none() {
                // sources living outside this table leave the column to a later formulate
                let _ = ensure_columns(&shelf, &mut t, &mut fields, std::slice::from_ref(d), &mut Vec::new(), 0);
            }
            let name = shelf.get(d).map(|x| x.name.clone()).unwrap_or_default();
            if let Some(i) = t.column_index(&name) {
                shelf.set_examples(d, sample_examples(t.column_values(i)));
            }
        }
        shelf.rebind(&t, &tid);
        self.shelf = shelf;
        let added = self.add_table(t);
        debug_assert_eq!(added, tid);
        self.current_table = tid.clone();
        self.next_chart += 1;
        let chart = SavedChart {
            id: format!("chart{}", self.next_chart),
            template: c.template.clone(),
            encodings: c.encodings.clone(),
            table: tid,
            spec: c.spec.clone(),
            provenance: c.provenance.clone(),
        };
        self.charts.push(chart.clone());
        self.bump();
        self.log(Event::ChartSaved { candidate: candidate_id.to_string() });
        Ok(chart)
    }

    /// Rebuilds a session from its audit log by re-running each command.
    /// The entries themselves, timestamps included, are kept verbatim.
    pub fn replay(entries: &[AuditEntry]) -> Result<Session, SessionError> {
        let (first, rest) = entries.split_first().ok_or_else(|| SessionError::Replay("empty audit log".into()))?;
        let Event::Created { session, table } = &first.event else {
            return Err(SessionError::Replay("audit log does not start with session creation".into()));
        };
        let mut s = Session::bare(session, table.clone());
        s.audit.push(first.clone());
        for entry in rest {
            let n = s.audit.len();
            match &entry.event {
                Event::Created { .. } => return Err(SessionError::Replay(format!("second creation at {}", entry.seq))),
                Event::CustomConcept { name, examples } => drop(s.create_custom(name, examples.clone())?),
                Event::DerivePreview { .. } => {}
                Event::DerivedConcept { name, sources, description, formula, origin } => {
                    drop(s.commit_derivation(name, sources, description, formula, *origin)?)
                }
                Event::TemplateRegistered { doc } => drop(s.register_template(doc)?),
                Event::Formulated { template, encodings } => drop(s.formulate(template, encodings)?),
                Event::FormulateCompleted { example } => drop(s.complete_formulate(example)?),
                Event::ChartSaved { candidate } => drop(s.save_chart(candidate)?),
                Event::ConceptDeleted { concept } => drop(s.delete_concept(concept)?),
            }
            s.audit.truncate(n);
            s.audit.push(entry.clone());
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests;
