//! Derivation prompts, completion backends and executable-candidate filtering.

mod offline;
mod remote;

use std::collections::HashSet;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{parse_formula, Formula, FormulaError, BUILTINS};
use crate::value::{SemanticType, Value};

pub use offline::{offline_generate, OfflineBackend};
pub use remote::RemoteBackend;

/// Completions requested per prompt.
pub const COMPLETIONS_PER_PROMPT: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SourceSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: SemanticType,
    /// At most three sample values from the concept's domain.
    pub samples: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DerivationRequest {
    pub description: String,
    pub sources: Vec<SourceSpec>,
    pub target: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Remote,
    Offline,
    UserEdited,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Simple,
    Analytical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SampleOutput {
    pub inputs: Vec<Value>,
    pub output: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CandidateFormula {
    pub formula: Formula,
    pub source_text: String,
    pub sample_outputs: Vec<SampleOutput>,
    pub origin: Origin,
    pub prompt: PromptKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Rejection {
    pub source_text: String,
    /// `ParseError`, `UnknownIdentifier`, `TypeError`, `ArityError`, `EvalError` or `AllNull`.
    pub reason: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Exchange {
    pub prompt: String,
    pub completions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Generation {
    pub candidates: Vec<CandidateFormula>,
    pub rejected: Vec<Rejection>,
    pub exchanges: Vec<Exchange>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodegenError {
    #[error("invalid derivation request: {0}")]
    InvalidRequest(String),
    #[error("generation backend unavailable: {message}")]
    BackendUnavailable { message: String, retryable: bool },
    #[error("all {} candidate formulas were rejected", .rejected.len())]
    AllCandidatesRejected { rejected: Vec<Rejection>, exchanges: Vec<Exchange> },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{message}")]
pub struct BackendError {
    pub message: String,
    pub retryable: bool,
}

/// Something that continues a prompt; returns up to `n` completion texts.
pub trait GenerationBackend: Send + Sync {
    fn complete(&self, prompt: &str, n: usize) -> Result<Vec<String>, BackendError>;
    fn origin(&self) -> Origin;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Offline,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Offline,
            endpoint: "https://api.openai.com/v1/completions".into(),
            model: "gpt-3.5-turbo-instruct".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 30,
        }
    }
}

pub fn backend_from_config(cfg: &BackendConfig) -> Box<dyn GenerationBackend> {
    match cfg.kind {
        BackendKind::Offline => Box::new(OfflineBackend),
        BackendKind::Remote => Box::new(RemoteBackend::new(cfg.clone())),
    }
}

const RESERVED: [&str; 13] = ["if", "then", "else", "let", "in", "and", "or", "not", "true", "false", "null", "fn", "index"];

/// Lower-camel-case identifier for a concept name: `"Seattle Temp"` → `seattleTemp`.
pub fn camel_identifier(name: &str) -> String {
    let mut out = String::new();
    for (i, word) in name.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).enumerate() {
        if i == 0 {
            out.push_str(&word.to_lowercase());
        } else {
            let mut cs = word.chars();
            if let Some(first) = cs.next() {
                out.extend(first.to_uppercase());
                out.push_str(cs.as_str());
            }
        }
    }
    if out.is_empty() || !out.starts_with(|c: char| c.is_alphabetic()) {
        out.insert(0, 'p');
    }
    out
}

fn unique(base: String, taken: &mut HashSet<String>) -> String {
    let mut name = base.clone();
    let mut k = 2;
    while RESERVED.contains(&name.as_str()) || taken.contains(&name) {
        name = format!("{base}{k}");
        k += 1;
    }
    taken.insert(name.clone());
    name
}

/// Parameter identifiers for the sources, plus one list identifier each.
pub fn parameter_names(sources: &[SourceSpec]) -> (Vec<String>, Vec<String>) {
    let mut taken = HashSet::new();
    let params: Vec<String> = sources.iter().map(|s| unique(camel_identifier(&s.name), &mut taken)).collect();
    let lists = params.iter().map(|p| unique(format!("{p}List"), &mut taken)).collect();
    (params, lists)
}

fn grammar_lines() -> String {
    let builtins: Vec<&str> = BUILTINS.iter().map(|(n, _)| *n).collect();
    format!(
        "# grammar: one expression; if c then a else b, let x = e in body, and or not, == != < <= > >=, + - * / %, 'text', numbers, true false null\n# builtins: {}\n",
        builtins.join(" ")
    )
}

fn render_samples(samples: &[Value]) -> String {
    samples.iter().take(3).map(Value::render).collect::<Vec<_>>().join(", ")
}

/// The simple prompt and the analytical prompt for a derivation request.
pub fn build_prompts(req: &DerivationRequest) -> (String, String) {
    let (params, lists) = parameter_names(&req.sources);
    let description: String = req.description.lines().collect::<Vec<_>>().join(" ");
    let mut head = format!("# {}\n", description.trim());
    for (p, s) in params.iter().zip(&req.sources) {
        head.push_str(&format!("# @param {p} examples: {}\n", render_samples(&s.samples)));
    }
    let mut simple = head.clone();
    simple.push_str(&grammar_lines());
    simple.push_str(&format!("fn({}) =", params.join(", ")));

    let mut analytical = head;
    for (l, p) in lists.iter().zip(&params) {
        analytical.push_str(&format!("# @param {l}: the list of all {p}\n"));
    }
    analytical.push_str(&grammar_lines());
    analytical.push_str(&format!("fn({}, index, {}) =", params.join(", "), lists.join(", ")));
    (simple, analytical)
}

fn header_line(prompt: &str) -> &str {
    prompt.lines().last().unwrap_or("")
}

fn sample_tuples(req: &DerivationRequest) -> (Vec<Vec<Value>>, Vec<Vec<Value>>) {
    let n = req.sources.iter().map(|s| s.samples.len().min(3)).max().unwrap_or(0);
    let columns: Vec<Vec<Value>> = req
        .sources
        .iter()
        .map(|s| (0..n).map(|k| s.samples.get(k).cloned().unwrap_or(Value::Null)).collect())
        .collect();
    let tuples = (0..n).map(|k| columns.iter().map(|c| c[k].clone()).collect()).collect();
    (tuples, columns)
}

fn reject(source_text: &str, reason: &str, message: String) -> Rejection {
    Rejection { source_text: source_text.to_string(), reason: reason.to_string(), message }
}

/// Parses `source_text` and runs it on the request's sample tuples. Windowed
/// formulas are evaluated without the strict-window rule here, since three
/// samples rarely fill a window.
pub fn check_candidate(
    req: &DerivationRequest,
    source_text: &str,
    origin: Origin,
) -> Result<CandidateFormula, Rejection> {
    let types: Vec<SemanticType> = req.sources.iter().map(|s| s.ty).collect();
    let formula = parse_formula(source_text, &types)
        .map_err(|e: FormulaError| reject(source_text, e.code(), e.to_string()))?;
    let (tuples, columns) = sample_tuples(req);
    let lists: Vec<&[Value]> =
        if formula.is_analytical() { columns.iter().map(Vec::as_slice).collect() } else { Vec::new() };
    let mut sample_outputs = Vec::with_capacity(tuples.len());
    for (k, inputs) in tuples.into_iter().enumerate() {
        let output = formula
            .eval_row_lenient(&inputs, k, &lists)
            .map_err(|e| reject(source_text, "EvalError", e.to_string()))?;
        sample_outputs.push(SampleOutput { inputs, output });
    }
    if !sample_outputs.is_empty() && sample_outputs.iter().all(|s| s.output.is_null()) {
        return Err(reject(source_text, "AllNull", "formula returns null on every sample".into()));
    }
    let prompt = if formula.is_analytical() { PromptKind::Analytical } else { PromptKind::Simple };
    Ok(CandidateFormula { formula, source_text: source_text.to_string(), sample_outputs, origin, prompt })
}

fn validate(req: &DerivationRequest) -> Result<(), CodegenError> {
    if req.description.trim().is_empty() {
        return Err(CodegenError::InvalidRequest("description is empty".into()));
    }
    if req.sources.is_empty() {
        return Err(CodegenError::InvalidRequest("at least one source concept is required".into()));
    }
    Ok(())
}

fn output_signature(c: &CandidateFormula) -> Vec<(String, String)> {
    c.sample_outputs
        .iter()
        .map(|s| (s.output.semantic_type().map_or("null", |t| t.as_str()).to_string(), s.output.render()))
        .collect()
}

/// Sends both prompts, keeps completions that parse and run on the samples,
/// and drops later candidates whose sample outputs repeat an earlier one.
pub fn generate_candidates(req: &DerivationRequest, backend: &dyn GenerationBackend) -> Result<Generation, CodegenError> {
    validate(req)?;
    let (simple, analytical) = build_prompts(req);
    let (a, b) = std::thread::scope(|s| {
        let h = s.spawn(|| backend.complete(&analytical, COMPLETIONS_PER_PROMPT));
        let a = backend.complete(&simple, COMPLETIONS_PER_PROMPT);
        (a, h.join().unwrap_or_else(|_| Err(BackendError { message: "backend panicked".into(), retryable: false })))
    });
    let to_err = |e: BackendError| CodegenError::BackendUnavailable { message: e.message, retryable: e.retryable };
    let exchanges = vec![
        Exchange { prompt: simple.clone(), completions: a.map_err(to_err)? },
        Exchange { prompt: analytical.clone(), completions: b.map_err(to_err)? },
    ];

    let mut candidates: Vec<CandidateFormula> = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = HashSet::new();
    for ex in &exchanges {
        let header = header_line(&ex.prompt);
        for completion in &ex.completions {
            let body = completion.split("\n\n").next().unwrap_or("").trim();
            let text = format!("{header} {body}");
            match check_candidate(req, &text, backend.origin()) {
                Ok(c) => {
                    if seen.insert(output_signature(&c)) {
                        candidates.push(c);
                    }
                }
                Err(r) => rejected.push(r),
            }
        }
    }
    if candidates.is_empty() {
        return Err(CodegenError::AllCandidatesRejected { rejected, exchanges });
    }
    Ok(Generation { candidates, rejected, exchanges })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temps() -> DerivationRequest {
        DerivationRequest {
            description: "Calculate seattle atlanta temp diff".into(),
            sources: vec![
                SourceSpec { name: "Seattle Temp".into(), ty: SemanticType::Integer, samples: vec![Value::Int(51), Value::Int(45), Value::Int(48)] },
                SourceSpec { name: "Atlanta Temp".into(), ty: SemanticType::Integer, samples: vec![Value::Int(45), Value::Int(47), Value::Int(56)] },
            ],
            target: "Difference".into(),
        }
    }

    #[test]
    fn simple_prompt_lists_examples() {
        let (simple, analytical) = build_prompts(&temps());
        assert!(simple.starts_with("# Calculate seattle atlanta temp diff\n"));
        assert!(simple.contains("# @param seattleTemp examples: 51, 45, 48\n"));
        assert!(simple.contains("# @param atlantaTemp examples: 45, 47, 56\n"));
        assert!(simple.ends_with("fn(seattleTemp, atlantaTemp) ="));
        assert!(!simple.contains("list of all"));
        assert!(analytical.contains("# @param seattleTempList: the list of all seattleTemp\n"));
        assert!(analytical.ends_with("fn(seattleTemp, atlantaTemp, index, seattleTempList, atlantaTempList) ="));
    }

    #[test]
    fn identifiers() {
        assert_eq!(camel_identifier("A B C!"), "aBC");
        assert_eq!(camel_identifier("Seattle Temp"), "seattleTemp");
        assert_eq!(camel_identifier("2020 sales"), "p2020Sales");
        assert_eq!(camel_identifier("!!"), "p");
        let src = |n: &str| SourceSpec { name: n.into(), ty: SemanticType::Integer, samples: vec![] };
        let (p, l) = parameter_names(&[src("index"), src("a b"), src("A-B"), src("aB List"), src("a b list")]);
        assert_eq!(p, vec!["index2", "aB", "aB2", "abList", "aBList"]);
        assert_eq!(l, vec!["index2List", "aBList2", "aB2List", "abListList", "aBListList"]);
    }

    #[test]
    fn offline_difference_yields_two_candidates() {
        let g = generate_candidates(&temps(), &OfflineBackend).unwrap();
        let texts: Vec<&str> = g.candidates.iter().map(|c| c.source_text.as_str()).collect();
        assert_eq!(
            texts,
            vec!["fn(seattleTemp, atlantaTemp) = seattleTemp - atlantaTemp", "fn(seattleTemp, atlantaTemp) = abs(seattleTemp - atlantaTemp)"]
        );
        let outs: Vec<Value> = g.candidates[0].sample_outputs.iter().map(|s| s.output.clone()).collect();
        assert_eq!(outs, vec![Value::Int(6), Value::Int(-2), Value::Int(-8)]);
        assert!(g.candidates.iter().all(|c| c.origin == Origin::Offline));
        assert_eq!(g.exchanges.len(), 2);
    }

    #[test]
    fn candidates_round_trip() {
        let req = temps();
        for c in generate_candidates(&req, &OfflineBackend).unwrap().candidates {
            let again = check_candidate(&req, &c.source_text, Origin::UserEdited).unwrap();
            assert_eq!(again.sample_outputs, c.sample_outputs);
        }
    }

    struct Canned(Vec<&'static str>);

    impl GenerationBackend for Canned {
        fn complete(&self, prompt: &str, _n: usize) -> Result<Vec<String>, BackendError> {
            Ok(if prompt.contains("index") { Vec::new() } else { self.0.iter().map(|s| s.to_string()).collect() })
        }
        fn origin(&self) -> Origin {
            Origin::Remote
        }
    }

    #[test]
    fn filtering_rejects_and_dedups() {
        let backend = Canned(vec!["frobnicate(seattleTemp)", "seattleTemp - atlantaTemp", " (seattleTemp - atlantaTemp)\n\nrest", "null", "seattleTemp +"]);
        let g = generate_candidates(&temps(), &backend).unwrap();
        assert_eq!(g.candidates.len(), 1);
        let reasons: Vec<&str> = g.rejected.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(reasons, vec!["UnknownIdentifier", "AllNull", "ParseError"]);
    }

    #[test]
    fn nothing_usable_is_an_error() {
        let backend = Canned(vec!["frobnicate(seattleTemp)"]);
        assert!(matches!(generate_candidates(&temps(), &backend), Err(CodegenError::AllCandidatesRejected { .. })));
        let mut req = temps();
        req.description = " ".into();
        assert!(matches!(generate_candidates(&req, &OfflineBackend), Err(CodegenError::InvalidRequest(_))));
    }

    #[test]
    fn offline_is_deterministic() {
        let a = generate_candidates(&temps(), &OfflineBackend).unwrap();
        let b = generate_candidates(&temps(), &OfflineBackend).unwrap();
        assert_eq!(a, b);
    }
}
