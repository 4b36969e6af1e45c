//! Concept-driven visualization authoring: tables, reshaping synthesis,
//! derived-concept formulas and Vega-Lite assembly.

pub mod chart;
pub mod codegen;
pub mod concept;
pub mod formula;
pub mod reshape;
pub mod session;
pub mod synth;
pub mod table;
pub mod value;
