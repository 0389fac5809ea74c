//! Brute-force reference semantics.
//!
//! A causal model picks, for every failing test, a non-empty set of the
//! units it executed as the causes of its error; passing tests admit a
//! single row. Formulas are valued per test as sets of models, and
//! probabilities are weighted model fractions. Everything here is computed
//! by enumeration, independently of the closed forms in [`crate::engine`].

mod formula;
mod models;

use thiserror::Error;

pub use formula::{parse_formula, parse_query, Formula, Query};
pub use models::{
    enumerate_models, Evaluator, Model, ModelSpace, ModelWeight, RowDomain, Uniform, Valuation,
    MATERIALIZE_CAP,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("failing test {test:?} covers no unit, so there are no models")]
    NoModels { test: String },
    #[error("{count} models exceed the enumeration cap of {cap}")]
    CapExceeded { count: String, cap: u64 },
    #[error("syntax error at {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("index out of range: {what}{}", position.map(|p| format!(" at {p}")).unwrap_or_default())]
    IndexOutOfRange {
        what: String,
        position: Option<usize>,
    },
    #[error("conditioning on a formula with probability zero")]
    ConditionOnNull,
    #[error("model weights must be positive")]
    NonPositiveWeight,
}

/// How knowledge that a unit is not faulty is expressed as a formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnowledgeReading {
    /// The unit caused the error in no test: `!f_j`.
    Global,
    /// The unit was not a cause in the test being evaluated: `!h_j`.
    PerTest,
}

/// Conjunction of "unit j is not faulty" over `known_clean`, under `reading`.
pub fn knowledge_formula(
    known_clean: impl IntoIterator<Item = usize>,
    tests: usize,
    reading: KnowledgeReading,
) -> Formula {
    Formula::all(known_clean.into_iter().map(|j| match reading {
        KnowledgeReading::Global => Formula::fault(j, tests).negate(),
        KnowledgeReading::PerTest => Formula::Cause(j).negate(),
    }))
}
