use thiserror::Error;

use crate::scm::ValidationReport;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("not a rational or decimal number: {0:?}")]
    Rational(String),
    #[error("{context}: {message} (line {line}, column {column})")]
    Json { context: String, message: String, line: usize, column: usize },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("malformed binding {0:?}, expected VAR=value")]
    Binding(String),
}

impl ParseError {
    pub(crate) fn json(context: &str, e: &serde_json::Error) -> Self {
        ParseError::Json { context: context.to_string(), message: e.to_string(), line: e.line(), column: e.column() }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScmError {
    #[error("model failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("value {value:?} is not in the domain of {variable}")]
    ValueNotInDomain { variable: String, value: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InferenceError {
    #[error(transparent)]
    Model(#[from] ScmError),
    #[error("impossible evidence: P({0}) = 0")]
    ImpossibleEvidence(String),
    #[error("variable {0} is bound twice with different values")]
    ConflictingBinding(String),
    #[error("counterfactual target {0} must be endogenous")]
    TargetNotEndogenous(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InvarianceError {
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("{0} must be an endogenous variable")]
    InputNotEndogenous(String),
    #[error("partitions cover different supports or variables ({0})")]
    SupportMismatch(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AugmentError {
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("example {index} (x = {x:?}) is outside the model support")]
    OutsideSupport { index: usize, x: String },
    #[error("no admissible context for x = {x:?} at threshold {tau}")]
    NoAdmissibleContext { x: String, tau: String },
    #[error("invalid augmentation parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DemoError {
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error(transparent)]
    Invariance(#[from] InvarianceError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("invalid demo parameter: {0}")]
    Parameter(String),
}
