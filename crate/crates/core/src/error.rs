use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model syntax error: {0}")]
    Syntax(String),
    #[error("unsupported model_version {0} (expected 1)")]
    Version(u32),
    #[error("invalid model: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown element `{element}` in state `{state}`")]
    UnknownElement { state: String, element: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("event {index}: timestamp {t_ms} is earlier than the previous event")]
    TimeRegression { index: usize, t_ms: u64 },
    #[error("event {index}: {kind} event mixes relative and absolute input in one trace")]
    MixedModes { index: usize, kind: &'static str },
    #[error("event {index}: fractional delta `{value}`")]
    FractionalDelta { index: usize, value: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EstimatorError {
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("relative mouse motion observed in absolute-touch mode")]
    MoveInTouchMode,
    #[error("{0} event does not match the configured input mode")]
    WrongInputMode(&'static str),
    #[error("click without a touch point in absolute-touch mode")]
    MissingTouchPoint,
    #[error("click would create {count} trackers (limit {limit})")]
    TooManyTrackers { count: usize, limit: usize },
    #[error("invalid estimator config: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("goal step {step}: {msg}")]
    Unreachable { step: usize, msg: String },
    #[error("task error: {0}")]
    Task(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AttackError {
    #[error("element `{0}` is not present in the estimated target state")]
    MissingElement(String),
    #[error("uncertainty region too large to guarantee landing inside `{0}`")]
    RegionTooLarge(String),
    #[error("injection would hit the screen edge while editing `{0}`")]
    WouldClamp(String),
    #[error("value {value} cannot be set on `{element}`: {msg}")]
    BadValue { element: String, value: String, msg: String },
    #[error("invalid attack spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Trace { path: String, source: TraceError },
    #[error("{path}: bad manifest: {msg}")]
    Manifest { path: String, msg: String },
}
