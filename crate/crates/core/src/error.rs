use thiserror::Error;

use crate::linalg::SolverError;

/// One violated parameter rule.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldViolation {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// All violations found in one validation pass.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid parameters: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationError {
    pub violations: Vec<FieldViolation>,
}

impl ValidationError {
    pub fn names_field(&self, field: &str) -> bool {
        self.violations.iter().any(|v| v.field == field)
    }
}

/// Collects violations and converts to a `Result` at the end.
#[derive(Debug, Default)]
pub struct Violations(Vec<FieldViolation>);

impl Violations {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldViolation {
            field: field.into(),
            message: message.into(),
        });
    }

    pub fn check(&mut self, ok: bool, field: &str, message: impl FnOnce() -> String) {
        if !ok {
            self.push(field, message());
        }
    }

    pub fn extend(&mut self, other: ValidationError) {
        self.0.extend(other.violations);
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_result(self) -> Result<(), ValidationError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { violations: self.0 })
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("mesh misalignment: {0}")]
    Misaligned(String),
    #[error("could not read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("could not parse configuration: {0}")]
    Parse(String),
    #[error("waveform: {0}")]
    Waveform(String),
}

/// Failure of a single time step.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("wall contact: min(R+eta) = {min_radius:.6e} at z = {z:.6e}")]
    WallContact { z: f64, min_radius: f64 },
    #[error("linear solve failed: {0}")]
    Solver(#[from] SolverError),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
}
