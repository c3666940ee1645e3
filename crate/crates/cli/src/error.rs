use std::fmt;

/// Pipeline stage, used to tag errors and pick the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Data,
    Model,
    Counting,
    Planning,
    Evaluation,
    Output,
    /// A check ran to completion and failed (inexact audit, theory violation).
    Check,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 3,
            Stage::Data => 4,
            Stage::Model => 5,
            Stage::Counting => 6,
            Stage::Planning => 7,
            Stage::Evaluation => 8,
            Stage::Output => 9,
            Stage::Check => 10,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Data => "data",
            Stage::Model => "model",
            Stage::Counting => "counting",
            Stage::Planning => "planning",
            Stage::Evaluation => "evaluation",
            Stage::Output => "output",
            Stage::Check => "check",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {message}")]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

impl StageError {
    pub fn new(stage: Stage, message: impl Into<String>) -> Self {
        Self { stage, message: message.into() }
    }
}

/// Tags a core error with the stage it came from.
pub trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T, E: fmt::Display> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| StageError::new(stage, e.to_string()))
    }
}
