use chronorules_core::eval::EvalError;
use chronorules_core::event_model::EventParseError;
use chronorules_core::features::FeatureError;
use chronorules_core::opus::SearchError;
use chronorules_core::ruleset::RuleSetError;
use chronorules_core::synthgen::CohortError;
use std::io;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    /// The attribute table lacks positives or negatives.
    #[error("{0}")]
    EmptyClass(String),
    #[error("{0}")]
    WindowMismatch(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::EmptyClass(_) | CliError::WindowMismatch(_) => 2,
            CliError::Usage(_) | CliError::Input(_) | CliError::Io { .. } => 1,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

impl From<EventParseError> for CliError {
    fn from(e: EventParseError) -> Self {
        CliError::Input(format!("events: {e}"))
    }
}

impl From<CohortError> for CliError {
    fn from(e: CohortError) -> Self {
        CliError::Input(format!("cohort: {e}"))
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::OneClass => CliError::EmptyClass(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::NoPositives => CliError::EmptyClass(e.to_string()),
            SearchError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<RuleSetError> for CliError {
    fn from(e: RuleSetError) -> Self {
        match e {
            RuleSetError::Search(s) => s.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Learn(r) => r.into(),
            EvalError::WindowMismatch { .. } => CliError::WindowMismatch(e.to_string()),
            EvalError::ClassTooSmall { .. }
            | EvalError::NoTrainingPositives(_)
            | EvalError::NoChronic => CliError::EmptyClass(e.to_string()),
            EvalError::TooFewFolds(_) => CliError::Usage(e.to_string()),
        }
    }
}
