use std::io;

use thiserror::Error;
use workscope::classify::pipeline::PipelineError;
use workscope::classify::ClassifyError;
use workscope::config::ConfigError;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const DATA: i32 = 2;
    pub const BACKEND: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("`{stage}` needs the outputs of `{needs}`; run `workscope {needs}` first")]
    Prerequisite { stage: &'static str, needs: &'static str },
    #[error("`{needs}` outputs were produced under a different configuration or inputs; rerun `workscope {needs}` before `{stage}`")]
    Drift { stage: &'static str, needs: &'static str },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Prerequisite { .. } | CliError::Drift { .. } | CliError::Data(_) => exit::DATA,
            CliError::Backend(_) => exit::BACKEND,
        }
    }

    pub fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        CliError::Backend(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Unavailable { .. } => {
                CliError::Backend(format!("{e}; progress is checkpointed, rerun `workscope classify` to resume"))
            }
            PipelineError::ConfigDrift { .. } | PipelineError::CorpusChanged(_) => {
                CliError::Data(format!("{e}; pass --fresh to discard the old labels"))
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_errors!(
    csv::Error,
    serde_json::Error,
    workscope::taxonomy::TaxonomyError,
    workscope::corpus::CorpusError,
    workscope::workforce::WorkforceError,
    workscope::score::ScoreError,
    workscope::report::ReportError,
    workscope::validate::ValidateError,
    workscope::synth::SynthError
);

pub type Result<T, E = CliError> = std::result::Result<T, E>;
