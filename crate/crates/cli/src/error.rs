use std::path::PathBuf;
use truend::{AnalyticsError, DataError, OptimiseError, SynthError, TreatmentError, TzbError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}", path = path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Optimise(#[from] OptimiseError),
    #[error(transparent)]
    Treatment(#[from] TreatmentError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_COMPUTATION: i32 = 3;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// 1 for bad invocations or parameters, 2 for unreadable or invalid data
    /// and unwritable outputs, 3 when the computation itself has no answer.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Output { .. } | CliError::Data(_) => EXIT_DATA,
            CliError::Optimise(e) => match e {
                OptimiseError::InvalidSearchSpace(_) | OptimiseError::InvalidQuantile => EXIT_USAGE,
                OptimiseError::Tzb(TzbError::InvalidParams(_)) => EXIT_USAGE,
                OptimiseError::Data(_) | OptimiseError::EmptyPortfolio => EXIT_DATA,
                _ => EXIT_COMPUTATION,
            },
            CliError::Treatment(e) => match e {
                TreatmentError::NegativeThreshold | TreatmentError::InvalidMinLen => EXIT_USAGE,
                TreatmentError::Tzb(TzbError::InvalidParams(_)) => EXIT_USAGE,
                TreatmentError::MismatchedPortfolios | TreatmentError::Data(_) => EXIT_DATA,
                TreatmentError::Tzb(_) => EXIT_COMPUTATION,
            },
            CliError::Analytics(e) => match e {
                AnalyticsError::Data(_) => EXIT_DATA,
                _ => EXIT_COMPUTATION,
            },
            CliError::Synth(e) => match e {
                SynthError::InvalidParams(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            },
        }
    }
}
