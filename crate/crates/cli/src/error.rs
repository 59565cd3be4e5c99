use std::io;

use privirec::costmodel::CostError;
use privirec::dataset::DatasetError;
use privirec::eval::EvalError;
use privirec::protocol::ProtocolError;
use privirec::recommender::RecommenderError;
use thiserror::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_PROTOCOL: u8 = 4;
pub const EXIT_NUMERICAL: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Dataset(#[from] DatasetError),

    #[error(transparent)]
    Protocol(#[from] ProtocolError),

    #[error(transparent)]
    Recommender(#[from] RecommenderError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error(transparent)]
    Cost(#[from] CostError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Dataset(_) | CliError::Io { .. } | CliError::Csv(_) => EXIT_PARSE,
            CliError::Protocol(e) => protocol_code(e),
            CliError::Recommender(e) => recommender_code(e),
            CliError::Eval(EvalError::Recommender(e)) => recommender_code(e),
            CliError::Eval(_) => EXIT_PROTOCOL,
            CliError::Cost(CostError::Parameter(_)) => EXIT_USAGE,
            CliError::Cost(CostError::Mismatch(_)) => EXIT_PROTOCOL,
        }
    }
}

fn protocol_code(e: &ProtocolError) -> u8 {
    match e {
        ProtocolError::Format(_) | ProtocolError::Io(_) => EXIT_PARSE,
        ProtocolError::RankDeficient { .. } | ProtocolError::Numerical(_) | ProtocolError::Linalg(_) => EXIT_NUMERICAL,
        ProtocolError::SecAgg(_) | ProtocolError::Config(_) => EXIT_PROTOCOL,
    }
}

fn recommender_code(e: &RecommenderError) -> u8 {
    match e {
        RecommenderError::Protocol(p) => protocol_code(p),
        RecommenderError::NonFinite { .. } | RecommenderError::Linalg(_) => EXIT_NUMERICAL,
        RecommenderError::Dimension(_) | RecommenderError::Unsupported(_) | RecommenderError::Config(_) => EXIT_PROTOCOL,
    }
}
