use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A nuisance model has no records to fit on.
    #[error("cannot fit {target}: no records in stratum {stratum}")]
    FitImpossible { target: String, stratum: String },

    #[error("design matrix for {target} is rank deficient")]
    SingularDesign { target: String },

    #[error("fit for {target} did not converge after {iterations} iterations{}", if *.separation { " (complete separation suspected)" } else { "" })]
    NotConverged {
        target: String,
        iterations: usize,
        separation: bool,
    },

    #[error("no model supplied for nuisance {0}")]
    MissingNuisance(String),

    #[error("record {index}: {reason}")]
    DataIntegrity { index: usize, reason: String },

    #[error("positivity violated in stratum {stratum}")]
    Positivity { stratum: String },

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("replication {replication}: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_fold(self, fold: usize) -> Error {
        Error::Fold {
            fold,
            source: Box::new(self),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Error {
        Error::InvalidArgument(msg.into())
    }
}
