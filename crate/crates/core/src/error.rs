use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("resample size {size} exceeds population {population} without replacement")]
    ResampleSize { size: usize, population: usize },
    #[error("hold-out split {n1} + {n2} does not partition {rows} rows")]
    Partition { n1: usize, n2: usize, rows: usize },
    #[error("empty data set")]
    EmptyData,
    #[error("degenerate box: coordinate {coord} has interval [{lo}, {hi}]")]
    DegenerateBox { coord: usize, lo: f64, hi: f64 },
    #[error("{0} is not covered by a closed form")]
    NotCovered(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
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
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with any context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by invalid inputs or settings rather than by
    /// a computation going wrong.
    pub fn is_config(&self) -> bool {
        matches!(
            self.root(),
            Error::Dimension(_)
                | Error::Parameter(_)
                | Error::ResampleSize { .. }
                | Error::Partition { .. }
                | Error::EmptyData
                | Error::Config(_)
                | Error::Unsupported(_)
                | Error::Json(_)
        )
    }
}
