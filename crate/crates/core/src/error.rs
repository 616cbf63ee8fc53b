use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside the admissible domain")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("singular MoM system (condition estimate {condition:.3e})")]
    SingularSystem { condition: f64 },

    #[error(
        "inverse crime: synthesis grid has the same n_side ({0}) as the inversion grid; \
         pass the override flag to allow it"
    )]
    InverseCrime(usize),

    #[error("degenerate dataset: measured scattered field is identically zero")]
    DegenerateDataset,

    #[error("GP training failed: {0}")]
    Training(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("cost oracle failure: {0}")]
    Oracle(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
