use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown parameter label `{0}`")]
    UnknownParameter(String),
    #[error("combiner Gram matrix W W^H is singular")]
    SingularCombiner,
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("mode mismatch: {0}")]
    ModeMismatch(String),
    #[error("parameters not identifiable (equilibrated condition number {condition:.3e})")]
    NotIdentifiable { condition: f64 },
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
