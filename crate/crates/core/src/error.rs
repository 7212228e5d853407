use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parameters (lambda = {lambda}, gamma = {gamma}) violate the feasibility condition (lhs = {lhs:.6e} > 0)")]
    Infeasible { lambda: f64, gamma: f64, lhs: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("enumeration over 2^{n} masks refused: n must be at most {max}")]
    EnumerationTooLarge { n: usize, max: usize },

    #[error("interpolation violated: hypothesis {hypothesis} has training loss {train_loss} under mask {mask}")]
    InterpolationViolation {
        hypothesis: String,
        train_loss: f64,
        mask: String,
    },

    #[error("prior assigns zero mass to hypothesis {0} that the posterior can output")]
    SupportMismatch(usize),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("sigma search failed: no sigma >= {floor:e} keeps the loss within {threshold} of the reference")]
    SigmaSearchFailed { floor: f64, threshold: f64 },

    #[error("replica {replica} failed: {source}")]
    Replica {
        replica: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("IDX format error in {field} at byte offset {offset}: {message}")]
    IdxFormat {
        field: &'static str,
        offset: u64,
        message: String,
    },

    #[error("result table parse error on line {line}: {message}")]
    TableParse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
