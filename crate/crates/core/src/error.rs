use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("unsupported Lebesgue exponent p = {0}; expected one of 1, 2, 4, 6, inf")]
    UnsupportedExponent(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("potential does not decay at the {edge} edge: |V| = {value:e} exceeds {tol:e}")]
    EdgeDecay { edge: &'static str, value: f64, tol: f64 },

    #[error("numerical breakdown at step {step}: non-finite values in the field")]
    NumericalBreakdown { step: usize },

    #[error("accuracy check failed: {0}")]
    Accuracy(String),

    #[error("degenerate Wronskian |W| = {0:e}")]
    DegenerateWronskian(f64),

    #[error("decay fit window contains vanishing samples")]
    ZeroFitWindow,

    #[error("quadrature window too small: {0}")]
    Inconclusive(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
