use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("binomial coefficient with negative upper index {0}")]
    NegativeUpperIndex(i64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid negative hypergeometric parameters: {0}")]
    InvalidParams(String),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("probe history required: no cycle with probe vehicles has been recorded")]
    HistoryRequired,

    #[error("rate estimates undefined without probe vehicles in the queue")]
    NoProbes,

    #[error("oversaturated approach: arrival rate {lambda} >= saturation flow {x_sat}")]
    Oversaturated { lambda: f64, x_sat: f64 },

    #[error("division guard: {0}")]
    DivisionGuard(String),

    #[error("exhaustive enumeration over {slots} slots exceeds the budget of {max} slots")]
    EnumerationBudget { slots: u32, max: u32 },

    #[error("rejection sampler acceptance rate {rate:.2e} below floor {floor:.2e}")]
    AcceptanceRate { rate: f64, floor: f64 },

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Precondition(msg()))
    }
}
