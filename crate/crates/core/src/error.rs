use crate::densemat::LinalgError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("layer {layer}: expected input with {expected} rows, got {got}")]
    LayerShape {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("empty class {0}")]
    EmptyClass(usize),
    #[error("degenerate between-class scatter")]
    DegenerateScatter,
    #[error("zero vector in pair (class {class}, sample {sample})")]
    ZeroVector { class: usize, sample: usize },
    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),
    #[error("power iteration did not converge in {iters} iterations (last estimate {estimate:e}, relative change {residual:e})")]
    PowerIteration {
        iters: usize,
        estimate: f64,
        residual: f64,
    },
    #[error("idx: {0}")]
    Idx(String),
    #[error("class id {id} out of range for K = {k}")]
    LabelRange { id: usize, k: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
