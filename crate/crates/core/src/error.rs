use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),

    #[error(
        "infeasible split: best achievable tail norm {best_tail:.6e} exceeds epsilon0 {epsilon0:.6e}; \
         resolving the datum inside the dealiased band needs n_per_axis >= {required_n}"
    )]
    Infeasible {
        best_tail: f64,
        epsilon0: f64,
        required_n: usize,
    },

    #[error("decomposition self-check failed at level {level}: {detail}")]
    Construction { level: usize, detail: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("noise increment count {got} does not match the model's {expected} modes")]
    ModeCount { expected: usize, got: usize },

    #[error("numerical blow-up at t = {t:.6}: {detail} (last finite L3 = {last_l3:.6e}, L6 = {last_l6:.6e})")]
    BlowUp {
        t: f64,
        detail: String,
        last_l3: f64,
        last_l6: f64,
    },

    #[error(
        "level {level} violated the pointwise bound at t = {t:.6}: norm {norm:.6e} > {bound:.6e}"
    )]
    LevelBound {
        level: usize,
        t: f64,
        norm: f64,
        bound: f64,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
