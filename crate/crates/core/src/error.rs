use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("non-square coefficient matrix ({rows}x{cols}) for nu={nu}")]
    NonSquare { nu: usize, rows: usize, cols: usize },

    #[error("coefficient matrix for nu={nu} is {got}x{got}, operator has m={expected}")]
    SizeMismatch { nu: usize, expected: usize, got: usize },

    #[error("order n={0} is below 2")]
    OrderTooSmall(i64),

    #[error("coefficient index nu={nu} outside 2..={n}")]
    NuOutOfRange { nu: i64, n: usize },

    #[error("harmonic p={p} outside declared p_max={p_max}")]
    HarmonicOutOfRange { p: i64, p_max: usize },

    #[error("{samples} samples cannot resolve p_max={p_max} (need at least {needed})")]
    TooFewSamples {
        samples: usize,
        p_max: usize,
        needed: usize,
    },

    #[error("mean matrix not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("eigensolver failed to converge on a {dim}x{dim} matrix (max entry {norm:.3e})")]
    EigenSolver { dim: usize, norm: f64 },

    #[error("integration inaccurate; increase steps (|ln|det M|| = {log_det:.3e} with {steps} steps)")]
    IntegrationInaccurate { steps: usize, log_det: f64 },

    #[error("root finder did not converge for a degree {0} polynomial")]
    RootFinder(usize),

    #[error("truncation K={truncation} too small for band window up to |k|={k_max}")]
    WindowExceedsTruncation { truncation: usize, k_max: i64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status for the command-line front end:
    /// 1 input, 2 numerical, 3 hypothesis violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Malformed(_)
            | Error::NonSquare { .. }
            | Error::SizeMismatch { .. }
            | Error::OrderTooSmall(_)
            | Error::NuOutOfRange { .. }
            | Error::HarmonicOutOfRange { .. }
            | Error::TooFewSamples { .. }
            | Error::InvalidArgument(_)
            | Error::Io(_) => 1,
            Error::EigenSolver { .. }
            | Error::IntegrationInaccurate { .. }
            | Error::RootFinder(_)
            | Error::WindowExceedsTruncation { .. } => 2,
            Error::NotHermitian { .. } | Error::Hypothesis(_) => 3,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Malformed(e.to_string())
    }
}
