use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("eigen-solver did not converge")]
    NonConvergence,
    #[error("matrix is not row-stochastic: row {row} sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("unit eigenvalue is not simple; stationary distribution is not unique")]
    NoUniqueStationary,
    #[error("group inverse not computable: {0}")]
    NotComputable(String),
    #[error("a non-unit eigenvalue has modulus {0} >= 1")]
    NotContractive(f64),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("observation horizon too short: need {needed}, have {have}")]
    HorizonTooShort { needed: usize, have: usize },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("matrix is not diagonalizable at tolerance")]
    NotDiagonalizable,
    #[error("no eigenmode subset satisfies the support condition")]
    NoValidSubset,
    #[error("nonnegativity refinement is infeasible")]
    RefinementInfeasible,
    #[error("no scaling of the feedback satisfies the convergence conditions")]
    ScalingFailed,
    #[error("alpha = {alpha} violates the bound {bound} and verification failed")]
    AlphaTooLarge { alpha: f64, bound: f64 },
    #[error("privacy budget must be positive, got {0}")]
    BudgetDegenerate(f64),
    #[error("adjusting parameter delta = {delta} is not below the smallest remaining weight {min_weight}")]
    DeltaTooLarge { delta: f64, min_weight: f64 },
    #[error("no feasible support count")]
    NoFeasibleCount,
    #[error("row has {0} supports; brute force is limited to 16")]
    TooLarge(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Io(_)
            | Error::DimensionMismatch(_)
            | Error::NotStochastic { .. }
            | Error::NegativeEntry { .. }
            | Error::NonFinite { .. }
            | Error::HorizonTooShort { .. }
            | Error::BudgetDegenerate(_)
            | Error::DeltaTooLarge { .. }
            | Error::TooLarge(_) => 2,
            Error::Infeasible(_)
            | Error::NoValidSubset
            | Error::RefinementInfeasible
            | Error::ScalingFailed
            | Error::AlphaTooLarge { .. }
            | Error::NotDiagonalizable
            | Error::NoFeasibleCount => 3,
            Error::NonConvergence
            | Error::NoUniqueStationary
            | Error::NotComputable(_)
            | Error::NotContractive(_)
            | Error::NumericalFailure(_) => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
