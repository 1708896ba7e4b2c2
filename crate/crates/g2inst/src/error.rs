use thiserror::Error;

/// Failure modes shared by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate frame: da = {da}, db = {db}")]
    DegenerateFrame { da: f64, db: f64 },
    #[error("metric matrix is not positive definite at t = {0}")]
    NonPositiveMetric(f64),
    #[error("series order {0} requested without a recursion right-hand side")]
    SeriesOrderUnavailable(usize),
    #[error("blow-up at t = {0}")]
    BlowUp(f64),
    #[error("step failure at t = {0}")]
    StepFailure(f64),
    #[error("singular time: db = 0 at t = {0}")]
    SingularTime(f64),
    #[error("no bracket: both endpoints classify as {0}")]
    NoBracket(String),
    #[error("bisection stalled on an undecided outcome at {0}")]
    NoConvergence(f64),
    #[error("singular IVP condition violated: {0}")]
    ConditionViolated(String),
    #[error("singular linear solve in the series recursion at order {0}")]
    SingularRecursion(usize),
    #[error("t0 = {t0} lies outside the series radius of trust (error estimate {estimate:e})")]
    OutOfTrust { t0: f64, estimate: f64 },
    #[error("bundle index j = {j} is not admissible for (m, n) = ({m}, {n})")]
    WrongBundle { m: u32, n: u32, j: i32 },
    #[error("eigen-decomposition failed: {0}")]
    EigenSolveFailure(String),
    #[error("integral operator is not contracting (iterate {0})")]
    NoContraction(usize),
    #[error("quadrature denominator vanishes at t = {0}")]
    DenominatorVanishes(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
