use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid potential: {0}")]
    PotentialInvalid(String),

    #[error("kink integration failed: {0}")]
    ProfileSolveFailed(String),
    #[error("bump Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("bump solve converged to the wrong branch: {zeros} zeros")]
    WrongBranch { zeros: usize },
    #[error("kink separation violated: {0}")]
    SeparationViolated(String),
    #[error("interpolant H1 bound violated: measured {measured:e} > {bound:e}")]
    InterpolantBoundViolated { measured: f64, bound: f64 },

    #[error("non-finite value in field after step")]
    NonFinite,
    #[error("time step fell below floor {dt_min:e} at t = {t}")]
    StepFloorReached { t: f64, dt_min: f64 },
    #[error("energy increased at the step floor (t = {t}, increase {increase:e})")]
    EnergyIncreaseAtFloor { t: f64, increase: f64 },

    #[error("field has nonzero mean {0:e}")]
    NonZeroMean(f64),
    #[error("projection objective is flat over {fraction:.0}% of shifts")]
    DegenerateProjection { fraction: f64 },
    #[error("no valid pair of zeros: {0}")]
    NoValidZeros(String),

    #[error("phase hypothesis unmet: {0}")]
    PhaseHypothesisUnmet(String),
    #[error("eigensolver did not converge (worst residual {residual:e})")]
    EigsNotConverged { residual: f64 },
    #[error("algebraic window too short: {decades:.2} decades")]
    WindowTooShort { decades: f64 },

    #[error("initial energy {energy} exceeds budget {budget}")]
    EnergyBudgetExceeded { energy: f64, budget: f64 },
    #[error("constraint correction failed: {0}")]
    ConstraintCorrectionFailed(String),
    #[error("phase not reached: {0}")]
    PhaseNotReached(String),
    #[error("insufficient data for fit: {0}")]
    InsufficientData(String),

    #[error("config syntax error on line {line}: {msg}")]
    ConfigSyntax { line: usize, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config constraint violated for `{0}`")]
    ConstraintViolation(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("snapshot {index}: {source}")]
    AtSnapshot {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("csv parse error on line {line}: {msg}")]
    CsvParse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_snapshot(self, index: usize) -> Self {
        Error::AtSnapshot {
            index,
            source: Box::new(self),
        }
    }
}
