use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("linear system is singular to working precision")]
    SingularSystem,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("adaptive step size underflow at t = {t} (h = {h:e})")]
    StepFailure { t: f64, h: f64 },

    #[error("invalid time window [{start}, {end}]")]
    InvalidWindow { start: f64, end: f64 },

    /// The modulus observation has no gradient where the state vanishes.
    #[error("modulus observation undefined at sensor {sensor}: |u| = {modulus:e}")]
    DegenerateModulus { sensor: usize, modulus: f64 },

    #[error("observation Jacobian is rank deficient")]
    RankDeficientJacobian,

    #[error("Gaussian length scale {0:e} is degenerate")]
    DegenerateLengthScale(f64),

    #[error("initial fit failed: best relative error {best:e} exceeds target {target:e}")]
    FitFailed { best: f64, target: f64 },

    #[error("reference field has zero norm")]
    ZeroReference,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed snapshot file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for problems with user-supplied configuration rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
