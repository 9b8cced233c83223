use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,
    #[error("invalid hop")]
    InvalidHop,
    #[error("inconsistent STFT metadata: {0}")]
    Metadata(String),
    #[error("invalid early/late split")]
    InvalidSplit,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("noise-only padding exceeds the frame count")]
    PaddingTooLong,
    #[error("filter shorter than delay")]
    FilterShorterThanDelay,
    #[error("unfloored PSD")]
    UnflooredPsd,
    #[error("degenerate past covariance")]
    DegeneratePastCovariance,
    #[error("singular past covariance")]
    SingularPastCovariance,
    #[error("invalid constraint energy")]
    InvalidConstraintEnergy,
    #[error("bad reference channel")]
    BadReferenceChannel,
    #[error("empty class")]
    EmptyClass,
    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("equivalence precondition violated")]
    EquivalencePrecondition,
    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    /// True for failures of the numerical kernels, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_)
                | Error::DegeneratePastCovariance
                | Error::SingularPastCovariance
                | Error::InvalidConstraintEnergy
                | Error::BadReferenceChannel
                | Error::UnflooredPsd
                | Error::NotHermitian(_)
        )
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
