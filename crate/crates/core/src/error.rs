use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument within 1e-12 of the pole at s = 1")]
    PoleAtOne,
    #[error("height {0} outside the supported range")]
    HeightOutOfRange(f64),
    #[error("height {0} below the Riemann-Siegel threshold")]
    HeightTooLow(f64),
    #[error("argument {0} outside the evaluation domain")]
    OutOfDomain(String),
    #[error("gamma function pole near {0}")]
    GammaPole(String),
    #[error("shift {shift} too large for height {t}")]
    ShiftTooLarge { shift: f64, t: f64 },
    #[error("shift sum {0} vanishes; the G factor is undefined")]
    DegenerateShifts(String),
    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),
    #[error("truncation too short: tail bound {0:e} at the cap")]
    TruncationTooShort(f64),
    #[error("sieve limit {0} too large")]
    LimitTooLarge(u64),
    #[error("degenerate block schedule: {0}")]
    DegenerateSchedule(String),
    #[error("range ({lo}, {hi}] exceeds the prime table limit {limit}")]
    RangeBeyondTable { lo: f64, hi: f64, limit: u64 },
    #[error("factorization of {0} incomplete with the current table")]
    FactorizationIncomplete(u64),
    #[error("denominator vanishes at prime {0}")]
    DenominatorVanishes(u64),
    #[error("block index {index} outside 1..={ell}")]
    BlockOutOfRange { index: usize, ell: usize },
    #[error("support size {0} exceeds the memory budget")]
    SupportOverflow(usize),
    #[error("polynomial length {length} exceeds T/10 = {limit}")]
    LengthExceedsWindow { length: u64, limit: f64 },
    #[error("polynomials share a prime factor")]
    BlocksNotDisjoint,
    #[error("polynomial support is not prime: {0}")]
    NotPrimeSupported(u64),
    #[error("quadrature unstable: {0}")]
    QuadratureUnstable(String),
    #[error("degenerate ladder fit")]
    DegenerateFit,
    #[error("contour node within {0:e} of a pole")]
    PoleProximity(f64),
    #[error("step too coarse: {0}")]
    StepTooCoarse(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
