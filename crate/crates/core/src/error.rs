use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("ramp speed must be nonzero")]
    ZeroSpeed,
    #[error("sign of the speed does not match lambda_f - lambda_i")]
    InconsistentDirection,
    #[error("ramp width {delta} exceeds 0.2*|lambda_f - lambda_i| = {limit}")]
    RampWidthTooLarge { delta: f64, limit: f64 },
    #[error("time {t} outside [0, {tau}]")]
    OutOfRange { t: f64, tau: f64 },
    #[error("derivative order {0} above 6")]
    OrderTooHigh(usize),
    #[error("unstable frequency: 1 + lambda = {0} <= 0")]
    UnstableFrequency(f64),
    #[error("unstable normal mode (squared frequency {0})")]
    UnstableMode(f64),
    #[error("singular denominator in gauge coefficients")]
    SingularDenominator,
    #[error("z^2 = {z2} < 0 at t = {t}")]
    NegativeZSquared { t: f64, z2: f64 },
    #[error("effective mass is not positive at t = {t}")]
    SingularEta { t: f64 },
    #[error("quadratic form is not symmetric")]
    AsymmetricForm,
    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("step budget exhausted at t = {t}")]
    MaxSteps { t: f64 },
    #[error("symplectic defect {0} above threshold")]
    SymplecticDefectExceeded(f64),
    #[error("covariance is not positive semidefinite")]
    NonPsdInput,
    #[error("basis dimensions do not match the propagator")]
    BasisMismatch,
    #[error("temperature must be positive")]
    NonPositiveTemperature,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Bogoliubov map violates UU^dag - VV^dag = 1 (residual {0})")]
    InvalidMap(f64),
    #[error("negative energy variance {0}")]
    NegativeVariance(f64),
    #[error("coupling switch at |lambda| = {lambda} closer than {limit} to resonance")]
    SwitchTooCloseToResonance { lambda: f64, limit: f64 },
    #[error("r = {r} at or beyond breakdown ratio r0 = {r0}")]
    BeyondBreakdown { r: f64, r0: f64 },
    #[error("Fock truncation leakage {0} above 1e-6")]
    TruncationLeakage(f64),
    #[error("state norm drifted by {0}")]
    NormDrift(f64),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, Error>;
