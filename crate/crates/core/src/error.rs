use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid basis dimension {dim}: need at least {min} levels")]
    InvalidDimension { dim: usize, min: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max asymmetry {asymmetry:e})")]
    NonHermitian { asymmetry: f64 },

    #[error("unknown model preset `{0}`")]
    UnknownPreset(String),

    #[error("parameter `{name}` = {value} is outside its domain ({domain})")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("step {step}: implicit solve failed (matrix I - dt*G is singular)")]
    StepFailure { step: usize },

    #[error("step {step}: non-finite state (solver blow-up)")]
    BlowUp { step: usize },

    #[error("step {step}: state has zero norm and cannot be renormalized")]
    DegenerateState { step: usize },

    #[error("initial state must be normalized (|norm^2 - 1| = {deviation:e})")]
    NotNormalized { deviation: f64 },

    #[error("initial state has zero norm")]
    ZeroInitialState,

    #[error("channel index {index} out of range for {count} channels")]
    ChannelIndex { index: usize, count: usize },

    #[error("expected {expected} noise increments, got {found}")]
    NoiseLength { expected: usize, found: usize },

    #[error("trajectory {index}: {source}")]
    Trajectory { index: usize, source: Box<Error> },

    #[error("time {t} is not on the recorded grid")]
    TimeNotOnGrid { t: f64 },

    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("expected a {expected} trajectory, found {found}")]
    KindMismatch { expected: &'static str, found: &'static str },

    #[error("trajectories do not share a common time grid")]
    GridMismatch,

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("time index {index} is not on the recorded grid of {len} points")]
    TimeIndex { index: usize, len: usize },

    #[error("recorded squared norm {sq_norm:e} at time index {index} is degenerate")]
    DegenerateTrajectory { index: usize, sq_norm: f64 },

    #[error("operation needs full-resolution noise (record_stride = 1, noise recorded)")]
    NotFullResolution,

    #[error("all importance weights are zero")]
    ZeroWeights,

    #[error("density matrix invalid: {0}")]
    InvalidDensity(String),

    #[error("master-equation integration drifted in trace by {drift:e}; use a smaller dt or a larger basis")]
    IntegrationFailure { drift: f64 },

    #[error("stationary state is not unique: generator kernel has dimension {kernel_dim}")]
    NonUniqueSteadyState { kernel_dim: usize },

    #[error("burn-in {burn_in} must be smaller than the final time {t_final}")]
    InvalidBurnIn { burn_in: f64, t_final: f64 },

    #[error("observable battery is empty")]
    EmptyBattery,

    #[error("quadratic form is unbounded: {0}")]
    UnboundedForm(String),

    #[error("level {level} touches the truncation boundary (interior ends at {interior_max})")]
    BoundaryLevels { level: usize, interior_max: usize },

    #[error("power p = {0} is out of scope (requires p >= 4)")]
    OutOfScopePower(u32),
}

pub type Result<T> = std::result::Result<T, Error>;
