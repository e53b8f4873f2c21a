use thiserror::Error;

/// Errors surfaced by grid construction, state preparation, and propagation.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("odd point count {0}; the spectral frequency layout needs an even grid")]
    OddPointCount(usize),

    #[error("point count {0} too small; need at least {min}", min = crate::lattice::MIN_POINTS)]
    TinyPointCount(usize),

    #[error("half_width must be positive, got {0}")]
    NonPositiveHalfWidth(f64),

    #[error("unsupported particle count {0}; shipped solvers cover N in {{1, 2}}")]
    UnsupportedParticleCount(usize),

    #[error("shape mismatch: field has {field} values, grid has {grid} points")]
    ShapeMismatch { field: usize, grid: usize },

    #[error("objects live on different grids")]
    GridMismatch,

    #[error("initial state annihilated by antisymmetrization (Pauli-annihilated state)")]
    PauliAnnihilated,

    #[error("degenerate disorder profile: integral of D^2 vanished")]
    DegenerateDisorder,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dense oracle limited to {limit} points, grid has {got}")]
    OracleSizeExceeded { limit: usize, got: usize },

    #[error("non-finite amplitude detected at t = {t}")]
    NanDetected { t: f64 },

    #[error("singular matrix in dense solve (pivot {0} vanished)")]
    SingularMatrix(usize),

    #[error("diagnostics series is empty")]
    EmptySeries,

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, CoreError>;
