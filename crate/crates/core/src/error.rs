use thiserror::Error;

/// Errors surfaced by configuration, policies, engines, and exact solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed specification: probabilities, rates, permutations, thresholds.
    #[error("bad spec: {0}")]
    BadSpec(String),

    /// Resolved load is not in (0, 1), equivalently spare capacity not in (0, k).
    #[error("infeasible load: {0}")]
    InfeasibleLoad(String),

    /// Asked for a static priority order of a state-dependent policy.
    #[error("{0} has no static priority order")]
    NotAPriorityPolicy(String),

    /// State or allocation vector length does not match the number of classes.
    #[error("dimension mismatch: expected {expected} classes, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The class-count CTMC engine only supports exponential classes.
    #[error("class {0} is hyperexponential; use the per-job event engine")]
    HyperExpUnsupported(usize),

    /// No events landed in the measurement window.
    #[error("no post-warmup events; measure_time too small for this config")]
    NumericalHorizonTooSmall,

    /// Stationary mass on the truncation boundary exceeded the tolerance.
    #[error("truncation insufficient: boundary mass {boundary_mass:.3e} > tolerance {tolerance:.3e}")]
    TruncationInsufficient { boundary_mass: f64, tolerance: f64 },

    /// Truncated state space exceeds the solver's hard cap.
    #[error("state space too large: {states} states (limit {limit})")]
    StateSpaceTooLarge { states: u64, limit: u64 },

    /// Iterative stationary solve did not reach the residual contract.
    #[error("stationary solve stalled at residual {residual:.3e} after {sweeps} sweeps")]
    SolverStalled { residual: f64, sweeps: u64 },

    /// Catch-all engine-side failure (e.g. every sweep point failed).
    #[error("engine failure: {0}")]
    Engine(String),

    /// Analytic priority-queue formulas require rho < 1.
    #[error("unstable system: rho = {rho} >= 1")]
    UnstableSystem { rho: f64 },

    /// Operation defined only for a specific class count.
    #[error("operation requires exactly {expected} classes, config has {got}")]
    WrongClassCount { expected: usize, got: usize },

    /// Config file could not be parsed; message carries line/key context.
    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
