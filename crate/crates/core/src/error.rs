use thiserror::Error;

/// Errors raised across the simulation, reconstruction and CLI layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state is not normalized (norm deviates by {deviation:e})")]
    NotNormalized { deviation: f64 },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("trace is {trace}, expected 1")]
    TraceNotOne { trace: f64 },

    #[error("matrix is not unitary (max deviation of U^dag U from identity {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("{field} = {value} is out of range: {expected}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("time {t:e} s is outside the pulse window [0, {duration:e}] s")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("square envelope is not cyclic-smooth; set allow_non_smooth to use it")]
    NonSmoothPulse,

    #[error("time grid needs at least {floor} steps, got {got}")]
    StepFloor { floor: usize, got: usize },

    #[error("invalid time grid: t_end ({t_end:e}) must exceed t_start ({t_start:e})")]
    EmptyGrid { t_start: f64, t_end: f64 },

    #[error("Hamiltonian sample at t = {t:e} s is not Hermitian (deviation {deviation:e})")]
    NonHermitianSample { t: f64, deviation: f64 },

    #[error("moving frame is not orthonormal at t = {t:e} s (deviation {deviation:e})")]
    FrameNotOrthonormal { t: f64, deviation: f64 },

    #[error("moving frame is not cyclic (residual {residual:e})")]
    NonCyclicFrame { residual: f64 },

    #[error("tomography settings incomplete: missing {missing:?}")]
    IncompleteSettings { missing: Vec<String> },

    #[error("unknown measurement setting {0:?}")]
    UnknownSetting(String),

    #[error("infeasible measurement data: {0}")]
    Infeasible(String),

    #[error("process reconstruction system is singular (condition number {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("unknown state label {0:?} in fluorescence calibration")]
    UnknownLabel(String),

    #[error("unknown gate {0:?}")]
    UnknownGate(String),

    #[error("fit did not converge: {0}")]
    FitFailed(String),

    #[error("estimator failed: {0}")]
    Estimator(String),

    #[error("eigendecomposition failed")]
    Eigen,

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for the CLI: 1 for validation failures, 2 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::OutOfRange { .. }
            | Error::NonSmoothPulse
            | Error::StepFloor { .. }
            | Error::EmptyGrid { .. }
            | Error::UnknownGate(_)
            | Error::UnknownLabel(_)
            | Error::UnknownSetting(_)
            | Error::IncompleteSettings { .. }
            | Error::Config(_)
            | Error::Io(_) => 1,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
