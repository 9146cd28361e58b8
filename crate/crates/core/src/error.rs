//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A nominal model is unusable (e.g. singular gain matrix).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Explicit integration of an observer would be unstable at this step size.
    #[error("step-size fault: dt * {gain_name} = {product} >= 0.5")]
    StepSize { gain_name: &'static str, product: f64 },

    /// The inertia matrix came out numerically singular.
    #[error("singular mass matrix at q = {q:?}")]
    SingularMass { q: [f64; 3] },

    /// Discrete pole outside the unit circle: the error-bound series diverges.
    #[error("divergent series: omega_discrete = {omega} is not in (0, 1)")]
    DivergentSeries { omega: f64 },

    /// The safety QP has an empty feasible set.
    #[error("QP infeasible: halfspace violated by {violation} at best box corner{}", .t.map(|t| format!(" (t = {t} s)")).unwrap_or_default())]
    QpInfeasible { violation: f64, t: Option<f64> },

    /// The constraint row vanished while the constraint is violated.
    #[error("degenerate constraint: zero coefficient row with violated halfspace")]
    DegenerateConstraint,

    /// Scenario or run configuration is inconsistent.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable fault name, printed on the CLI diagnostic stream.
    pub fn fault_name(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::InvalidModel(_) => "invalid-model",
            Error::StepSize { .. } => "step-size-fault",
            Error::SingularMass { .. } => "singular-mass",
            Error::DivergentSeries { .. } => "divergent-series",
            Error::QpInfeasible { .. } => "qp-infeasible",
            Error::DegenerateConstraint => "degenerate-constraint",
            Error::Config(_) => "config-error",
        }
    }
}
