//! Crate-wide error type.

/// Errors raised by construction, assembly, solvers, and estimators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The grid domain does not cover the required span around one of
    /// the component means.
    #[error("domain too narrow on axis {axis}: needs [{need_lo}, {need_hi}], got [{lo}, {hi}]")]
    DomainTooNarrow {
        axis: usize,
        need_lo: f64,
        need_hi: f64,
        lo: f64,
        hi: f64,
    },

    /// A variance or bandwidth parameter is zero or negative.
    #[error("variance or bandwidth must be positive, got {value}")]
    NonPositiveVariance { value: f64 },

    /// Grid operations are limited to low dimension.
    #[error("dimension {dim} exceeds the supported maximum {max}")]
    DimensionTooHigh { dim: usize, max: usize },

    /// A grid, sample set, or tensor failed a structural check.
    #[error("invalid input: {reason}")]
    InvalidInput { reason: String },

    /// An iterative eigensolver did not reach its residual tolerance.
    #[error("eigensolver stalled after {iterations} iterations, residual {residual:.3e}")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    /// The smallest nonzero eigenvalue fell below the zero-mode
    /// threshold, so no Poincare constant can be reported.
    #[error("degenerate spectrum: smallest nonzero eigenvalue {xi_1:.3e} is below threshold")]
    DegenerateSpectrum { xi_1: f64 },

    /// A Rayleigh quotient of a function with no variance.
    #[error("zero variance: Rayleigh quotient undefined for a constant function")]
    ZeroVariance,

    /// Loss derivatives violate the curvature or slope preconditions.
    #[error("invalid loss: {reason}")]
    InvalidLoss { reason: String },

    /// The requested damping split cannot satisfy the optimality
    /// relation.
    #[error("alpha {alpha} outside feasible range [0, {max}]")]
    InfeasibleAlpha { alpha: f64, max: f64 },

    /// Divergence-free stationary fields need at least two dimensions.
    #[error("stationary velocity kernel is trivial in dimension {dim}")]
    TrivialKernel { dim: usize },

    /// The neighbor graph split into several components, so its
    /// spectral gap is zero.
    #[error("neighbor graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },

    /// Feature covariance stayed singular even after diagonal loading.
    #[error("singular covariance: features have no spread")]
    SingularCovariance,

    /// A name (augmentation, scheme, preset) outside the known set.
    #[error("unknown kind {name:?}")]
    UnknownKind { name: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            reason: reason.into(),
        }
    }

    /// Stable machine-readable tag, one per variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DomainTooNarrow { .. } => "DomainTooNarrow",
            Error::NonPositiveVariance { .. } => "NonPositiveVariance",
            Error::DimensionTooHigh { .. } => "DimensionTooHigh",
            Error::InvalidInput { .. } => "InvalidInput",
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::DegenerateSpectrum { .. } => "DegenerateSpectrum",
            Error::ZeroVariance => "ZeroVariance",
            Error::InvalidLoss { .. } => "InvalidLoss",
            Error::InfeasibleAlpha { .. } => "InfeasibleAlpha",
            Error::TrivialKernel { .. } => "TrivialKernel",
            Error::DisconnectedGraph { .. } => "DisconnectedGraph",
            Error::SingularCovariance => "SingularCovariance",
            Error::UnknownKind { .. } => "UnknownKind",
            Error::Io(_) => "Io",
        }
    }
}
