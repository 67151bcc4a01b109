use thiserror::Error;

/// Errors raised by the library. Each variant maps to a stable
/// machine-readable code via [`Error::code`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("edge set contains a cycle through edge ({0}, {1})")]
    Cycle(usize, usize),

    #[error("tree is disconnected: {components} components over {nodes} nodes")]
    Disconnected { nodes: usize, components: usize },

    #[error("edge ({a}, {b}) has weight {weight}; |w| must be < 1")]
    WeightOutOfRange { a: usize, b: usize, weight: f64 },

    #[error("edge ({0}, {1}) appears more than once")]
    DuplicateEdge(usize, usize),

    #[error("node {node} is not in 1..={nodes}")]
    InvalidNode { node: usize, nodes: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("eigenvalue {0} is not positive")]
    NonPositiveEigenvalue(f64),

    #[error("spectrum has no non-unit eigenvalue; lambda* is not unique")]
    DegenerateSpectrum,

    #[error("interpolation parameter {0} is outside [0, 1]")]
    InvalidLambda(f64),

    #[error("edge ({0}, {1}) is not shared with equal weight by both trees")]
    EdgeNotShared(usize, usize),

    #[error("w1 * w2 = {product} does not equal the shared weight {shared}")]
    WeightFactorMismatch { product: f64, shared: f64 },

    #[error("edge ({0}, {1}) with the requested weight is not in the tree")]
    EdgeNotFound(usize, usize),

    #[error("attaching node {root} to {target} would create a cycle")]
    WouldCreateCycle { root: usize, target: usize },

    #[error("determinants differ: ln|S1| = {0}, ln|S2| = {1}")]
    DeterminantMismatch(f64, f64),

    #[error("output dimension {n_out} not in 1..={n}")]
    InvalidBudget { n_out: usize, n: usize },

    #[error("projection matrix does not have full row rank")]
    RankDeficientProjection,

    #[error("invalid hypothesis set: {0}")]
    InvalidHypotheses(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable identifier used in machine-readable output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Cycle(..) => "CycleError",
            Error::Disconnected { .. } => "DisconnectedError",
            Error::WeightOutOfRange { .. } => "WeightOutOfRange",
            Error::DuplicateEdge(..) => "DuplicateEdge",
            Error::InvalidNode { .. } => "InvalidNode",
            Error::DimensionMismatch(..) => "DimensionMismatch",
            Error::NotSymmetric(_) => "NotSymmetric",
            Error::NotPositiveDefinite => "NotPositiveDefinite",
            Error::NonPositiveEigenvalue(_) => "NonPositiveEigenvalue",
            Error::DegenerateSpectrum => "DegenerateSpectrum",
            Error::InvalidLambda(_) => "InvalidLambda",
            Error::EdgeNotShared(..) => "EdgeNotShared",
            Error::WeightFactorMismatch { .. } => "WeightFactorMismatch",
            Error::EdgeNotFound(..) => "EdgeNotFound",
            Error::WouldCreateCycle { .. } => "WouldCreateCycle",
            Error::DeterminantMismatch(..) => "DeterminantMismatch",
            Error::InvalidBudget { .. } => "InvalidBudget",
            Error::RankDeficientProjection => "RankDeficientProjection",
            Error::InvalidHypotheses(_) => "InvalidHypotheses",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }

    /// True for errors about the numeric domain of otherwise well-formed
    /// input (as opposed to malformed or structurally invalid input).
    pub fn is_numeric_domain(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(..)
                | Error::NotPositiveDefinite
                | Error::NonPositiveEigenvalue(_)
                | Error::DegenerateSpectrum
                | Error::DeterminantMismatch(..)
                | Error::RankDeficientProjection
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
