use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("axis {axis} has {nodes} nodes, at least 3 are required")]
    TooFewNodes { axis: usize, nodes: usize },

    #[error("field shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("matrix at node {node} is not positive definite")]
    NotPositiveDefinite { node: usize },

    #[error("non-positive value {value} at node {node}")]
    NonPositive { node: usize, value: f64 },

    #[error("quadrature did not converge: achieved relative change {achieved:.3e}, wanted {wanted:.3e}")]
    QuadratureNonConvergence { achieved: f64, wanted: f64 },

    #[error("information matrix is near singular (condition number {cond:.3e}) at {at:?}")]
    NearSingular { cond: f64, at: Vec<f64> },

    #[error("solver did not converge after {iterations} iterations, final residual {residual:.3e}")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("negative solution value {value} at node {node}")]
    NegativeSolution { node: usize, value: f64 },

    #[error("eigenvector is sign indefinite (min {min:.3e}, max {max:.3e})")]
    SignIndefinite { min: f64, max: f64 },

    #[error("Brown residual {residual:.3e} exceeds threshold {threshold:.3e}")]
    BrownResidual { residual: f64, threshold: f64 },

    #[error("risk matching discrepancy {discrepancy:.3e} exceeds tolerance {tolerance:.3e}")]
    MatchingTolerance { discrepancy: f64, tolerance: f64 },

    #[error("principal eigenvalue {lambda:.3e} is not negative; only the eigenvector route applies")]
    NonNegativeEigenvalue { lambda: f64 },

    #[error("unsupported prior family for this operation: {0}")]
    UnsupportedFamily(String),

    #[error("attenuation profile vanishes at the collar width")]
    DegenerateAttenuation,

    #[error("all {0} paths were censored")]
    AllCensored(usize),

    #[error("path weight overflow, largest exponent seen {0:.3e}")]
    WeightOverflow(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
