use thiserror::Error;

/// Errors raised by basis construction, functional evaluation and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature underresolved: Gram matrix deviates from identity by {deviation:e} (tolerance {tol:e}); increase quad_order")]
    Underresolved { deviation: f64, tol: f64 },

    #[error("coefficient vector has length {found}, basis has {expected} modes")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("search direction is zero")]
    ZeroDirection,

    #[error("path collapsed onto the trivial solution (max node norm {norm:e})")]
    PathCollapse { norm: f64 },

    #[error("no far endpoint with negative energy found along the direction")]
    NoFarEndpoint,

    #[error("iteration cap {iterations} exceeded (last residual {residual:e})")]
    IterationCap { iterations: usize, residual: f64 },

    #[error("linking gap not verified: sup on boundary {sup_boundary:e}, inf on sphere {inf_sphere:e}")]
    GapNotVerified { sup_boundary: f64, inf_sphere: f64 },

    #[error("mesh degenerated: node {node} moved {distance:e} away from its neighbours")]
    MeshDegenerate { node: usize, distance: f64 },

    #[error("iterate norm {norm:e} exceeded the boundedness cap {cap:e}")]
    Unbounded { norm: f64, cap: f64 },

    #[error("nonlinearity has no t-derivative and finite-difference fallback is disabled")]
    MissingDerivative,

    #[error("no sample landed in the level window [{lo:e}, {hi:e}] (sampled energies in [{min:e}, {max:e}]); widen the window")]
    EmptyLevelWindow { lo: f64, hi: f64, min: f64, max: f64 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
