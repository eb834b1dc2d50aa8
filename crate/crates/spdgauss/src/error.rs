//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by geometry, normalisation, estimation and model I/O.
#[derive(Error, Debug)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: max |Y_ij - Y_ji| = {asymmetry:.3e} exceeds tolerance {tolerance:.3e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive definite: min eigenvalue {min_eigenvalue:.3e} <= floor {floor:.3e}")]
    NotPositiveDefinite { min_eigenvalue: f64, floor: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("tangent vectors are attached to different base points")]
    BaseMismatch,

    #[error("transform is singular or nearly singular (|det| = {det:.3e})")]
    SingularTransform { det: f64 },

    #[error("orthogonality violated: max |U^T U - I| = {deviation:.3e} exceeds {tolerance:.3e}")]
    NotOrthogonal { deviation: f64, tolerance: f64 },

    #[error("sigma must be positive, got {0}")]
    InvalidSigma(f64),

    #[error("zeta table is not monotone: g(sigma) = sigma^3 dlog zeta/dsigma decreases at sigma = {sigma}; raise mc_samples")]
    NonMonotoneTable { sigma: f64 },

    #[error("Monte Carlo error too large at sigma = {sigma}: relative std error {rel_std_error:.3e} > {limit:.3e}; raise mc_samples")]
    ExcessiveMcError {
        sigma: f64,
        rel_std_error: f64,
        limit: f64,
    },

    #[error("value {value:.6e} outside table range [{min:.6e}, {max:.6e}]; rebuild the table wider")]
    OutOfTableRange { value: f64, min: f64, max: f64 },

    #[error("mean solver exceeded {iters} iterations (residual gradient norm {grad_norm:.3e})")]
    MaxItersExceeded {
        iters: usize,
        grad_norm: f64,
        /// Best iterate found so far.
        best: Box<crate::manifold::SpdMatrix>,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("mixture component {component} lost all responsibility mass (N_mu = {mass:.3e})")]
    EmptyComponent { component: usize, mass: f64 },

    #[error("label {0:?} is not present in the model")]
    UnknownLabel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
