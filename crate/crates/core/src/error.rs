use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimlError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The sieve Gram matrix G is (numerically) rank deficient.
    #[error("coherency violated: smallest singular value of G is {smallest:e} (largest {largest:e})")]
    Coherency { smallest: f64, largest: f64 },

    #[error("ill-conditioned Gram product: cond(G^H G) = {condition:e} exceeds {limit:e}")]
    Conditioning { condition: f64, limit: f64 },

    #[error("not identifiable: joint estimation needs M < L, got M = {m}, L = {l}")]
    Identifiability { m: usize, l: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("sample covariance is singular; set diagonal_loading > 0 for {method}")]
    SingularCovariance { method: &'static str },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("BIC scan failed for every candidate dimension")]
    ScanFailure,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SimlError {
    /// Errors that stem from the numerics rather than from user input or IO.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            SimlError::Coherency { .. }
                | SimlError::Conditioning { .. }
                | SimlError::Identifiability { .. }
                | SimlError::Domain(_)
                | SimlError::NotPsd { .. }
                | SimlError::SingularCovariance { .. }
                | SimlError::UndefinedMetric(_)
                | SimlError::ScanFailure
        )
    }
}

pub type Result<T> = std::result::Result<T, SimlError>;
