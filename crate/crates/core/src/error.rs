use thiserror::Error;

#[derive(Debug, Error)]
pub enum FbtError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not unitary: |U^dag U - I| = {deviation:.3e}")]
    NotUnitary { deviation: f64 },

    #[error("unknown gate label `{0}`")]
    UnknownGate(String),

    #[error("unknown effect `{0}`")]
    UnknownEffect(String),

    #[error("duplicate gate label `{0}`")]
    DuplicateGate(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("observation variance must be positive, got {0}")]
    InvalidVariance(f64),

    #[error("covariance lost positive semidefiniteness: innovation variance {0:.3e}")]
    NotPositiveSemidefinite(f64),

    #[error(
        "matrix logarithm undefined: eigenvalue {re:.6e}{im:+.6e}i lies within {distance:.1e} \
         of the branch cut; project or regularize the channel first"
    )]
    BranchCut { re: f64, im: f64, distance: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("did not converge: {0}")]
    NoConvergence(&'static str),

    #[error("registry mismatch: {0}")]
    RegistryMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing outcome for projection `{0}`")]
    MissingProjection(String),

    #[error("out of order: {0}")]
    OutOfOrder(String),

    #[error("channel violates CPTP beyond tolerance: correction norm {0:.3e}")]
    NotCptp(f64),

    #[error("{path}: {message}")]
    Field { path: String, message: String },

    #[error("malformed document: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FbtError>;

impl FbtError {
    pub(crate) fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        FbtError::Field {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Deserializes JSON; errors carry the offending field path.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| FbtError::field(e.path().to_string(), e.inner().to_string()))
}
