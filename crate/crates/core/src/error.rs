use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data: need at least {needed} instances, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error(
        "singular background covariance: eigenvalue #{index} = {eigenvalue:e} \
         is not above 1e-12 x max eigenvalue ({max:e})"
    )]
    SingularCovariance { index: usize, eigenvalue: f64, max: f64 },

    #[error("instance coincides with the background mean (whitened norm {norm:e})")]
    ZeroVector { norm: f64 },

    #[error("target signature is the zero vector")]
    ZeroSignature,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at feature {feature} of {context}")]
    NonFinite { context: String, feature: usize },

    #[error("bag `{id}` has no instances")]
    EmptyBag { id: String },

    #[error("training needs at least one positive and one negative bag (got {positive} positive, {negative} negative)")]
    MissingBagClass { positive: usize, negative: usize },

    #[error("degenerate signature update: positive and negative means coincide (|t| = {norm:e})")]
    DegenerateUpdate { norm: f64 },

    #[error("no valid initialization candidate: every positive instance sits at the background mean")]
    NoValidCandidate,

    #[error("instance {index}: {source}")]
    AtInstance {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("ROC needs both classes (got {positives} positive, {negatives} negative labels)")]
    DegenerateLabels { positives: usize, negatives: usize },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite gradient in EM-DD at iteration {iteration}: {detail}")]
    NonFiniteGradient { iteration: usize, detail: String },

    #[error("could not generate {count} endmembers with pairwise angle >= {min_angle_deg} deg in {attempts} attempts")]
    EndmemberGeneration {
        count: usize,
        min_angle_deg: f64,
        attempts: usize,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_instance(index: usize, err: Error) -> Self {
        Error::AtInstance {
            index,
            source: Box::new(err),
        }
    }

    /// Strips any `AtInstance` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtInstance { source, .. } => source.root(),
            other => other,
        }
    }
}
