use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("embedding index {index} out of range for a degree-{degree} field")]
    EmbeddingIndex { index: usize, degree: usize },

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("elements of Q(sqrt {0}) and Q(sqrt {1}) cannot be combined")]
    FieldMismatch(i64, i64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("gram matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),

    #[error("embedded gram matrix is numerically singular at place {0}")]
    SingularGram(usize),

    #[error("signature profile violated at place {place}: expected {expected:?}, found {found:?}")]
    Profile {
        place: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("plane is not negative definite")]
    NotNegativePlane,

    #[error("vectors are linearly dependent")]
    Dependent,

    #[error("Cholesky factorization failed: matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("Clifford elements live on different frames")]
    FrameMismatch,

    #[error("Clifford element is not invertible")]
    NotInvertible,

    #[error("element does not stabilize V (residual {0:.3e})")]
    NotGSpinStable(f64),

    #[error("point lies on the singular locus (R = {0:.3e})")]
    Singular(f64),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("chart point is at or near the ramification locus")]
    Ramification,

    #[error("ill-conditioned frame completion (|det| = {0:.3e})")]
    IllConditioned(f64),

    #[error("matrix is not symplectic (defect {0:.3e})")]
    NotSymplectic(f64),

    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("enumeration to bound {bound:.3e} exceeds the budget of {budget} vectors")]
    Budget { bound: f64, budget: usize },

    #[error("a search bound is required: {0}")]
    BoundRequired(String),

    #[error("invalid input: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;
