use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular matrix: pivot {pivot:.3e} in column {column} below threshold {threshold:.3e}")]
    SingularMatrix {
        column: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ill-conditioned Vandermonde system: residual {residual:.3e}")]
    IllConditioned { residual: f64 },

    #[error("degenerate method family: {0}")]
    DegenerateFamily(String),

    #[error("negative discriminant {0:.6e}")]
    NegativeDiscriminant(f64),

    #[error("no real root for beta32 (alpha = {alpha}, beta22 = {beta22}, discriminant = {discriminant:.6e})")]
    NoRealRoot {
        alpha: f64,
        beta22: f64,
        discriminant: f64,
    },

    #[error("z = {re} + {im}i is a pole of the stability function")]
    PoleAtZ { re: f64, im: f64 },

    #[error("method has not verified order {order}: worst residual {name} = {value:.3e}")]
    OrderNotVerified {
        order: usize,
        name: String,
        value: f64,
    },

    #[error("non-finite state in stage {stage}")]
    NonFiniteState { stage: usize },

    #[error("simplified Newton did not converge in stage {stage} after {iterations} iterations")]
    NewtonDivergence { stage: usize, iterations: usize },

    #[error("unknown method {0:?}")]
    UnknownMethod(String),

    #[error("step {step} at t = {t}: {source}")]
    AtStep {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips any [`Error::AtStep`] wrapping.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
