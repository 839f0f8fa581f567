use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The closed form would lose all precision; use a transform or Monte Carlo route.
    #[error("ill-conditioned closed form ({0}); fall back to a numerical route")]
    IllConditioned(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("operation requires a distributed layout")]
    LayoutMismatch,

    #[error("user and antenna closer than the minimum separation ({distance:e})")]
    SingularGeometry { distance: f64 },

    #[error("channel matrix is rank deficient (condition estimate {condition:e})")]
    SingularChannel { condition: f64 },

    #[error("zero channel vector")]
    DegenerateChannel,

    #[error("SINR undefined without interfering users (K < 2)")]
    NoInterference,

    #[error("quadrature did not converge: estimate {estimate} with error {error:e}")]
    NotConverged { estimate: f64, error: f64 },
}
