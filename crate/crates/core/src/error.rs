use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("interval piece {0} is not closed in the state space")]
    OpenPiece(String),
    #[error("region is inadmissible at boundary points {0:?}")]
    InadmissibleRegion(Vec<f64>),
    #[error("state {x} lies outside the state space {domain}")]
    OutOfDomain { x: f64, domain: String },
    #[error("invalid interval: {0}")]
    InvalidInterval(String),
    #[error("invalid diffusion: {0}")]
    InvalidDiffusion(String),
    #[error("invalid discount: {0}")]
    InvalidDiscount(String),
    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),
    #[error("collocation solver did not converge: residual {residual:e} with {nodes} nodes")]
    Solver { residual: f64, nodes: usize },
    #[error("{0} is not a boundary point of the region")]
    NotBoundaryPoint(f64),
    #[error("smooth-fit residual does not change sign on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("simulation config error: {0}")]
    SimConfig(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
