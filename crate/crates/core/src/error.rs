use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SveError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("kernel is not admissible: {0}")]
    NonAdmissible(String),

    #[error(
        "quadrature did not converge on [{a}, {b}]: estimate {estimate:e}, error estimate {error:e} \
         after {intervals} subintervals"
    )]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
        intervals: usize,
    },

    #[error("a dense {steps}x{steps} weight table exceeds the cap of {cap} entries; use the streaming (Toeplitz) form")]
    TableTooLarge { steps: usize, cap: usize },

    #[error("scheme diverged at fine index {index} (component {component})")]
    Divergence { index: usize, component: usize },
}

pub type Result<T> = std::result::Result<T, SveError>;
