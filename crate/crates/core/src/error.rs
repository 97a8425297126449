use thiserror::Error;

/// Which end of the y-domain an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Lower,
    Upper,
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Lower => write!(f, "y_min"),
            Boundary::Upper => write!(f, "y_max"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("y-domain growth budget of {budget} extensions exhausted at {boundary}")]
    Growth { boundary: Boundary, budget: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("quadrature did not converge: estimate {estimate:e}, error bound {bound:e}")]
    Quadrature { estimate: f64, bound: f64 },

    #[error("non-finite transition density at step {step}, x = {x}, x' = {x_next}")]
    NonFiniteDensity { step: usize, x: f64, x_next: f64 },

    #[error("model error: {0}")]
    Model(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("engine CDF does not cover {uncovered:.2}% of the sample range")]
    Coverage { uncovered: f64 },

    #[error("probability {p} lies outside the resolved CDF range [{lo:e}, {hi}]")]
    TailResolution { p: f64, lo: f64, hi: f64 },

    #[error("refusing: {0}")]
    Refused(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
