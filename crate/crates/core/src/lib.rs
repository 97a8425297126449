//! Distributions of path sums over discretely observed Markov processes,
//! computed by a backward recursion on transition densities.

pub mod config;
pub mod error;
pub mod lattice;
pub mod models;
pub mod oracle;
pub mod pipelines;
pub mod pricing;
pub mod quadrature;
pub mod recursion;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::{DomainPolicy, Grid1D, LatticeFunction, Mode};
pub use models::{QuadSpec, TransitionKernel};
pub use oracle::{McConfig, PathRng};
pub use recursion::{run_recursion, run_scale_invariant, Distribution, DistributionResult, RecursionConfig, StepFunctional};
