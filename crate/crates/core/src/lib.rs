//! Bayesian function-on-scalar regression with priors that select, cluster
//! and smooth the coefficient curves of scalar predictors.
//!
//! The crate covers the B-spline basis and penalty ([`basis`]), the data and
//! parameter types with the vectorized-model algebra ([`model`]), the Gibbs
//! sampler for the FOSR, FOSR-PM, FOSR-DP and FOSR-DPPM priors ([`sampler`]),
//! the simulation designs ([`simulation`]), posterior summaries and metrics
//! ([`evaluation`]), dataset CSV I/O ([`io`]) and the replicate study driver
//! ([`study`]).

pub mod basis;
pub mod error;
pub mod evaluation;
pub mod geweke;
pub mod io;
mod linalg;
pub mod model;
pub mod sampler;
pub mod seeding;
pub mod simulation;
pub mod study;

pub use basis::BasisSystem;
pub use error::{Error, Result};
pub use linalg::normalize_log_weights;
pub use model::{FunctionalDataset, GammaPrior, ModelState, PriorConfig, Variant};
pub use sampler::{run_chain, ChainOptions, ChainOutput, GibbsSampler};
