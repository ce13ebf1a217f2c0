//! Digital simulator for an analog portfolio-optimization pipeline.
//!
//! The pipeline has two analog stages, both simulated here by integrating
//! their ODEs with fixed-step schemes:
//!
//! 1. **Factor estimation.** Encoder and decoder continuous Hopfield networks
//!    are trained as a linear autoencoder with equilibrium propagation
//!    ([`autoencoder`]). The decoder's steady-state map yields the loading
//!    matrix `A`, the encoder's steady states yield latent factors whose
//!    second moment is `P`, and `A P A^T + Ψ` is a low-rank covariance
//!    estimate. [`lowrank`] provides the truncated eigendecomposition
//!    reference for the same quantity.
//! 2. **Portfolio selection.** The penalized Markowitz problem is encoded as
//!    Hopfield couplings and biases and solved by annealed gradient flow
//!    ([`hopfield`]). Sweeping the target return traces the efficient
//!    frontier ([`frontier`]).
//!
//! All matrices are `nalgebra` dynamic matrices of `f64`. Asset returns are
//! stored one asset per row and one time sample per column.

pub mod autoencoder;
pub mod error;
pub mod frontier;
pub mod hopfield;
pub mod linalg;
pub mod lowrank;
pub mod market_data;
pub mod table;

pub use error::{Error, Result};
pub use frontier::{FrontierCurve, FrontierPoint, Portfolio};
pub use hopfield::{QpEncoding, SolverConfig, SolverOptions};
pub use lowrank::FactorModel;
pub use market_data::{CovarianceEstimate, ExpectedReturns, Provenance, ReturnsMatrix};
