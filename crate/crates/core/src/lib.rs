//! Bayesian quantile regression for binary longitudinal data.
//!
//! The latent utility `z_it = x_it' beta + s_it' alpha_i + eps_it` carries an
//! asymmetric Laplace error `eps_it ~ AL(0, 1, p)` and `y_it = 1{z_it > 0}`.
//! Writing the error as a normal-exponential mixture gives a Gibbs sampler
//! with closed-form full conditionals; [`sampler`] implements both the
//! blocked and the non-blocked variant.

pub mod diagnostics;
pub mod distributions;
pub mod draws;
pub mod error;
pub mod inference;
pub mod model;
pub mod rng;
pub mod sampler;

pub use draws::{DrawMetadata, DrawStore};
pub use error::{QbldError, Result};
pub use rng::RandomStream;
