//! Sparse Gaussian process regression with a fully independent conditional
//! (FIC) approximation and greedy, one-at-a-time knot placement.

// `!(x > 0.0)` style checks are used on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod fic;
pub mod full;
pub mod kernel;
pub mod laplace;
pub mod likelihood;
mod linalg;
pub mod metrics;
pub mod model;
pub mod oat;
pub mod optimize;
pub mod predictive;
pub mod rng;
pub mod synth;

pub use data::{Dataset, LikelihoodKind, Points};
pub use error::{GpError, Result};
pub use fic::{fic_grad, fic_log_marginal, fic_predict, FicPosterior, FicPrior, FicState, Gradient};
pub use full::{full_gp_grad, full_gp_log_marginal, full_gp_predict, DensePosterior, DensePrior, DenseState};
pub use kernel::{KernelParams, MeanFunction};
pub use laplace::{laplace_grad, laplace_log_marginal, laplace_predict, newton_mode, LaplaceState, PriorCovariance};
pub use likelihood::Likelihood;
pub use predictive::{response_bands, Band, GaussianPredictive, Posterior};
