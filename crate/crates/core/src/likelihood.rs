//! Observation likelihoods used by the Laplace approximation.
//!
//! Each likelihood supplies `log p(y | f)` and its first three derivatives in
//! `f`. All kinds are log-concave, so `w = -d2 >= 0`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LikelihoodKind};
use crate::error::{GpError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Likelihood {
    /// Identity link with the given noise variance. Only used to validate the
    /// Laplace machinery against the exact Gaussian marginal.
    Gaussian { noise_variance: f64 },
    /// Logistic link.
    BernoulliLogit,
    /// Log link with per-observation exposure offsets.
    PoissonLog,
}

/// First three derivatives of `log p(y | f)`, with `w = -d2`.
#[derive(Clone, Copy, Debug)]
pub struct Derivatives {
    pub d1: f64,
    pub w: f64,
    pub d3: f64,
}

pub fn logistic(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^f)` without overflow.
pub(crate) fn log1p_exp(f: f64) -> f64 {
    if f > 0.0 {
        f + (-f).exp().ln_1p()
    } else {
        f.exp().ln_1p()
    }
}

pub(crate) fn ln_factorial(k: f64) -> f64 {
    statrs::function::gamma::ln_gamma(k + 1.0)
}

impl Likelihood {
    /// The likelihood matching a non-Gaussian dataset; Gaussian datasets need
    /// an explicit noise variance and use the exact path instead.
    pub fn for_dataset(data: &Dataset) -> Result<Self> {
        match data.likelihood {
            LikelihoodKind::Bernoulli => Ok(Likelihood::BernoulliLogit),
            LikelihoodKind::Poisson => Ok(Likelihood::PoissonLog),
            LikelihoodKind::Gaussian => Err(GpError::input(
                "gaussian data uses the exact marginal likelihood, not the laplace path",
            )),
        }
    }

    pub fn log_density(&self, y: f64, f: f64, offset: f64) -> f64 {
        match *self {
            Likelihood::Gaussian { noise_variance } => {
                let r = y - f;
                -0.5 * r * r / noise_variance
                    - 0.5 * (2.0 * std::f64::consts::PI * noise_variance).ln()
            }
            Likelihood::BernoulliLogit => y * f - log1p_exp(f),
            Likelihood::PoissonLog => y * (f + offset.ln()) - offset * f.exp() - ln_factorial(y),
        }
    }

    pub fn derivatives(&self, y: f64, f: f64, offset: f64) -> Derivatives {
        match *self {
            Likelihood::Gaussian { noise_variance } => Derivatives {
                d1: (y - f) / noise_variance,
                w: 1.0 / noise_variance,
                d3: 0.0,
            },
            Likelihood::BernoulliLogit => {
                let p = logistic(f);
                let w = p * (1.0 - p);
                Derivatives {
                    d1: y - p,
                    w,
                    d3: -w * (1.0 - 2.0 * p),
                }
            }
            Likelihood::PoissonLog => {
                let mu = offset * f.exp();
                Derivatives {
                    d1: y - mu,
                    w: mu,
                    d3: -mu,
                }
            }
        }
    }

    /// Inverse link applied to a latent value: the mean response per unit
    /// exposure times `offset` for Poisson, the success probability for
    /// Bernoulli, and the identity for Gaussian.
    pub fn response(&self, f: f64, offset: f64) -> f64 {
        match self {
            Likelihood::Gaussian { .. } => f,
            Likelihood::BernoulliLogit => logistic(f),
            Likelihood::PoissonLog => f.exp() * offset,
        }
    }

    pub(crate) fn sum_log_density(&self, data: &Dataset, f: &DVector<f64>) -> f64 {
        (0..data.len())
            .map(|i| self.log_density(data.y[i], f[i], data.offset(i)))
            .sum()
    }
}
