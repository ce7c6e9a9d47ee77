//! Marginal predictive distributions and fitted posteriors.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::Points;
use crate::error::{GpError, Result};
use crate::fic::FicPosterior;
use crate::full::DensePosterior;
use crate::likelihood::Likelihood;

/// Pointwise Gaussian predictive: latent mean and variance, plus the
/// observation noise added on top for Gaussian responses (0 for latent-only
/// predictions).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPredictive {
    pub mean: Vec<f64>,
    pub latent_variance: Vec<f64>,
    pub noise_variance: f64,
}

impl GaussianPredictive {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Observation variance (latent variance + noise).
    pub fn variance(&self) -> Vec<f64> {
        self.latent_variance
            .iter()
            .map(|v| v + self.noise_variance)
            .collect()
    }

    /// The same predictive without observation noise.
    pub fn latent(&self) -> GaussianPredictive {
        GaussianPredictive {
            noise_variance: 0.0,
            ..self.clone()
        }
    }
}

/// Point estimate and 95% band on the response scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Pushes a latent Gaussian predictive through the inverse link.
///
/// Gaussian: `mean +- 1.96 sd` using the observation variance. Bernoulli:
/// logistic of `mean` and `mean +- 1.96 sd`. Poisson: `exp(mean +- 1.96 sd) * a`.
pub fn response_bands(pred: &GaussianPredictive, lik: Likelihood, offsets: Option<&[f64]>) -> Vec<Band> {
    const Z: f64 = 1.96;
    (0..pred.len())
        .map(|i| {
            let m = pred.mean[i];
            match lik {
                Likelihood::Gaussian { .. } => {
                    let sd = (pred.latent_variance[i] + pred.noise_variance).sqrt();
                    Band {
                        center: m,
                        lower: m - Z * sd,
                        upper: m + Z * sd,
                    }
                }
                _ => {
                    let sd = pred.latent_variance[i].sqrt();
                    let a = offsets.map_or(1.0, |o| o[i]);
                    Band {
                        center: lik.response(m, a),
                        lower: lik.response(m - Z * sd, a),
                        upper: lik.response(m + Z * sd, a),
                    }
                }
            }
        })
        .collect()
}

/// A fitted model's posterior over the latent function.
#[derive(Clone, Debug)]
pub enum Posterior {
    Sparse(FicPosterior),
    Full(DensePosterior),
}

impl Posterior {
    pub fn predict(&self, xnew: &Points) -> Result<GaussianPredictive> {
        match self {
            Posterior::Sparse(p) => p.predict(xnew),
            Posterior::Full(p) => p.predict(xnew),
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: &Points) -> Result<()> {
    if got.dim() != expected {
        return Err(GpError::input(format!(
            "prediction inputs have dimension {}, model expects {}",
            got.dim(),
            expected
        )));
    }
    Ok(())
}

pub(crate) fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}
