//! Predictive accuracy metrics.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};
use crate::likelihood::Likelihood;
use crate::predictive::{response_bands, GaussianPredictive};

pub const GAUSS_HERMITE_POINTS: usize = 20;

/// How the latent Gaussian is turned into a density for non-Gaussian targets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MnlpMode {
    /// Integrate the likelihood against the latent predictive.
    #[default]
    GaussHermite,
    /// Evaluate the likelihood at the latent mean.
    PlugIn,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_test: usize,
    pub srmse: Option<f64>,
    pub mnlp: Option<f64>,
    /// Plug-in MNLP, reported next to the integrated one for non-Gaussian data.
    pub mnlp_plugin: Option<f64>,
    pub aukl: Option<f64>,
    pub rmse: Option<f64>,
    pub neg_log_probs: Vec<f64>,
    pub pointwise_kl: Vec<f64>,
}

/// Nodes and weights of the physicists' Gauss-Hermite rule, from the
/// eigendecomposition of the Jacobi matrix.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(GpError::input(format!("{a} predictions for {b} targets")));
    }
    if a == 0 {
        return Err(GpError::input("no test points"));
    }
    Ok(())
}

/// Lower median (`sorted[(n-1)/2]`); `+inf` entries sort last.
pub fn lower_median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(GpError::input("median of an empty set"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(GpError::numerical("median of values containing NaN"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[(v.len() - 1) / 2])
}

/// `-log p(y_i | data)` for each test point. For Gaussian data this is the
/// response density with the noise included.
pub fn neg_log_probs(
    pred: &GaussianPredictive,
    y: &[f64],
    lik: Likelihood,
    offsets: Option<&[f64]>,
    mode: MnlpMode,
) -> Result<Vec<f64>> {
    check_len(pred.len(), y.len())?;
    let (nodes, weights) = gauss_hermite(GAUSS_HERMITE_POINTS);
    let ln_sqrt_pi = 0.5 * std::f64::consts::PI.ln();
    Ok((0..y.len())
        .map(|i| {
            let mu = pred.mean[i];
            let a = offsets.map_or(1.0, |o| o[i]);
            let v = match lik {
                Likelihood::Gaussian { .. } => {
                    let var = pred.latent_variance[i] + pred.noise_variance;
                    0.5 * (2.0 * std::f64::consts::PI * var).ln() + 0.5 * (y[i] - mu).powi(2) / var
                }
                _ if mode == MnlpMode::PlugIn => -lik.log_density(y[i], mu, a),
                _ => {
                    let s = (2.0 * pred.latent_variance[i]).sqrt();
                    let terms: Vec<f64> = nodes
                        .iter()
                        .zip(&weights)
                        .map(|(x, w)| w.ln() + lik.log_density(y[i], mu + s * x, a))
                        .collect();
                    let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    if mx == f64::NEG_INFINITY {
                        f64::INFINITY
                    } else {
                        let lse = mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln();
                        -(lse - ln_sqrt_pi)
                    }
                }
            };
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        })
        .collect())
}

/// Median negative log probability of the test targets.
pub fn mnlp(
    pred: &GaussianPredictive,
    y: &[f64],
    lik: Likelihood,
    offsets: Option<&[f64]>,
    mode: MnlpMode,
) -> Result<f64> {
    lower_median(&neg_log_probs(pred, y, lik, offsets, mode)?)
}

/// `KL(N(m1, v1) || N(m2, v2))`.
pub fn kl_gaussian(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    if v2 <= 0.0 {
        return if v1 == 0.0 && m1 == m2 { 0.0 } else { f64::INFINITY };
    }
    if v1 <= 0.0 {
        return f64::INFINITY;
    }
    0.5 * (v2 / v1).ln() + (v1 + (m1 - m2).powi(2)) / (2.0 * v2) - 0.5
}

pub fn pointwise_kl(full: &GaussianPredictive, sparse: &GaussianPredictive) -> Result<Vec<f64>> {
    check_len(full.len(), sparse.len())?;
    Ok((0..full.len())
        .map(|i| {
            kl_gaussian(
                full.mean[i],
                full.latent_variance[i],
                sparse.mean[i],
                sparse.latent_variance[i],
            )
        })
        .collect())
}

/// Average univariate KL divergence from the full-GP latent predictive to
/// the sparse one.
pub fn aukl(full: &GaussianPredictive, sparse: &GaussianPredictive) -> Result<f64> {
    let kl = pointwise_kl(full, sparse)?;
    Ok(kl.iter().sum::<f64>() / kl.len() as f64)
}

fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(pred.len(), truth.len())?;
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// RMSE divided by the sample standard deviation (`n - 1` denominator) of
/// the targets.
pub fn srmse(pred: &[f64], y: &[f64]) -> Result<f64> {
    check_len(pred.len(), y.len())?;
    if y.len() < 2 {
        return Err(GpError::input("standardized RMSE needs at least two targets"));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return Err(GpError::input("standardized RMSE is undefined for constant targets"));
    }
    Ok(rmse(pred, y)? / sd)
}

/// RMSE of posterior means against the true latent values.
pub fn rmse_latent(means: &[f64], truth: &[f64]) -> Result<f64> {
    rmse(means, truth)
}

/// Scores a sparse or full predictive on held-out targets. `full` is the
/// reference for AUKL and `latent` the true latent values when known. SRMSE
/// compares the response-scale point prediction with the targets and is left
/// out when the targets are constant.
pub fn report(
    pred: &GaussianPredictive,
    y: &[f64],
    lik: Likelihood,
    offsets: Option<&[f64]>,
    mode: MnlpMode,
    full: Option<&GaussianPredictive>,
    latent: Option<&[f64]>,
) -> Result<MetricReport> {
    check_len(pred.len(), y.len())?;
    let centers: Vec<f64> = response_bands(pred, lik, offsets).iter().map(|b| b.center).collect();
    let srmse = if y.len() >= 2 { srmse(&centers, y).ok() } else { None };
    let nlp = neg_log_probs(pred, y, lik, offsets, mode)?;
    let mnlp_plugin = match lik {
        Likelihood::Gaussian { .. } => None,
        _ => Some(mnlp(pred, y, lik, offsets, MnlpMode::PlugIn)?),
    };
    let (aukl, pointwise_kl) = match full {
        Some(f) => {
            let kl = pointwise_kl(f, pred)?;
            (Some(kl.iter().sum::<f64>() / kl.len() as f64), kl)
        }
        None => (None, Vec::new()),
    };
    let rmse = latent.map(|t| rmse_latent(&pred.mean, t)).transpose()?;
    Ok(MetricReport {
        n_test: y.len(),
        srmse,
        mnlp: Some(lower_median(&nlp)?),
        mnlp_plugin,
        aukl,
        rmse,
        neg_log_probs: nlp,
        pointwise_kl,
    })
}
