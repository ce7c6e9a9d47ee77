//! Likelihood-agnostic entry points and the packing of model parameters
//! into a flat vector for gradient ascent.

use std::time::{Duration, Instant};

use crate::data::{Dataset, LikelihoodKind, Points};
use crate::error::{GpError, Result};
use crate::fic::{fic_grad, fic_log_marginal, FicState, Gradient};
use crate::full::{full_gp_grad, full_gp_log_marginal, DenseState};
use crate::kernel::{KernelParams, MeanFunction};
use crate::laplace::{laplace_fit, laplace_full_fit};
use crate::likelihood::Likelihood;
use crate::optimize::{run_ascent, AdadeltaState, AscentResult, ConvergenceSpec};
use crate::predictive::Posterior;

/// Observation model of `data` under the noise level in `p`.
pub fn likelihood_for(data: &Dataset, p: &KernelParams) -> Likelihood {
    match data.likelihood {
        LikelihoodKind::Gaussian => Likelihood::Gaussian {
            noise_variance: p.noise_variance,
        },
        LikelihoodKind::Bernoulli => Likelihood::BernoulliLogit,
        LikelihoodKind::Poisson => Likelihood::PoissonLog,
    }
}

/// Log marginal likelihood (exact for Gaussian data, Laplace otherwise).
/// `knots = None` selects the dense prior.
pub fn log_marginal(data: &Dataset, knots: Option<&Points>, p: &KernelParams, m: &MeanFunction) -> Result<f64> {
    match (data.likelihood, knots) {
        (LikelihoodKind::Gaussian, Some(k)) => fic_log_marginal(data, k, p, m),
        (LikelihoodKind::Gaussian, None) => full_gp_log_marginal(data, p, m),
        (_, Some(k)) => Ok(laplace_fit(data, k, p, m, likelihood_for(data, p))?.log_marginal()),
        (_, None) => Ok(laplace_full_fit(data, p, m, likelihood_for(data, p))?.log_marginal()),
    }
}

pub fn log_marginal_grad(
    data: &Dataset,
    knots: Option<&Points>,
    p: &KernelParams,
    m: &MeanFunction,
) -> Result<(f64, Gradient)> {
    match (data.likelihood, knots) {
        (LikelihoodKind::Gaussian, Some(k)) => fic_grad(data, k, p, m),
        (LikelihoodKind::Gaussian, None) => full_gp_grad(data, p, m),
        (_, Some(k)) => {
            let s = laplace_fit(data, k, p, m, likelihood_for(data, p))?;
            Ok((s.log_marginal(), s.gradient(data, p)))
        }
        (_, None) => {
            let s = laplace_full_fit(data, p, m, likelihood_for(data, p))?;
            Ok((s.log_marginal(), s.gradient(data, p)))
        }
    }
}

/// Fitted posterior for predictions.
pub fn posterior(data: &Dataset, knots: Option<&Points>, p: &KernelParams, m: &MeanFunction) -> Result<Posterior> {
    match (data.likelihood, knots) {
        (LikelihoodKind::Gaussian, Some(k)) => Ok(Posterior::Sparse(FicState::fit(data, k, p, m)?.posterior())),
        (LikelihoodKind::Gaussian, None) => Ok(Posterior::Full(DenseState::fit(data, p, m)?.posterior())),
        (_, Some(k)) => Ok(laplace_fit(data, k, p, m, likelihood_for(data, p))?.posterior(p, m)),
        (_, None) => Ok(laplace_full_fit(data, p, m, likelihood_for(data, p))?.posterior(p, m)),
    }
}

/// Constant mean used when none is given: the target mean for Gaussian
/// data, the log pooled rate for counts and 0 (probability 1/2) for binary
/// data.
pub fn default_mean(data: &Dataset) -> MeanFunction {
    match data.likelihood {
        LikelihoodKind::Gaussian => {
            MeanFunction::constant(data.y.iter().sum::<f64>() / data.len().max(1) as f64)
        }
        LikelihoodKind::Poisson => {
            let total: f64 = data.y.iter().sum();
            let exposure: f64 = (0..data.len()).map(|i| data.offset(i)).sum();
            MeanFunction::constant(((total + 0.5) / exposure).ln())
        }
        LikelihoodKind::Bernoulli => MeanFunction::zero(),
    }
}

/// Starting hyperparameters: signal variance from the spread of the targets
/// (Gaussian) or 1, lengthscales a fifth of each input range, noise a tenth of
/// the target variance.
pub fn default_params(data: &Dataset) -> Result<KernelParams> {
    if data.is_empty() {
        return Err(GpError::input("dataset is empty"));
    }
    let lengthscales = data
        .x
        .bounds()
        .iter()
        .map(|(lo, hi)| {
            let r = hi - lo;
            if r > 0.0 {
                0.2 * r
            } else {
                1.0
            }
        })
        .collect();
    match data.likelihood {
        LikelihoodKind::Gaussian => {
            let n = data.len() as f64;
            let mu = data.y.iter().sum::<f64>() / n;
            let var = data.y.iter().map(|y| (y - mu).powi(2)).sum::<f64>() / n;
            let var = if var > 0.0 { var } else { 1.0 };
            KernelParams::new(var, lengthscales, 0.1 * var)
        }
        _ => KernelParams::new(1.0, lengthscales, 1.0),
    }
}

/// Which parts of the model are free during an ascent. The flat vector is
/// `[ln sigma_f^2, ln l_1..ln l_d, (noise), free knot coordinates]`, where
/// the noise coordinate is present for Gaussian data only and the free
/// knots are the rows from `first_free_knot` on.
#[derive(Clone, Debug)]
pub struct ParamLayout {
    pub n_theta: usize,
    pub has_noise: bool,
    pub first_free_knot: usize,
    pub n_knots: usize,
    pub dim: usize,
}

impl ParamLayout {
    pub fn new(data: &Dataset, p: &KernelParams, knots: Option<&Points>, first_free_knot: usize) -> Self {
        let n_knots = knots.map_or(0, |k| k.len());
        Self {
            n_theta: p.n_theta(),
            has_noise: data.likelihood == LikelihoodKind::Gaussian,
            first_free_knot: first_free_knot.min(n_knots),
            n_knots,
            dim: p.dim(),
        }
    }

    pub fn len(&self) -> usize {
        self.n_theta + usize::from(self.has_noise) + (self.n_knots - self.first_free_knot) * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pack(&self, p: &KernelParams, knots: Option<&Points>) -> Vec<f64> {
        let mut v = p.theta();
        if self.has_noise {
            v.push(p.noise_raw());
        }
        if let Some(k) = knots {
            v.extend_from_slice(&k.as_slice()[self.first_free_knot * self.dim..]);
        }
        v
    }

    pub fn unpack(&self, v: &[f64], p: &mut KernelParams, knots: Option<&mut Points>) {
        p.set_theta(&v[..self.n_theta]);
        let mut at = self.n_theta;
        if self.has_noise {
            p.set_noise_raw(v[at]);
            at += 1;
        }
        if let Some(k) = knots {
            k.as_mut_slice()[self.first_free_knot * self.dim..].copy_from_slice(&v[at..]);
        }
    }

    pub fn flatten(&self, g: &Gradient) -> Vec<f64> {
        let mut v = g.theta.clone();
        if self.has_noise {
            v.push(g.noise.unwrap_or(0.0));
        }
        if self.n_knots > 0 {
            v.extend_from_slice(&g.knots[self.first_free_knot * self.dim..]);
        }
        v
    }
}

/// Outcome of one gradient-ascent run over a subset of the parameters.
#[derive(Clone, Debug)]
pub struct ParamFit {
    pub params: KernelParams,
    pub knots: Option<Points>,
    pub log_marginal: f64,
    pub ascent: AscentResult,
    pub elapsed: Duration,
}

/// Maximizes the log marginal likelihood over the hyperparameters and the
/// knots from row `first_free_knot` on (pass the knot count to keep every
/// knot fixed). The mean stays fixed.
pub fn optimize_params(
    data: &Dataset,
    knots: Option<&Points>,
    first_free_knot: usize,
    p0: &KernelParams,
    m: &MeanFunction,
    spec: &ConvergenceSpec,
) -> Result<ParamFit> {
    let layout = ParamLayout::new(data, p0, knots, first_free_knot);
    let x0 = layout.pack(p0, knots);
    let mut p = p0.clone();
    let mut k = knots.cloned();
    let start = Instant::now();
    let objective = |v: &[f64]| {
        layout.unpack(v, &mut p, k.as_mut());
        p.validate()?;
        let (f, g) = log_marginal_grad(data, k.as_ref(), &p, m)?;
        Ok((f, layout.flatten(&g)))
    };
    let ascent = run_ascent(objective, &x0, AdadeltaState::new(layout.len()), spec)?;
    let elapsed = start.elapsed();
    let mut params = p0.clone();
    let mut out_knots = knots.cloned();
    layout.unpack(&ascent.params, &mut params, out_knots.as_mut());
    Ok(ParamFit {
        params,
        knots: out_knots,
        log_marginal: ascent.objective,
        ascent,
        elapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_roundtrip() {
        let x = Points::from_scalars(&[0.0, 1.0, 2.0]);
        let data = Dataset::gaussian(x, vec![0.0, 1.0, 0.5]).unwrap();
        let p = KernelParams::new(1.3, vec![0.4], 0.2).unwrap();
        let knots = Points::from_scalars(&[0.1, 0.9, 1.7]);
        let layout = ParamLayout::new(&data, &p, Some(&knots), 2);
        assert_eq!(layout.len(), 4);
        let v = layout.pack(&p, Some(&knots));
        let mut p2 = KernelParams::new(1.0, vec![1.0], 0.5).unwrap();
        p2.noise_lower_bound = p.noise_lower_bound;
        let mut k2 = knots.clone();
        k2.as_mut_slice()[2] = 5.0;
        layout.unpack(&v, &mut p2, Some(&mut k2));
        assert!((p2.signal_variance - 1.3).abs() < 1e-12);
        assert!((p2.noise_variance - 0.2).abs() < 1e-12);
        assert_eq!(k2.as_slice(), knots.as_slice());
    }

    #[test]
    fn frozen_knots_do_not_move() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let data = Dataset::gaussian(Points::from_scalars(&xs), y).unwrap();
        let p = KernelParams::new(1.0, vec![1.0], 0.1).unwrap();
        let knots = Points::from_scalars(&[1.0, 4.0, 8.5]);
        let spec = ConvergenceSpec {
            max_iters: 50,
            ..Default::default()
        };
        let fit = optimize_params(&data, Some(&knots), 2, &p, &MeanFunction::zero(), &spec).unwrap();
        let k = fit.knots.unwrap();
        assert_eq!(&k.as_slice()[..2], &[1.0, 4.0]);
        assert_ne!(k.as_slice()[2], 8.5);
        let start = log_marginal(&data, Some(&knots), &p, &MeanFunction::zero()).unwrap();
        assert!(fit.log_marginal >= start);
    }

    #[test]
    fn default_means() {
        let x = Points::from_scalars(&[0.0, 1.0]);
        let d = Dataset::new(x.clone(), vec![3.0, 1.0], Some(vec![1.0, 1.0]), LikelihoodKind::Poisson).unwrap();
        assert!((default_mean(&d).value - (4.5f64 / 2.0).ln()).abs() < 1e-12);
        let b = Dataset::new(x, vec![1.0, 0.0], None, LikelihoodKind::Bernoulli).unwrap();
        assert_eq!(default_mean(&b).value, 0.0);
    }
}
