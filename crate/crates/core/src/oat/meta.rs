//! Gaussian process over the log marginal likelihood as a function of a
//! candidate knot location, and the expected-improvement acquisition.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::Points;
use crate::error::{GpError, Result};
use crate::kernel::scaled_sq_dist;
use crate::linalg::{cholesky_escalating, col_sq_norms, Chol};
use crate::optimize::{run_ascent, AdadeltaState, ConvergenceSpec};

const SIGNAL_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaGpConfig {
    /// Noise on explored values; 0 interpolates them exactly.
    pub noise_variance: f64,
    /// Adadelta iterations spent refitting the hyperparameters each round.
    pub refit_iters: usize,
    /// Diagonal jitter relative to the meta signal variance.
    pub relative_jitter: f64,
}

impl Default for MetaGpConfig {
    fn default() -> Self {
        Self {
            noise_variance: 0.0,
            refit_iters: 50,
            relative_jitter: 1e-10,
        }
    }
}

/// Explored candidates plus anchors at the current knots. The prior mean is
/// the current log marginal likelihood, and the anchors are pinned to it,
/// because a duplicate knot leaves the likelihood unchanged.
#[derive(Clone, Debug)]
pub struct MetaGp {
    config: MetaGpConfig,
    baseline: f64,
    n_anchors: usize,
    inputs: Points,
    values: Vec<f64>,
    signal_variance: f64,
    lengthscales: Vec<f64>,
    optimizer: Option<AdadeltaState>,
    chol: Option<Chol>,
    alpha: DVector<f64>,
}

impl MetaGp {
    pub fn new(anchors: &Points, baseline: f64, lengthscales: Vec<f64>, config: MetaGpConfig) -> Result<Self> {
        if !baseline.is_finite() {
            return Err(GpError::input("meta GP baseline must be finite"));
        }
        if lengthscales.len() != anchors.dim() || lengthscales.iter().any(|l| !(*l > 0.0)) {
            return Err(GpError::input("meta GP lengthscales must be positive, one per dimension"));
        }
        if !(config.noise_variance >= 0.0 && config.relative_jitter >= 0.0) {
            return Err(GpError::input("meta GP noise and jitter must be nonnegative"));
        }
        Ok(Self {
            config,
            baseline,
            n_anchors: anchors.len(),
            inputs: anchors.clone(),
            values: vec![baseline; anchors.len()],
            signal_variance: 1.0,
            lengthscales,
            optimizer: None,
            chol: None,
            alpha: DVector::zeros(0),
        })
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn n_explored(&self) -> usize {
        self.inputs.len() - self.n_anchors
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    /// Best value seen so far, counting the baseline.
    pub fn incumbent(&self) -> f64 {
        self.values.iter().cloned().fold(self.baseline, f64::max)
    }

    pub fn add(&mut self, z: &[f64], w: f64) -> Result<()> {
        if !w.is_finite() {
            return Err(GpError::input("explored values must be finite"));
        }
        self.inputs.push(z)?;
        self.values.push(w);
        self.chol = None;
        Ok(())
    }

    fn centered(&self) -> DVector<f64> {
        DVector::from_iterator(self.values.len(), self.values.iter().map(|w| w - self.baseline))
    }

    fn covariance(&self, s2: f64, ls: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.inputs.len();
        let corr = DMatrix::from_fn(n, n, |i, j| {
            (-0.5 * scaled_sq_dist(self.inputs.row(i), self.inputs.row(j), ls)).exp()
        });
        let mut c = &corr * s2;
        for i in 0..n {
            c[(i, i)] += self.config.relative_jitter * s2;
            if i >= self.n_anchors {
                c[(i, i)] += self.config.noise_variance;
            }
        }
        (c, corr)
    }

    /// Log marginal likelihood of the centered values and its gradient
    /// with respect to `(ln s2, ln l_1..)`.
    fn objective(&self, s2: f64, ls: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.inputs.len();
        let d = ls.len();
        let (c, corr) = self.covariance(s2, ls);
        let chol = cholesky_escalating(&c, 0.0, s2)?;
        let t = self.centered();
        let alpha = chol.solve_vec(&t);
        let lml = -0.5 * t.dot(&alpha) - 0.5 * chol.log_det() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        let mut g = chol.inverse();
        g.ger(1.0, &alpha, &alpha, -1.0);
        let mut grad = vec![0.0; 1 + d];
        for j in 0..n {
            for i in 0..n {
                let k = s2 * corr[(i, j)];
                let gij = g[(i, j)];
                grad[0] += gij * k;
                if i == j {
                    grad[0] += gij * self.config.relative_jitter * s2;
                    continue;
                }
                let (xi, xj) = (self.inputs.row(i), self.inputs.row(j));
                for dd in 0..d {
                    let diff = (xi[dd] - xj[dd]) / ls[dd];
                    grad[1 + dd] += gij * k * diff * diff;
                }
            }
        }
        for v in grad.iter_mut() {
            *v *= 0.5;
        }
        Ok((lml, grad))
    }

    /// Short Adadelta ascent on the meta hyperparameters, continuing from
    /// the previous refit. The first call sets the signal variance to the
    /// mean square of the centered values.
    pub fn refit(&mut self) -> Result<()> {
        if self.optimizer.is_none() {
            let t = self.centered();
            self.signal_variance = (t.norm_squared() / t.len().max(1) as f64).max(SIGNAL_FLOOR);
            self.optimizer = Some(AdadeltaState::new(1 + self.lengthscales.len()));
        }
        if self.config.refit_iters > 0 && self.n_explored() > 0 {
            let x0: Vec<f64> = std::iter::once(self.signal_variance.ln())
                .chain(self.lengthscales.iter().map(|l| l.ln()))
                .collect();
            let spec = ConvergenceSpec {
                objective_tol: 1e-8,
                grad_tol: 1e-8,
                max_iters: self.config.refit_iters,
                window: 5,
            };
            let state = self.optimizer.take().expect("set above");
            let fallback = state.clone();
            let this = &*self;
            let result = run_ascent(
                |v: &[f64]| {
                    let ls: Vec<f64> = v[1..].iter().map(|x| x.exp()).collect();
                    this.objective(v[0].exp(), &ls)
                },
                &x0,
                state,
                &spec,
            );
            match result {
                Ok(r) => {
                    self.signal_variance = r.params[0].exp().max(SIGNAL_FLOOR);
                    for (l, v) in self.lengthscales.iter_mut().zip(&r.params[1..]) {
                        *l = v.exp();
                    }
                    self.optimizer = Some(r.state);
                }
                Err(e) => {
                    log::debug!("meta GP refit skipped: {e}");
                    self.optimizer = Some(fallback);
                }
            }
        }
        self.condition()
    }

    /// Factorizes the covariance at the current hyperparameters.
    pub fn condition(&mut self) -> Result<()> {
        let (c, _) = self.covariance(self.signal_variance, &self.lengthscales);
        let chol = cholesky_escalating(&c, 0.0, self.signal_variance)?;
        self.alpha = chol.solve_vec(&self.centered());
        self.chol = Some(chol);
        Ok(())
    }

    /// Posterior mean and variance at each row of `z`.
    pub fn predict(&self, z: &Points) -> Result<(Vec<f64>, Vec<f64>)> {
        let chol = self
            .chol
            .as_ref()
            .ok_or_else(|| GpError::input("meta GP must be conditioned before predicting"))?;
        let kz = DMatrix::from_fn(self.inputs.len(), z.len(), |i, j| {
            self.signal_variance * (-0.5 * scaled_sq_dist(self.inputs.row(i), z.row(j), &self.lengthscales)).exp()
        });
        let mean = kz.tr_mul(&self.alpha).map(|v| v + self.baseline);
        let reduction = col_sq_norms(&chol.solve_lower(&kz));
        let var = reduction.map(|r| (self.signal_variance - r).max(0.0));
        Ok((mean.iter().cloned().collect(), var.iter().cloned().collect()))
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[max(W - best, 0)]` for `W ~ N(mean, variance)`.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> Result<f64> {
    if variance.is_nan() || variance < 0.0 {
        return Err(GpError::numerical(format!("negative predictive variance {variance}")));
    }
    let gap = mean - best;
    let s = variance.sqrt();
    if s == 0.0 {
        return Ok(gap.max(0.0));
    }
    let z = gap / s;
    Ok((gap * std_normal_cdf(z) + s * std_normal_pdf(z)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ei_at_incumbent_with_unit_sd() {
        let v = expected_improvement(2.0, 1.0, 2.0).unwrap();
        assert!((v - 0.3989422804014327).abs() < 1e-12);
    }

    #[test]
    fn ei_without_uncertainty() {
        assert_eq!(expected_improvement(1.0, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(expected_improvement(3.5, 0.0, 2.0).unwrap(), 1.5);
        assert!(expected_improvement(1.0, -1e-3, 2.0).is_err());
    }

    #[test]
    fn ei_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &(mu, s, best) in &[(0.0, 1.0, 0.5), (1.0, 0.3, 0.2), (-2.0, 2.0, 0.0)] {
            let n = 200_000;
            let mut acc = 0.0;
            for _ in 0..n {
                let w: f64 = mu + s * rng.sample::<f64, _>(rand_distr::StandardNormal);
                acc += (w - best).max(0.0);
            }
            let mc = acc / n as f64;
            let ei = expected_improvement(mu, s * s, best).unwrap();
            assert!((mc - ei).abs() < 1e-2, "{mc} vs {ei}");
        }
    }

    fn toy_meta(noise: f64) -> MetaGp {
        let anchors = Points::from_scalars(&[0.0, 2.0]);
        let cfg = MetaGpConfig {
            noise_variance: noise,
            ..Default::default()
        };
        let mut m = MetaGp::new(&anchors, -100.0, vec![1.0], cfg).unwrap();
        m.add(&[1.0], -95.0).unwrap();
        m.add(&[3.0], -99.0).unwrap();
        m.add(&[4.5], -92.0).unwrap();
        m.refit().unwrap();
        m
    }

    #[test]
    fn interpolates_anchors_and_explored_points() {
        let m = toy_meta(0.0);
        let (mean, var) = m.predict(&Points::from_scalars(&[0.0, 2.0, 1.0, 3.0, 4.5])).unwrap();
        let expected = [-100.0, -100.0, -95.0, -99.0, -92.0];
        for i in 0..5 {
            assert!((mean[i] - expected[i]).abs() < 1e-8, "{} vs {}", mean[i], expected[i]);
            let ei = expected_improvement(mean[i], var[i], m.incumbent()).unwrap();
            // only the relative jitter keeps the variance off zero
            assert!(var[i] < 1e-9 * m.signal_variance());
            assert!(ei <= 0.4 * var[i].sqrt() + 1e-12, "ei {ei} at {i}");
        }
        assert_eq!(m.incumbent(), -92.0);
    }

    #[test]
    fn reverts_to_baseline_far_away() {
        let m = toy_meta(0.0);
        let (mean, var) = m.predict(&Points::from_scalars(&[1e3])).unwrap();
        assert!((mean[0] + 100.0).abs() < 1e-9);
        assert!((var[0] - m.signal_variance()).abs() < 1e-9);
    }

    #[test]
    fn refit_improves_meta_likelihood() {
        let mut m = toy_meta(0.0);
        let before = m.objective(m.signal_variance(), m.lengthscales()).unwrap().0;
        for _ in 0..5 {
            m.refit().unwrap();
        }
        let after = m.objective(m.signal_variance(), m.lengthscales()).unwrap().0;
        assert!(after >= before);
    }

    #[test]
    fn meta_gradient_matches_differences() {
        let m = toy_meta(0.3);
        let (s2, ls) = (2.5, vec![0.8]);
        let (_, g) = m.objective(s2, &ls).unwrap();
        let h = 1e-6;
        let f = |a: f64, b: f64| m.objective(a.exp(), &[b.exp()]).unwrap().0;
        let fd0 = (f(s2.ln() + h, ls[0].ln()) - f(s2.ln() - h, ls[0].ln())) / (2.0 * h);
        let fd1 = (f(s2.ln(), ls[0].ln() + h) - f(s2.ln(), ls[0].ln() - h)) / (2.0 * h);
        assert!((fd0 - g[0]).abs() < 1e-5 * fd0.abs().max(1.0));
        assert!((fd1 - g[1]).abs() < 1e-5 * fd1.abs().max(1.0));
    }
}
