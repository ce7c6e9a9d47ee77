//! Dense Gaussian process baseline. Cubic in the number of observations.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, LikelihoodKind, Points};
use crate::error::{GpError, Result};
use crate::fic::Gradient;
use crate::kernel::{cross_covariance, gram, KernelParams, MeanFunction};
use crate::linalg::{cholesky_escalating, Chol};
use crate::predictive::{check_dim, to_vec, GaussianPredictive};

const LN_2PI: f64 = 1.8378770664093453;

/// Exact prior covariance of the latent values at the training inputs.
#[derive(Clone, Debug)]
pub struct DensePrior {
    pub(crate) x: Points,
    pub(crate) k: DMatrix<f64>,
}

impl DensePrior {
    pub fn new(x: &Points, p: &KernelParams) -> Result<Self> {
        if x.dim() != p.dim() {
            return Err(GpError::input(format!(
                "inputs have dimension {} but there are {} lengthscales",
                x.dim(),
                p.dim()
            )));
        }
        Ok(Self {
            x: x.clone(),
            k: gram(x, p)?,
        })
    }

    pub fn len(&self) -> usize {
        self.k.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.k.nrows() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// `1/2 sum_ij G_ij dK_ij/dtheta` for the log-scale hyperparameters.
    pub(crate) fn contract(&self, p: &KernelParams, g: &DMatrix<f64>) -> Vec<f64> {
        let n = self.len();
        let d = p.dim();
        let mut theta = vec![0.0; 1 + d];
        let inv_l2: Vec<f64> = p.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        for j in 0..n {
            let xj = self.x.row(j);
            for i in 0..n {
                let t = g[(i, j)] * self.k[(i, j)];
                theta[0] += t;
                if i == j {
                    continue;
                }
                let xi = self.x.row(i);
                for dd in 0..d {
                    let diff = xi[dd] - xj[dd];
                    theta[1 + dd] += t * diff * diff * inv_l2[dd];
                }
            }
        }
        theta.iter().map(|v| 0.5 * v).collect()
    }
}

/// Predictive machinery for dense fits:
/// `mean = m + k_*^T weights`, `var = k_** - |L^{-1} (s . k_*)|^2`.
#[derive(Clone, Debug)]
pub struct DensePosterior {
    pub(crate) x: Points,
    pub(crate) params: KernelParams,
    pub(crate) mean: MeanFunction,
    pub(crate) chol: Chol,
    pub(crate) weights: DVector<f64>,
    pub(crate) scale: Option<DVector<f64>>,
    pub(crate) noise_variance: f64,
}

impl DensePosterior {
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn predict(&self, xnew: &Points) -> Result<GaussianPredictive> {
        check_dim(self.params.dim(), xnew)?;
        let mut ks = cross_covariance(&self.x, xnew, &self.params)?;
        let mean = ks.tr_mul(&self.weights).map(|v| v + self.mean.value);
        if let Some(s) = &self.scale {
            for mut col in ks.column_iter_mut() {
                col.component_mul_assign(s);
            }
        }
        let t = self.chol.solve_lower(&ks);
        let latent_variance = (0..xnew.len())
            .map(|j| (self.params.signal_variance - t.column(j).norm_squared()).max(0.0))
            .collect();
        Ok(GaussianPredictive {
            mean: to_vec(&mean),
            latent_variance,
            noise_variance: self.noise_variance,
        })
    }
}

/// Dense GP fitted to Gaussian data.
#[derive(Clone, Debug)]
pub struct DenseState {
    prior: DensePrior,
    chol: Chol,
    alpha: DVector<f64>,
    log_marginal: f64,
    params: KernelParams,
    mean: MeanFunction,
}

impl DenseState {
    pub fn fit(data: &Dataset, p: &KernelParams, m: &MeanFunction) -> Result<Self> {
        if data.likelihood != LikelihoodKind::Gaussian {
            return Err(GpError::input("exact marginal likelihood requires gaussian data"));
        }
        if data.is_empty() {
            return Err(GpError::input("dataset is empty"));
        }
        p.validate()?;
        let prior = DensePrior::new(&data.x, p)?;
        let mut ky = prior.k.clone();
        for i in 0..ky.nrows() {
            ky[(i, i)] += p.noise_variance;
        }
        let chol = cholesky_escalating(&ky, 0.0, p.signal_variance)?;
        let r = residuals(data, m);
        let alpha = chol.solve_vec(&r);
        let n = data.len() as f64;
        let log_marginal = -0.5 * r.dot(&alpha) - 0.5 * chol.log_det() - 0.5 * n * LN_2PI;
        if !log_marginal.is_finite() {
            return Err(GpError::numerical("non-finite log marginal likelihood"));
        }
        Ok(Self {
            prior,
            chol,
            alpha,
            log_marginal,
            params: p.clone(),
            mean: *m,
        })
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn gradient(&self) -> Gradient {
        let mut g = self.chol.inverse();
        g.ger(1.0, &self.alpha, &self.alpha, -1.0);
        let theta = self.prior.contract(&self.params, &g);
        let noise = 0.5 * g.trace() * (self.params.noise_variance - self.params.noise_lower_bound);
        Gradient {
            theta,
            noise: Some(noise),
            knots: Vec::new(),
        }
    }

    pub fn posterior(&self) -> DensePosterior {
        DensePosterior {
            x: self.prior.x.clone(),
            params: self.params.clone(),
            mean: self.mean,
            chol: self.chol.clone(),
            weights: self.alpha.clone(),
            scale: None,
            noise_variance: self.params.noise_variance,
        }
    }
}

pub(crate) fn residuals(data: &Dataset, m: &MeanFunction) -> DVector<f64> {
    DVector::from_iterator(
        data.len(),
        (0..data.len()).map(|i| data.y[i] - m.eval(data.x.row(i))),
    )
}

pub fn full_gp_log_marginal(data: &Dataset, p: &KernelParams, m: &MeanFunction) -> Result<f64> {
    Ok(DenseState::fit(data, p, m)?.log_marginal())
}

pub fn full_gp_grad(data: &Dataset, p: &KernelParams, m: &MeanFunction) -> Result<(f64, Gradient)> {
    let s = DenseState::fit(data, p, m)?;
    Ok((s.log_marginal(), s.gradient()))
}

pub fn full_gp_predict(data: &Dataset, p: &KernelParams, m: &MeanFunction, xnew: &Points) -> Result<GaussianPredictive> {
    DenseState::fit(data, p, m)?.posterior().predict(xnew)
}
