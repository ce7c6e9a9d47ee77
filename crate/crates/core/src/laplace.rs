//! Laplace approximation for non-Gaussian likelihoods.
//!
//! The mode is found by Newton iterations on `a` with `f = m + Psi a`, so
//! that `Psi^{-1}` is never formed. Everything is expressed through
//! `R = (Psi + W^{-1})^{-1}`, which stays bounded when some `W_i` vanish.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, Points};
use crate::error::{GpError, Result};
use crate::fic::{with_knots, FicPosterior, FicPrior, Gradient, Woodbury};
use crate::full::{DensePosterior, DensePrior};
use crate::kernel::{KernelParams, MeanFunction};
use crate::likelihood::Likelihood;
use crate::linalg::{cholesky_escalating, col_sq_norms, Chol};
use crate::predictive::{GaussianPredictive, Posterior};

pub const NEWTON_TOLERANCE: f64 = 1e-8;
pub const NEWTON_MAX_ITERS: usize = 100;
const MAX_HALVINGS: usize = 30;

/// Prior covariance of the latent values at the training inputs.
#[derive(Clone, Debug)]
pub enum PriorCovariance {
    Fic(FicPrior),
    Dense(DensePrior),
}

impl PriorCovariance {
    pub fn len(&self) -> usize {
        match self {
            Self::Fic(p) => p.len(),
            Self::Dense(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cov_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Fic(p) => p.cov_mul(v),
            Self::Dense(p) => &p.k * v,
        }
    }

    fn factor(&self, w: &DVector<f64>) -> Result<Factor> {
        match self {
            Self::Fic(p) => {
                let dinv = w.zip_map(&p.lambda, |w, l| w / (1.0 + w * l));
                let log_det_diag = w.zip_map(&p.lambda, |w, l| (w * l).ln_1p()).sum();
                Ok(Factor::Fic {
                    woodbury: p.woodbury(dinv)?,
                    log_det_diag,
                })
            }
            Self::Dense(p) => {
                let sw = w.map(f64::sqrt);
                let mut b = p.k.clone();
                for j in 0..b.ncols() {
                    for i in 0..b.nrows() {
                        b[(i, j)] *= sw[i] * sw[j];
                    }
                    b[(j, j)] += 1.0;
                }
                Ok(Factor::Dense {
                    chol: cholesky_escalating(&b, 0.0, 1.0)?,
                    sqrt_w: sw,
                })
            }
        }
    }
}

/// Factorization of `B = I + W^{1/2} Psi W^{1/2}`.
#[derive(Clone, Debug)]
enum Factor {
    Fic { woodbury: Woodbury, log_det_diag: f64 },
    Dense { chol: Chol, sqrt_w: DVector<f64> },
}

impl Factor {
    /// `R v` with `R = (Psi + W^{-1})^{-1}`.
    fn apply_r(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Fic { woodbury, .. } => woodbury.apply(v),
            Self::Dense { chol, sqrt_w } => {
                sqrt_w.component_mul(&chol.solve_vec(&sqrt_w.component_mul(v)))
            }
        }
    }

    fn log_det_b(&self) -> f64 {
        match self {
            Self::Fic { woodbury, log_det_diag } => log_det_diag + woodbury.log_det_a(),
            Self::Dense { chol, .. } => chol.log_det(),
        }
    }

    /// Diagonal of the approximate posterior covariance `Psi - Psi R Psi`.
    fn posterior_diag(&self, prior: &PriorCovariance) -> DVector<f64> {
        match (self, prior) {
            (Self::Fic { woodbury, .. }, PriorCovariance::Fic(p)) => {
                let v = &p.v;
                let lam = &p.lambda;
                let dinv = &woodbury.dinv;
                let vsq = col_sq_norms(v);
                // A - I = V diag(dinv) V^T
                let a_minus_i = woodbury.chol_a.l.clone() * woodbury.chol_a.l.transpose()
                    - DMatrix::identity(v.nrows(), v.nrows());
                let quad = col_sums(&v.component_mul(&(&a_minus_i * v)));
                let mut c_psi = crate::linalg::scale_columns(&woodbury.c, lam);
                c_psi.gemm(1.0, &(&woodbury.c * v.transpose()), v, 1.0);
                let cpsi_sq = col_sq_norms(&c_psi);
                DVector::from_fn(lam.len(), |i, _| {
                    let prior_var = lam[i] + vsq[i];
                    let reduction = lam[i] * lam[i] * dinv[i] + 2.0 * lam[i] * dinv[i] * vsq[i]
                        + quad[i]
                        - cpsi_sq[i];
                    (prior_var - reduction).max(0.0)
                })
            }
            (Self::Dense { chol, sqrt_w }, PriorCovariance::Dense(p)) => {
                let mut sk = p.k.clone();
                for mut col in sk.column_iter_mut() {
                    col.component_mul_assign(sqrt_w);
                }
                let t = chol.solve_lower(&sk);
                let red = col_sq_norms(&t);
                DVector::from_fn(p.len(), |i, _| (p.k[(i, i)] - red[i]).max(0.0))
            }
            _ => unreachable!("factor built from a different prior"),
        }
    }
}

fn col_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()))
}

/// Result of the Newton search plus the quantities reused by gradients and
/// predictions.
#[derive(Clone, Debug)]
pub struct LaplaceState {
    pub mode: DVector<f64>,
    pub w: DVector<f64>,
    pub newton_iters: usize,
    /// `psi(f) = log p(y|f) - 1/2 (f-m)^T Psi^{-1} (f-m)` at the mode.
    pub objective: f64,
    a: DVector<f64>,
    factor: Factor,
    prior: PriorCovariance,
    likelihood: Likelihood,
    log_marginal: f64,
}

impl LaplaceState {
    /// Approximate log marginal likelihood `psi(f) - 1/2 log|B|`.
    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    /// `Psi^{-1} (f - m)` at the mode, equal to the likelihood gradient there.
    pub fn weights(&self) -> &DVector<f64> {
        &self.a
    }

    pub fn prior(&self) -> &PriorCovariance {
        &self.prior
    }

    /// Marginal variances of the Gaussian approximation at the training inputs.
    pub fn posterior_variance(&self) -> DVector<f64> {
        self.factor.posterior_diag(&self.prior)
    }

    /// Gradient with respect to the covariance hyperparameters and, for FIC
    /// priors, the knot coordinates. Includes the implicit dependence of the
    /// mode on the parameters.
    pub fn gradient(&self, data: &Dataset, p: &KernelParams) -> Gradient {
        let n = data.len();
        let d3 = DVector::from_fn(n, |i, _| {
            self.likelihood
                .derivatives(data.y[i], self.mode[i], data.offset(i))
                .d3
        });
        let s2 = 0.5 * self.posterior_variance().component_mul(&d3);
        let z = &s2 - self.factor.apply_r(&self.prior.cov_mul(&s2));
        let az = &self.a + &z;
        match (&self.prior, &self.factor) {
            (PriorCovariance::Fic(prior), Factor::Fic { woodbury, .. }) => {
                let (theta, knots, _) =
                    prior.contract(&data.x, p, &[(1.0, &az), (-1.0, &z)], woodbury);
                Gradient {
                    theta,
                    noise: None,
                    knots,
                }
            }
            (PriorCovariance::Dense(prior), Factor::Dense { chol, sqrt_w }) => {
                // R = W^{1/2} B^{-1} W^{1/2}
                let mut g = chol.inverse();
                for j in 0..n {
                    for i in 0..n {
                        g[(i, j)] *= -sqrt_w[i] * sqrt_w[j];
                    }
                }
                g.ger(1.0, &az, &az, 1.0);
                g.ger(-1.0, &z, &z, 1.0);
                Gradient {
                    theta: prior.contract(p, &g),
                    noise: None,
                    knots: Vec::new(),
                }
            }
            _ => unreachable!("factor built from a different prior"),
        }
    }

    pub fn posterior(&self, p: &KernelParams, m: &MeanFunction) -> Posterior {
        match (&self.prior, &self.factor) {
            (PriorCovariance::Fic(prior), Factor::Fic { woodbury, .. }) => {
                Posterior::Sparse(FicPosterior {
                    knots: prior.knots.clone(),
                    params: p.clone(),
                    mean: *m,
                    chol_kuu: prior.chol_kuu.clone(),
                    chol_inner: woodbury.chol_a.clone(),
                    beta: prior.knot_weights(&self.a),
                    noise_variance: 0.0,
                })
            }
            (PriorCovariance::Dense(prior), Factor::Dense { chol, sqrt_w }) => {
                Posterior::Full(DensePosterior {
                    x: prior.x.clone(),
                    params: p.clone(),
                    mean: *m,
                    chol: chol.clone(),
                    weights: self.a.clone(),
                    scale: Some(sqrt_w.clone()),
                    noise_variance: 0.0,
                })
            }
            _ => unreachable!("factor built from a different prior"),
        }
    }
}

fn likelihood_terms(lik: &Likelihood, data: &Dataset, f: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = data.len();
    let mut g = DVector::zeros(n);
    let mut w = DVector::zeros(n);
    for i in 0..n {
        let dv = lik.derivatives(data.y[i], f[i], data.offset(i));
        g[i] = dv.d1;
        w[i] = dv.w.max(0.0);
    }
    (g, w)
}

fn psi(lik: &Likelihood, data: &Dataset, a: &DVector<f64>, f: &DVector<f64>, mvec: &DVector<f64>) -> f64 {
    lik.sum_log_density(data, f) - 0.5 * a.dot(&(f - mvec))
}

/// Newton search for the mode of `log p(y|f) + log N(f; m, Psi)`.
pub fn newton_mode(
    data: &Dataset,
    prior: PriorCovariance,
    m: &MeanFunction,
    lik: Likelihood,
) -> Result<LaplaceState> {
    let n = data.len();
    if n == 0 {
        return Err(GpError::input("dataset is empty"));
    }
    if prior.len() != n {
        return Err(GpError::input("prior covariance does not match the data size"));
    }
    let mvec = DVector::from_iterator(n, data.x.rows().map(|x| m.eval(x)));
    let mut a = DVector::zeros(n);
    let mut f = mvec.clone();
    let mut obj = psi(&lik, data, &a, &f, &mvec);
    let mut iters = 0;
    loop {
        let (g, w) = likelihood_terms(&lik, data, &f);
        let stationarity = (&g - &a).amax();
        if !stationarity.is_finite() {
            return Err(GpError::NewtonFailed {
                iterations: iters,
                max_gradient: stationarity,
                objective: obj,
            });
        }
        if stationarity < NEWTON_TOLERANCE {
            break;
        }
        if iters >= NEWTON_MAX_ITERS {
            return Err(GpError::NewtonFailed {
                iterations: iters,
                max_gradient: stationarity,
                objective: obj,
            });
        }
        iters += 1;
        let factor = prior.factor(&w)?;
        let b = w.component_mul(&(&f - &mvec)) + &g;
        let a_full = &b - factor.apply_r(&prior.cov_mul(&b));
        let step = &a_full - &a;
        let mut t = 1.0;
        let mut accepted = false;
        let before = obj;
        for _ in 0..=MAX_HALVINGS {
            let a_try = &a + &step * t;
            let f_try = prior.cov_mul(&a_try) + &mvec;
            let o = psi(&lik, data, &a_try, &f_try, &mvec);
            if o.is_finite() && o >= obj {
                a = a_try;
                f = f_try;
                obj = o;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let stalled = obj - before <= 16.0 * f64::EPSILON * (1.0 + obj.abs());
        if stalled {
            // No ascent left at machine precision; accept the iterate only
            // if it is already essentially stationary.
            if stationarity < 1e3 * NEWTON_TOLERANCE * (1.0 + g.amax()) {
                break;
            }
            if !accepted {
                return Err(GpError::NewtonFailed {
                    iterations: iters,
                    max_gradient: stationarity,
                    objective: obj,
                });
            }
        }
    }
    let (_, w) = likelihood_terms(&lik, data, &f);
    let factor = prior.factor(&w)?;
    let log_marginal = obj - 0.5 * factor.log_det_b();
    if !log_marginal.is_finite() {
        return Err(GpError::numerical("non-finite Laplace marginal likelihood"));
    }
    Ok(LaplaceState {
        mode: f,
        w,
        newton_iters: iters,
        objective: obj,
        a,
        factor,
        prior,
        likelihood: lik,
        log_marginal,
    })
}

/// Laplace fit under the FIC prior with the given knots.
pub fn laplace_fit(
    data: &Dataset,
    knots: &Points,
    p: &KernelParams,
    m: &MeanFunction,
    lik: Likelihood,
) -> Result<LaplaceState> {
    p.validate()?;
    let prior = FicPrior::new(&data.x, knots, p)?;
    newton_mode(data, PriorCovariance::Fic(prior), m, lik).map_err(|e| with_knots(e, knots))
}

/// Laplace fit under the exact dense prior.
pub fn laplace_full_fit(data: &Dataset, p: &KernelParams, m: &MeanFunction, lik: Likelihood) -> Result<LaplaceState> {
    p.validate()?;
    newton_mode(data, PriorCovariance::Dense(DensePrior::new(&data.x, p)?), m, lik)
}

pub fn laplace_log_marginal(
    data: &Dataset,
    knots: &Points,
    p: &KernelParams,
    m: &MeanFunction,
    lik: Likelihood,
) -> Result<f64> {
    Ok(laplace_fit(data, knots, p, m, lik)?.log_marginal())
}

pub fn laplace_grad(
    data: &Dataset,
    knots: &Points,
    p: &KernelParams,
    m: &MeanFunction,
    lik: Likelihood,
) -> Result<(f64, Gradient)> {
    let s = laplace_fit(data, knots, p, m, lik)?;
    Ok((s.log_marginal(), s.gradient(data, p)))
}

pub fn laplace_predict(
    state: &LaplaceState,
    p: &KernelParams,
    m: &MeanFunction,
    xnew: &Points,
) -> Result<GaussianPredictive> {
    state.posterior(p, m).predict(xnew)
}
