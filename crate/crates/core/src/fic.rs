//! Fully independent conditional (FIC) approximation.
//!
//! The prior covariance of the latent values at the training inputs is
//! `Psi = Lambda + V^T V` with `V = L^{-1} K_uf`, `L L^T = K_uu + jitter I`
//! and `Lambda = diag(K_ff - V^T V)`. Every routine here costs `O(N K^2)`
//! time and `O(N K)` memory; no `N x N` matrix is formed.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, LikelihoodKind, Points};
use crate::error::{GpError, Result};
use crate::kernel::{cross_covariance, gram, KernelParams, MeanFunction};
use crate::linalg::{cholesky_escalating, col_sq_norms, scale_columns, Chol};
use crate::predictive::{check_dim, to_vec, GaussianPredictive};

const LN_2PI: f64 = 1.8378770664093453;

/// Gradient of a log marginal likelihood.
///
/// `theta` is with respect to `(ln sigma_f^2, ln l_1, ..., ln l_d)`, `noise`
/// with respect to `u = ln(tau^2 - lower_bound)` (absent for non-Gaussian
/// likelihoods), and `knots` holds the partials for every knot coordinate in
/// the same row-major layout as the knot set.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub theta: Vec<f64>,
    pub noise: Option<f64>,
    pub knots: Vec<f64>,
}

/// Low-rank-plus-diagonal prior covariance at the training inputs.
#[derive(Clone, Debug)]
pub struct FicPrior {
    pub(crate) knots: Points,
    pub(crate) kuu: DMatrix<f64>,
    pub(crate) chol_kuu: Chol,
    /// K x N
    pub(crate) kuf: DMatrix<f64>,
    /// `L^{-1} K_uf`, K x N
    pub(crate) v: DMatrix<f64>,
    pub(crate) lambda: DVector<f64>,
    pub(crate) kff_diag: DVector<f64>,
}

impl FicPrior {
    pub fn new(x: &Points, knots: &Points, p: &KernelParams) -> Result<Self> {
        if knots.is_empty() {
            return Err(GpError::input("the FIC approximation needs at least one knot"));
        }
        if knots.dim() != x.dim() || x.dim() != p.dim() {
            return Err(GpError::input(format!(
                "dimension mismatch: inputs {}, knots {}, lengthscales {}",
                x.dim(),
                knots.dim(),
                p.dim()
            )));
        }
        let kuu = gram(knots, p)?;
        let chol_kuu = cholesky_escalating(&kuu, p.jitter, p.signal_variance).map_err(|e| {
            GpError::Numerical {
                message: format!("knot gram matrix: {e}"),
                knots: Some(knots.to_rows()),
            }
        })?;
        let kuf = cross_covariance(knots, x, p)?;
        let v = chol_kuu.solve_lower(&kuf);
        let kff_diag = DVector::from_element(x.len(), p.signal_variance);
        let q_diag = col_sq_norms(&v);
        let lambda = (&kff_diag - q_diag).map(|l| l.max(0.0));
        Ok(Self {
            knots: knots.clone(),
            kuu,
            chol_kuu,
            kuf,
            v,
            lambda,
            kff_diag,
        })
    }

    pub fn len(&self) -> usize {
        self.v.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.v.ncols() == 0
    }

    pub fn knots(&self) -> &Points {
        &self.knots
    }

    /// Diagonal correction restoring the exact marginal variances.
    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    /// Cross-covariance between knots and inputs, K x N.
    pub fn cross_covariance(&self) -> &DMatrix<f64> {
        &self.kuf
    }

    /// Knot gram matrix without jitter.
    pub fn knot_gram(&self) -> &DMatrix<f64> {
        &self.kuu
    }

    /// Lower Cholesky factor of the jittered knot gram matrix.
    pub fn knot_gram_cholesky(&self) -> &DMatrix<f64> {
        &self.chol_kuu.l
    }

    /// Jitter actually used for the knot gram (after any escalation).
    pub fn jitter(&self) -> f64 {
        self.chol_kuu.jitter
    }

    /// `Psi v`.
    pub fn cov_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let low = self.v.tr_mul(&(&self.v * x));
        self.lambda.component_mul(x) + low
    }

    pub fn cov_diag(&self) -> DVector<f64> {
        &self.lambda + col_sq_norms(&self.v)
    }

    /// Factorization of `(diag(1/dinv) + Psi_lowrank)^{-1}`.
    pub(crate) fn woodbury(&self, dinv: DVector<f64>) -> Result<Woodbury> {
        Woodbury::new(&self.v, dinv)
    }

    /// Weight vector `K_uu^{-1} K_uf w` used by predictions.
    pub(crate) fn knot_weights(&self, w: &DVector<f64>) -> DVector<f64> {
        self.chol_kuu.solve_upper_vec(&(&self.v * w))
    }

    /// Computes `1/2 tr(G dPsi/dphi)` for every covariance hyperparameter and
    /// knot coordinate `phi`, where `G = sum_j c_j u_j u_j^T - diag(dinv) + C^T C`
    /// (with `dinv`, `C` from `woodbury`). Returns the theta part, the knot
    /// part and `diag(G)`.
    pub(crate) fn contract(
        &self,
        x: &Points,
        p: &KernelParams,
        rank_one: &[(f64, &DVector<f64>)],
        woodbury: &Woodbury,
    ) -> (Vec<f64>, Vec<f64>, DVector<f64>) {
        let n = self.len();
        let k = self.knots.len();
        let d = p.dim();
        // B = K_uu^{-1} K_uf
        let b = self.chol_kuu.solve_upper(&self.v);

        let mut diag_g = col_sq_norms(&woodbury.c) - &woodbury.dinv;
        for (c, u) in rank_one {
            diag_g += u.component_mul(u) * *c;
        }

        // B M with M = G - diag(G)
        let mut bm = scale_columns(&b, &(-(&woodbury.dinv + &diag_g)));
        for (c, u) in rank_one {
            let bu = &b * *u;
            bm.ger(*c, &bu, u, 1.0);
        }
        let bct = &b * woodbury.c.transpose();
        bm.gemm(1.0, &bct, &woodbury.c, 1.0);
        let pm = &bm * b.transpose();

        let inv_l2: Vec<f64> = p.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let mut theta = vec![0.0; 1 + d];
        let mut knots = vec![0.0; k * d];

        // K_ff diagonal and K_uf terms.
        theta[0] += 0.5 * diag_g.dot(&self.kff_diag);
        for i in 0..n {
            let xi = x.row(i);
            for kk in 0..k {
                let t = bm[(kk, i)] * self.kuf[(kk, i)];
                if t == 0.0 {
                    continue;
                }
                theta[0] += t;
                let u = self.knots.row(kk);
                for dd in 0..d {
                    let diff = xi[dd] - u[dd];
                    theta[1 + dd] += t * diff * diff * inv_l2[dd];
                    knots[kk * d + dd] += t * diff * inv_l2[dd];
                }
            }
        }

        // K_uu terms.
        for l in 0..k {
            let ul = self.knots.row(l);
            for kk in 0..k {
                let t = pm[(kk, l)] * self.kuu[(kk, l)];
                theta[0] -= 0.5 * t;
                if kk == l {
                    continue;
                }
                let uk = self.knots.row(kk);
                for dd in 0..d {
                    let diff = uk[dd] - ul[dd];
                    theta[1 + dd] -= 0.5 * t * diff * diff * inv_l2[dd];
                    knots[kk * d + dd] += t * diff * inv_l2[dd];
                }
            }
        }
        (theta, knots, diag_g)
    }
}

/// Represents `(D + V^T V)^{-1} = diag(dinv) - C^T C` with
/// `A = I + V diag(dinv) V^T = L_A L_A^T` and `C = L_A^{-1} V diag(dinv)`.
#[derive(Clone, Debug)]
pub(crate) struct Woodbury {
    pub dinv: DVector<f64>,
    pub chol_a: Chol,
    pub c: DMatrix<f64>,
}

impl Woodbury {
    pub fn new(v: &DMatrix<f64>, dinv: DVector<f64>) -> Result<Self> {
        let vd = scale_columns(v, &dinv);
        let mut a = &vd * v.transpose();
        for i in 0..a.nrows() {
            a[(i, i)] += 1.0;
        }
        let a = (&a + a.transpose()) * 0.5;
        let chol_a = cholesky_escalating(&a, 0.0, 1.0)?;
        let c = chol_a.solve_lower(&vd);
        Ok(Self { dinv, chol_a, c })
    }

    pub fn apply(&self, r: &DVector<f64>) -> DVector<f64> {
        self.dinv.component_mul(r) - self.c.tr_mul(&(&self.c * r))
    }

    pub fn log_det_a(&self) -> f64 {
        self.chol_a.log_det()
    }
}

/// Predictive machinery shared by the Gaussian and Laplace FIC fits:
/// `mean = m + k_*^T beta`,
/// `var = k_** - |L^{-1} k_*|^2 + |L_A^{-1} L^{-1} k_*|^2`.
#[derive(Clone, Debug)]
pub struct FicPosterior {
    pub(crate) knots: Points,
    pub(crate) params: KernelParams,
    pub(crate) mean: MeanFunction,
    pub(crate) chol_kuu: Chol,
    pub(crate) chol_inner: Chol,
    pub(crate) beta: DVector<f64>,
    pub(crate) noise_variance: f64,
}

impl FicPosterior {
    pub fn knots(&self) -> &Points {
        &self.knots
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn predict(&self, xnew: &Points) -> Result<GaussianPredictive> {
        check_dim(self.params.dim(), xnew)?;
        let ks = cross_covariance(&self.knots, xnew, &self.params)?;
        let t = self.chol_kuu.solve_lower(&ks);
        let s = self.chol_inner.solve_lower(&t);
        let mean = ks.tr_mul(&self.beta).map(|v| v + self.mean.value);
        let latent_variance = (0..xnew.len())
            .map(|j| {
                let v = self.params.signal_variance - t.column(j).norm_squared()
                    + s.column(j).norm_squared();
                v.max(0.0)
            })
            .collect();
        Ok(GaussianPredictive {
            mean: to_vec(&mean),
            latent_variance,
            noise_variance: self.noise_variance,
        })
    }
}

/// A FIC model fitted to Gaussian data.
#[derive(Clone, Debug)]
pub struct FicState {
    prior: FicPrior,
    woodbury: Woodbury,
    alpha: DVector<f64>,
    log_marginal: f64,
    params: KernelParams,
    mean: MeanFunction,
}

impl FicState {
    pub fn fit(data: &Dataset, knots: &Points, p: &KernelParams, m: &MeanFunction) -> Result<Self> {
        if data.likelihood != LikelihoodKind::Gaussian {
            return Err(GpError::input(
                "exact FIC marginal likelihood requires gaussian data",
            ));
        }
        if data.is_empty() {
            return Err(GpError::input("dataset is empty"));
        }
        p.validate()?;
        let prior = FicPrior::new(&data.x, knots, p)?;
        let noisy = prior.lambda.add_scalar(p.noise_variance);
        let dinv = noisy.map(|v| 1.0 / v);
        let woodbury = prior.woodbury(dinv).map_err(|e| with_knots(e, knots))?;
        let r = DVector::from_iterator(
            data.len(),
            (0..data.len()).map(|i| data.y[i] - m.eval(data.x.row(i))),
        );
        let alpha = woodbury.apply(&r);
        let log_det = noisy.iter().map(|v| v.ln()).sum::<f64>() + woodbury.log_det_a();
        let n = data.len() as f64;
        let log_marginal = -0.5 * r.dot(&alpha) - 0.5 * log_det - 0.5 * n * LN_2PI;
        if !log_marginal.is_finite() {
            return Err(GpError::Numerical {
                message: "non-finite FIC log marginal likelihood".into(),
                knots: Some(knots.to_rows()),
            });
        }
        Ok(Self {
            prior,
            woodbury,
            alpha,
            log_marginal,
            params: p.clone(),
            mean: *m,
        })
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn prior(&self) -> &FicPrior {
        &self.prior
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// `(tau^2 I + Psi)^{-1} v` through the low-rank route.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.woodbury.apply(v)
    }

    pub fn gradient(&self, data: &Dataset) -> Gradient {
        let (theta, knots, diag_g) =
            self.prior
                .contract(&data.x, &self.params, &[(1.0, &self.alpha)], &self.woodbury);
        let noise = 0.5 * diag_g.sum() * (self.params.noise_variance - self.params.noise_lower_bound);
        Gradient {
            theta,
            noise: Some(noise),
            knots,
        }
    }

    pub fn posterior(&self) -> FicPosterior {
        FicPosterior {
            knots: self.prior.knots.clone(),
            params: self.params.clone(),
            mean: self.mean,
            chol_kuu: self.prior.chol_kuu.clone(),
            chol_inner: self.woodbury.chol_a.clone(),
            beta: self.prior.knot_weights(&self.alpha),
            noise_variance: self.params.noise_variance,
        }
    }

    pub fn predict(&self, xnew: &Points) -> Result<GaussianPredictive> {
        self.posterior().predict(xnew)
    }
}

pub(crate) fn with_knots(e: GpError, knots: &Points) -> GpError {
    match e {
        GpError::Numerical { message, knots: None } => GpError::Numerical {
            message,
            knots: Some(knots.to_rows()),
        },
        other => other,
    }
}

/// `log N(y; m_x, tau^2 I + Psi_xx)`.
pub fn fic_log_marginal(data: &Dataset, knots: &Points, p: &KernelParams, m: &MeanFunction) -> Result<f64> {
    Ok(FicState::fit(data, knots, p, m)?.log_marginal())
}

/// Log marginal likelihood and its gradient.
pub fn fic_grad(data: &Dataset, knots: &Points, p: &KernelParams, m: &MeanFunction) -> Result<(f64, Gradient)> {
    let state = FicState::fit(data, knots, p, m)?;
    Ok((state.log_marginal(), state.gradient(data)))
}

pub fn fic_predict(state: &FicState, xnew: &Points) -> Result<GaussianPredictive> {
    state.predict(xnew)
}
