//! Squared-exponential covariance with per-dimension lengthscales, and the
//! constant mean function.
//!
//! Hyperparameters are exposed to optimizers in log space: the covariance
//! parameters as `(ln sigma_f^2, ln l_1, ..., ln l_d)` and the noise variance
//! as `u` with `tau^2 = lower_bound + exp(u)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Points;
use crate::error::{GpError, Result};

pub const DEFAULT_NOISE_LOWER_BOUND: f64 = 1e-6;
pub const DEFAULT_RELATIVE_JITTER: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
    pub noise_lower_bound: f64,
    /// Added to the diagonal of knot gram matrices.
    pub jitter: f64,
}

impl KernelParams {
    /// Parameters with the default noise floor and a jitter of
    /// `1e-8 * signal_variance`.
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let p = Self {
            signal_variance,
            lengthscales,
            noise_variance,
            noise_lower_bound: DEFAULT_NOISE_LOWER_BOUND.min(0.5 * noise_variance),
            jitter: DEFAULT_RELATIVE_JITTER * signal_variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_noise_lower_bound(mut self, bound: f64) -> Self {
        self.noise_lower_bound = bound;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.signal_variance) {
            return Err(GpError::input("signal variance must be positive"));
        }
        if self.lengthscales.is_empty() || !self.lengthscales.iter().all(|&l| positive(l)) {
            return Err(GpError::input("lengthscales must be non-empty and positive"));
        }
        if !positive(self.noise_variance) {
            return Err(GpError::input("noise variance must be positive"));
        }
        if !(self.noise_lower_bound.is_finite() && self.noise_lower_bound >= 0.0) {
            return Err(GpError::input("noise lower bound must be nonnegative"));
        }
        if self.noise_variance < self.noise_lower_bound {
            return Err(GpError::input("noise variance is below its lower bound"));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(GpError::input("jitter must be nonnegative"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Number of covariance hyperparameters (signal variance + lengthscales).
    pub fn n_theta(&self) -> usize {
        1 + self.lengthscales.len()
    }

    pub fn theta(&self) -> Vec<f64> {
        std::iter::once(self.signal_variance.ln())
            .chain(self.lengthscales.iter().map(|l| l.ln()))
            .collect()
    }

    pub fn set_theta(&mut self, theta: &[f64]) {
        debug_assert_eq!(theta.len(), self.n_theta());
        self.signal_variance = theta[0].exp();
        for (l, t) in self.lengthscales.iter_mut().zip(&theta[1..]) {
            *l = t.exp();
        }
    }

    /// Unconstrained noise coordinate `u = ln(tau^2 - lower_bound)`.
    pub fn noise_raw(&self) -> f64 {
        let excess = self.noise_variance - self.noise_lower_bound;
        if excess > 0.0 {
            excess.ln()
        } else {
            (1e-12 * self.noise_variance.max(f64::MIN_POSITIVE)).ln()
        }
    }

    pub fn set_noise_raw(&mut self, u: f64) {
        self.noise_variance = self.noise_lower_bound + u.exp();
    }

    fn check_dims(&self, a: &[f64], b: &[f64]) -> Result<()> {
        if a.len() != self.dim() || b.len() != self.dim() {
            return Err(GpError::input(format!(
                "dimension mismatch: inputs {} and {}, lengthscales {}",
                a.len(),
                b.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Constant mean function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFunction {
    pub value: f64,
}

impl MeanFunction {
    pub fn constant(value: f64) -> Self {
        Self { value }
    }

    pub fn zero() -> Self {
        Self { value: 0.0 }
    }

    pub fn eval(&self, _x: &[f64]) -> f64 {
        self.value
    }
}

impl Default for MeanFunction {
    fn default() -> Self {
        Self::zero()
    }
}

#[inline]
pub(crate) fn scaled_sq_dist(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| {
            let t = (x - y) / l;
            t * t
        })
        .sum()
}

#[inline]
pub(crate) fn se(a: &[f64], b: &[f64], p: &KernelParams) -> f64 {
    p.signal_variance * (-0.5 * scaled_sq_dist(a, b, &p.lengthscales)).exp()
}

/// `sigma_f^2 * exp(-0.5 * sum_d ((x1_d - x2_d) / l_d)^2)`.
pub fn kernel_eval(x1: &[f64], x2: &[f64], p: &KernelParams) -> Result<f64> {
    p.check_dims(x1, x2)?;
    Ok(se(x1, x2, p))
}

/// Partial derivatives with respect to `(ln sigma_f^2, ln l_1, ..., ln l_d)`.
pub fn kernel_grad_params(x1: &[f64], x2: &[f64], p: &KernelParams) -> Result<Vec<f64>> {
    p.check_dims(x1, x2)?;
    let k = se(x1, x2, p);
    let mut g = Vec::with_capacity(p.n_theta());
    g.push(k);
    for ((a, b), l) in x1.iter().zip(x2).zip(&p.lengthscales) {
        let t = (a - b) / l;
        g.push(k * t * t);
    }
    Ok(g)
}

/// Which argument of `k(x1, x2)` to differentiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wrt {
    First,
    Second,
}

/// Gradient of `k(x1, x2)` with respect to the coordinates of one argument.
pub fn kernel_grad_input(x1: &[f64], x2: &[f64], p: &KernelParams, wrt: Wrt) -> Result<Vec<f64>> {
    p.check_dims(x1, x2)?;
    let k = se(x1, x2, p);
    let sign = match wrt {
        Wrt::First => -1.0,
        Wrt::Second => 1.0,
    };
    Ok(x1
        .iter()
        .zip(x2)
        .zip(&p.lengthscales)
        .map(|((a, b), l)| sign * k * (a - b) / (l * l))
        .collect())
}

/// Cross-covariance matrix with `a.len()` rows and `b.len()` columns.
pub fn cross_covariance(a: &Points, b: &Points, p: &KernelParams) -> Result<DMatrix<f64>> {
    if a.dim() != p.dim() || b.dim() != p.dim() {
        return Err(GpError::input(format!(
            "point dimensions {} / {} do not match kernel dimension {}",
            a.dim(),
            b.dim(),
            p.dim()
        )));
    }
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| se(a.row(i), b.row(j), p)))
}

/// Symmetric gram matrix of a point set, without jitter.
pub fn gram(a: &Points, p: &KernelParams) -> Result<DMatrix<f64>> {
    if a.dim() != p.dim() {
        return Err(GpError::input("point dimension does not match kernel dimension"));
    }
    let n = a.len();
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        g[(j, j)] = p.signal_variance;
        for i in 0..j {
            let v = se(a.row(i), a.row(j), p);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(s2: f64, ls: &[f64]) -> KernelParams {
        KernelParams::new(s2, ls.to_vec(), 0.1).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    fn fd_params(x1: &[f64], x2: &[f64], p: &KernelParams, h: f64) -> Vec<f64> {
        let theta = p.theta();
        (0..theta.len())
            .map(|j| {
                let mut hi = p.clone();
                let mut lo = p.clone();
                let mut t = theta.clone();
                t[j] += h;
                hi.set_theta(&t);
                t[j] -= 2.0 * h;
                lo.set_theta(&t);
                (se(x1, x2, &hi) - se(x1, x2, &lo)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn zero_distance_gives_signal_variance() {
        let p = params(2.5, &[0.3, 4.0]);
        assert_eq!(kernel_eval(&[1.0, -2.0], &[1.0, -2.0], &p).unwrap(), 2.5);
    }

    #[test]
    fn unit_distance_closed_form() {
        let p = params(1.0, &[1.0]);
        let k = kernel_eval(&[0.0], &[1.0], &p).unwrap();
        assert!((k - 0.6065306597126334).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = params(1.0, &[1.0, 1.0]);
        assert!(kernel_eval(&[0.0], &[1.0], &p).is_err());
        assert!(kernel_grad_params(&[0.0, 1.0], &[1.0], &p).is_err());
        assert!(kernel_grad_input(&[0.0], &[1.0, 2.0], &p, Wrt::First).is_err());
    }

    #[test]
    fn param_gradient_at_zero_distance() {
        let p = params(1.7, &[0.5, 2.0]);
        let g = kernel_grad_params(&[0.3, 0.3], &[0.3, 0.3], &p).unwrap();
        assert_eq!(g, vec![1.7, 0.0, 0.0]);
    }

    #[test]
    fn long_lengthscale_flattens_gradient() {
        let p = params(1.0, &[1e8]);
        let g = kernel_grad_params(&[0.0], &[3.0], &p).unwrap();
        assert!(g[1].abs() < 1e-14);
    }

    #[test]
    fn input_gradient_vanishes_at_coincidence() {
        let p = params(1.0, &[0.7, 1.3]);
        let g = kernel_grad_input(&[0.1, 0.2], &[0.1, 0.2], &p, Wrt::First).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gram_is_positive_definite_with_jitter() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = params(1.0, &[0.8, 1.5]);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)])
            .collect();
        let pts = Points::from_rows(&rows).unwrap();
        let mut g = gram(&pts, &p).unwrap();
        assert!((&g - g.transpose()).abs().max() == 0.0);
        for i in 0..g.nrows() {
            g[(i, i)] += 1e-6;
        }
        assert!(g.cholesky().is_some());
    }

    proptest! {
        #[test]
        fn symmetric(a in prop::collection::vec(-5.0..5.0f64, 2), b in prop::collection::vec(-5.0..5.0f64, 2),
                     s2 in 0.1..5.0f64, l1 in 0.2..3.0f64, l2 in 0.2..3.0f64) {
            let p = params(s2, &[l1, l2]);
            let kab = kernel_eval(&a, &b, &p).unwrap();
            let kba = kernel_eval(&b, &a, &p).unwrap();
            prop_assert_eq!(kab, kba);
            prop_assert!(kab <= s2);
        }

        #[test]
        fn param_gradient_matches_central_differences(
            a in prop::collection::vec(-2.0..2.0f64, 2), b in prop::collection::vec(-2.0..2.0f64, 2),
            s2 in 0.2..3.0f64, l1 in 0.5..2.0f64, l2 in 0.5..2.0f64) {
            let p = params(s2, &[l1, l2]);
            let g = kernel_grad_params(&a, &b, &p).unwrap();
            let fd = fd_params(&a, &b, &p, 1e-6);
            for (x, y) in g.iter().zip(&fd) {
                if x.abs().max(y.abs()) > 1e-6 {
                    prop_assert!(rel_err(*x, *y) < 1e-5, "{} vs {}", x, y);
                }
            }
        }

        #[test]
        fn input_gradient_matches_central_differences_and_is_antisymmetric(
            a in prop::collection::vec(-2.0..2.0f64, 2), b in prop::collection::vec(-2.0..2.0f64, 2),
            l1 in 0.5..2.0f64, l2 in 0.5..2.0f64) {
            let p = params(1.3, &[l1, l2]);
            let g1 = kernel_grad_input(&a, &b, &p, Wrt::First).unwrap();
            let g2 = kernel_grad_input(&a, &b, &p, Wrt::Second).unwrap();
            let h = 1e-6;
            for d in 0..2 {
                prop_assert_eq!(g1[d], -g2[d]);
                let mut hi = a.clone();
                let mut lo = a.clone();
                hi[d] += h;
                lo[d] -= h;
                let fd = (se(&hi, &b, &p) - se(&lo, &b, &p)) / (2.0 * h);
                if g1[d].abs().max(fd.abs()) > 1e-6 {
                    prop_assert!(rel_err(g1[d], fd) < 1e-5, "{} vs {}", g1[d], fd);
                }
            }
        }
    }
}
