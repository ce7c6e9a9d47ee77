//! Seeded synthetic datasets drawn from an exact GP prior.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LikelihoodKind, Points};
use crate::error::{GpError, Result};
use crate::kernel::{gram, KernelParams};
use crate::likelihood::logistic;
use crate::linalg::cholesky_escalating;
use crate::rng::{stream, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Uniform inputs, Gaussian noise.
    #[serde(rename = "gaussian_1d")]
    Gaussian1d,
    /// Evenly spaced inputs, counts with exposure equal to the grid spacing.
    #[serde(rename = "poisson_lgcp_1d")]
    PoissonLgcp1d,
    /// Uniform inputs on a square, binary labels through the logistic link.
    #[serde(rename = "banana_like_2d")]
    BananaLike2d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub bounds: Vec<(f64, f64)>,
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    /// Observation noise for the Gaussian kind; may be 0.
    pub noise_variance: f64,
    pub mean: f64,
    /// Overrides the grid-spacing exposure of the Poisson kind.
    #[serde(default)]
    pub exposure: Option<f64>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn gaussian_1d(n: usize, seed: u64) -> Self {
        Self {
            kind: SynthKind::Gaussian1d,
            n,
            bounds: vec![(0.0, 10.0)],
            signal_variance: 1.0,
            lengthscales: vec![1.0],
            noise_variance: 0.5,
            mean: 0.0,
            exposure: None,
            seed,
        }
    }

    pub fn poisson_lgcp_1d(n: usize, seed: u64) -> Self {
        Self {
            kind: SynthKind::PoissonLgcp1d,
            n,
            bounds: vec![(0.0, 10.0)],
            signal_variance: 1.0,
            lengthscales: vec![1.5],
            noise_variance: 0.0,
            mean: 3.0,
            exposure: None,
            seed,
        }
    }

    pub fn banana_like_2d(n: usize, seed: u64) -> Self {
        Self {
            kind: SynthKind::BananaLike2d,
            n,
            bounds: vec![(-3.0, 3.0), (-3.0, 3.0)],
            signal_variance: 4.0,
            lengthscales: vec![1.0, 1.0],
            noise_variance: 0.0,
            mean: 0.0,
            exposure: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(GpError::input("synthetic datasets need at least two points"));
        }
        let dim = match self.kind {
            SynthKind::Gaussian1d | SynthKind::PoissonLgcp1d => 1,
            SynthKind::BananaLike2d => 2,
        };
        if self.bounds.len() != dim || self.lengthscales.len() != dim {
            return Err(GpError::input(format!("{:?} data is {dim}-dimensional", self.kind)));
        }
        if self.bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return Err(GpError::input("bounds must be finite with lower < upper"));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(GpError::input("noise variance must be nonnegative"));
        }
        if let Some(a) = self.exposure {
            if !(a > 0.0 && a.is_finite()) {
                return Err(GpError::input("exposure must be positive"));
            }
        }
        if !self.mean.is_finite() {
            return Err(GpError::input("mean must be finite"));
        }
        Ok(())
    }

    fn kernel(&self) -> Result<KernelParams> {
        // the noise slot is unused for the latent draw
        KernelParams::new(self.signal_variance, self.lengthscales.clone(), 1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub data: Dataset,
    /// Latent function values at the inputs.
    pub latent: Vec<f64>,
}

/// Draws from the exact GP prior at `x`.
pub fn draw_latent<R: Rng>(x: &Points, p: &KernelParams, mean: f64, rng: &mut R) -> Result<Vec<f64>> {
    let k = gram(x, p)?;
    let chol = cholesky_escalating(&k, 1e-10 * p.signal_variance, p.signal_variance)?;
    let z = DVector::from_fn(x.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((&chol.l * z).iter().map(|v| v + mean).collect())
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = stream(spec.seed, Stream::Synth);
    let p = spec.kernel()?;
    let x = match spec.kind {
        SynthKind::PoissonLgcp1d => {
            let (lo, hi) = spec.bounds[0];
            let h = (hi - lo) / (spec.n - 1) as f64;
            Points::from_scalars(&(0..spec.n).map(|i| lo + h * i as f64).collect::<Vec<_>>())
        }
        _ => {
            let d = spec.bounds.len();
            let mut v = Vec::with_capacity(spec.n * d);
            for _ in 0..spec.n {
                for &(lo, hi) in &spec.bounds {
                    v.push(rng.random_range(lo..hi));
                }
            }
            Points::new(d, v)?
        }
    };
    let f = draw_latent(&x, &p, spec.mean, &mut rng)?;
    let data = match spec.kind {
        SynthKind::Gaussian1d => {
            let sd = spec.noise_variance.sqrt();
            let y = f
                .iter()
                .map(|fi| fi + sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Dataset::new(x, y, None, LikelihoodKind::Gaussian)?
        }
        SynthKind::PoissonLgcp1d => {
            let a = spec.exposure.unwrap_or(x.row(1)[0] - x.row(0)[0]);
            let mut y = Vec::with_capacity(spec.n);
            for fi in &f {
                let lambda = a * fi.exp();
                let count = if lambda > 0.0 {
                    Poisson::new(lambda)
                        .map_err(|e| GpError::numerical(format!("poisson rate {lambda}: {e}")))?
                        .sample(&mut rng)
                } else {
                    0.0
                };
                y.push(count);
            }
            Dataset::new(x, y, Some(vec![a; spec.n]), LikelihoodKind::Poisson)?
        }
        SynthKind::BananaLike2d => {
            let y = f
                .iter()
                .map(|fi| if rng.random::<f64>() < logistic(*fi) { 1.0 } else { 0.0 })
                .collect();
            Dataset::new(x, y, None, LikelihoodKind::Bernoulli)?
        }
    };
    Ok(SynthData { data, latent: f })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::kernel::kernel_eval;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_gaussian_returns_latent() {
        let mut spec = SynthSpec::gaussian_1d(50, 3);
        spec.noise_variance = 0.0;
        let s = generate(&spec).unwrap();
        assert_eq!(s.data.y, s.latent);
    }

    #[test]
    fn vanishing_exposure_gives_no_counts() {
        let mut spec = SynthSpec::poisson_lgcp_1d(400, 1);
        spec.exposure = Some(1e-6);
        spec.mean = 1.0;
        let s = generate(&spec).unwrap();
        assert!(s.latent.iter().all(|f| f.exp() <= 10.0 * 3.0f64.exp()));
        let mean = s.data.y.iter().sum::<f64>() / 400.0;
        assert!(mean < 0.01);
    }

    #[test]
    fn poisson_exposure_is_grid_spacing() {
        let s = generate(&SynthSpec::poisson_lgcp_1d(101, 0)).unwrap();
        let a = s.data.offsets.as_ref().unwrap();
        assert!(a.iter().all(|v| (v - 0.1).abs() < 1e-12));
        assert_eq!(s.data.x.row(100)[0], 10.0);
    }

    #[test]
    fn replay_is_bit_identical() {
        for spec in [SynthSpec::gaussian_1d(30, 9), SynthSpec::poisson_lgcp_1d(30, 9), SynthSpec::banana_like_2d(30, 9)] {
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        }
    }

    #[test]
    fn empirical_covariance_matches_kernel() {
        let x = Points::from_scalars(&[0.0, 0.5, 1.5]);
        let p = KernelParams::new(2.0, vec![1.0], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 10_000;
        let mut acc = [[0.0; 3]; 3];
        for _ in 0..n {
            let f = draw_latent(&x, &p, 0.0, &mut rng).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    acc[i][j] += f[i] * f[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let emp = acc[i][j] / n as f64;
                let k = kernel_eval(x.row(i), x.row(j), &p).unwrap();
                assert!((emp - k).abs() < 0.05 * k.max(0.5), "{i},{j}: {emp} vs {k}");
            }
        }
    }
}
