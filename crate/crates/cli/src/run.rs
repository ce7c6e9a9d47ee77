//! Data loading, splitting and per-model fitting shared by the subcommands.

use knotgp::model::{default_mean, default_params, likelihood_for};
use knotgp::oat::{
    fixed_knots_fit, full_fit, init_knots, oat_fit, simultaneous_fit, FitResult, InitStrategy, OatConfig,
    ProposalKind,
};
use knotgp::rng::{stream, Stream};
use knotgp::synth::{generate, SynthSpec, SynthKind};
use knotgp::{response_bands, Dataset, GaussianPredictive, KernelParams, MeanFunction, Points, Posterior};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelName};
use crate::error::{CliError, Result};
use crate::table::read_dataset;

pub struct Loaded {
    pub data: Dataset,
    /// Known only for synthetic data.
    pub latent: Option<Vec<f64>>,
}

pub fn synth_spec(kind: SynthKind, n: usize, seed: u64) -> SynthSpec {
    match kind {
        SynthKind::Gaussian1d => SynthSpec::gaussian_1d(n, seed),
        SynthKind::PoissonLgcp1d => SynthSpec::poisson_lgcp_1d(n, seed),
        SynthKind::BananaLike2d => SynthSpec::banana_like_2d(n, seed),
    }
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Loaded> {
    if let Some(s) = &cfg.data.synth {
        let out = generate(&synth_spec(s.kind, s.n, s.seed.unwrap_or(cfg.seed)))?;
        return Ok(Loaded {
            data: out.data,
            latent: Some(out.latent),
        });
    }
    let path = cfg
        .data_path()
        .ok_or_else(|| CliError::Usage("config has no data source".into()))?;
    Ok(Loaded {
        data: read_dataset(&path, cfg.data.likelihood)?,
        latent: None,
    })
}

/// Random train/test partition, each side in ascending index order.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, Stream::Split));
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

pub fn start_values(cfg: &ExperimentConfig, train: &Dataset) -> Result<(KernelParams, MeanFunction)> {
    let d = default_params(train)?;
    let c = &cfg.params;
    let ls = c.lengthscales.clone().unwrap_or(d.lengthscales);
    if ls.len() != train.dim() {
        return Err(CliError::Usage(format!(
            "{} lengthscales given for {}-dimensional inputs",
            ls.len(),
            train.dim()
        )));
    }
    let p = KernelParams::new(
        c.signal_variance.unwrap_or(d.signal_variance),
        ls,
        c.noise_variance.unwrap_or(d.noise_variance),
    )?;
    let m = c.mean.map_or_else(|| default_mean(train), MeanFunction::constant);
    Ok((p, m))
}

/// Fits one model. `sim_k` is the knot count for the simultaneous baseline
/// when the config leaves it open.
pub fn fit_model(
    name: ModelName,
    cfg: &ExperimentConfig,
    data: &Dataset,
    p0: &KernelParams,
    m: &MeanFunction,
    sim_k: Option<usize>,
) -> knotgp::Result<FitResult> {
    let spec = &cfg.convergence;
    let oat = |proposal| OatConfig {
        proposal,
        ..cfg.oat.clone()
    };
    match name {
        ModelName::Full => full_fit(data, m, p0, spec),
        ModelName::OatBo => oat_fit(data, m, p0, &oat(ProposalKind::Bo), spec),
        ModelName::OatRs => oat_fit(data, m, p0, &oat(ProposalKind::Rs), spec),
        ModelName::Simultaneous => {
            let k = cfg.simultaneous.k.or(sim_k).unwrap_or(cfg.oat.max_knots);
            simultaneous_fit(data, m, p0, k, &cfg.simultaneous.init, cfg.seed, spec)
        }
        ModelName::FixedKnots => {
            let knots = init_knots(
                &data.x,
                &InitStrategy::UniformGrid,
                cfg.fixed_knots.k,
                &mut stream(cfg.seed, Stream::Init),
            )?;
            fixed_knots_fit(data, m, p0, &knots, spec)
        }
    }
}

/// Point prediction, latent spread and 95% band on the response scale.
pub struct Prediction {
    pub latent: GaussianPredictive,
    pub mean: Vec<f64>,
    pub latent_sd: Vec<f64>,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
}

pub fn predict(
    post: &Posterior,
    data: &Dataset,
    params: &KernelParams,
    x: &Points,
    offsets: Option<&[f64]>,
) -> Result<Prediction> {
    let pred = post.predict(x)?;
    let bands = response_bands(&pred, likelihood_for(data, params), offsets);
    Ok(Prediction {
        mean: bands.iter().map(|b| b.center).collect(),
        latent_sd: pred.latent_variance.iter().map(|v| v.sqrt()).collect(),
        lower95: bands.iter().map(|b| b.lower).collect(),
        upper95: bands.iter().map(|b| b.upper).collect(),
        latent: pred,
    })
}

/// Wall-clock times, kept apart from results so that reruns compare equal.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub gradient_ascent_seconds: f64,
    pub proposal_seconds: f64,
    pub total_seconds: f64,
}

impl Timing {
    pub fn of(fit: &FitResult) -> Self {
        Self {
            gradient_ascent_seconds: fit.ga_time.as_secs_f64(),
            proposal_seconds: fit.proposal_time.as_secs_f64(),
            total_seconds: fit.total_time.as_secs_f64(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_partitions_indices() {
        let (train, test) = split_indices(10, 0.8, 4);
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.8, 4), (train, test));
        assert_ne!(split_indices(50, 0.8, 4), split_indices(50, 0.8, 5));
    }

    #[test]
    fn split_keeps_both_sides_nonempty() {
        let (train, test) = split_indices(3, 0.99, 0);
        assert_eq!((train.len(), test.len()), (2, 1));
    }
}
