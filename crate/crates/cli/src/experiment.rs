//! Runs every configured model on one shared split and writes the results,
//! runtimes, prediction bands and knot locations to the output directory.

use std::path::Path;

use knotgp::metrics::{report, MetricReport};
use knotgp::model::likelihood_for;
use knotgp::oat::Termination;
use knotgp::rng::Stream;
use knotgp::{Dataset, GaussianPredictive, KernelParams, MeanFunction, Points};
use serde::{Deserialize, Serialize};

use crate::artifact::write_json;
use crate::config::{ExperimentConfig, MetricName, ModelName};
use crate::error::{CliError, Result};
use crate::run::{fit_model, load_data, predict, split_indices, start_values, Timing};
use crate::table::{write_dataset, write_points, write_with_inputs};

pub const RESULTS_FILE: &str = "results.json";
pub const RUNTIMES_FILE: &str = "runtimes.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub root: u64,
    /// Seed of the synthetic draw, when the data are synthetic.
    pub synth: Option<u64>,
    /// Stream ids layered on the root seed.
    pub split_stream: u64,
    pub init_stream: u64,
    pub proposal_stream: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model: ModelName,
    pub status: Status,
    pub error: Option<String>,
    /// Final knot count; absent for the dense model.
    pub k: Option<usize>,
    pub t_max: Option<usize>,
    pub termination: Option<Termination>,
    pub message: Option<String>,
    pub log_marginal: Option<f64>,
    pub ga_steps: Option<usize>,
    pub trace: Vec<f64>,
    pub proposal_evaluations: Vec<usize>,
    pub params: Option<KernelParams>,
    pub mean: Option<MeanFunction>,
    pub metrics: Option<MetricReport>,
}

impl ModelRecord {
    fn failed(model: ModelName, err: &dyn std::fmt::Display) -> Self {
        Self {
            model,
            status: Status::Failed,
            error: Some(err.to_string()),
            k: None,
            t_max: None,
            termination: None,
            message: None,
            log_marginal: None,
            ga_steps: None,
            trace: Vec::new(),
            proposal_evaluations: Vec::new(),
            params: None,
            mean: None,
            metrics: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub config_hash: String,
    pub seeds: Seeds,
    pub likelihood: knotgp::LikelihoodKind,
    pub n_train: usize,
    pub n_test: usize,
    /// False when there is no split and models are scored on their own
    /// training inputs.
    pub held_out: bool,
    pub models: Vec<ModelRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRecord {
    pub model: ModelName,
    pub timing: Option<Timing>,
}

const ORDER: [ModelName; 5] = [
    ModelName::Full,
    ModelName::OatBo,
    ModelName::OatRs,
    ModelName::Simultaneous,
    ModelName::FixedKnots,
];

fn uses_oat(m: ModelName) -> bool {
    matches!(m, ModelName::OatBo | ModelName::OatRs)
}

fn band_inputs(cfg: &ExperimentConfig, train: &Dataset, eval: &Dataset) -> (Points, Option<Vec<f64>>) {
    if train.dim() == 1 && cfg.band_grid >= 2 {
        let (lo, hi) = train.x.bounds()[0];
        let n = cfg.band_grid;
        let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        // unit exposure: Poisson bands are on the intensity scale
        return (Points::from_scalars(&xs), None);
    }
    (eval.x.clone(), eval.offsets.clone())
}

/// Runs the experiment and writes its files under `out`. Model failures are
/// recorded and do not stop the other models.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentResults> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out.display(), e))?;
    let loaded = load_data(cfg)?;
    let all = &loaded.data;
    let (train, eval, eval_latent, held_out) = match cfg.split {
        Some(frac) => {
            let (tr, te) = split_indices(all.len(), frac, cfg.seed);
            let lat = loaded.latent.as_ref().map(|l| te.iter().map(|&i| l[i]).collect::<Vec<_>>());
            (all.subset(&tr), all.subset(&te), lat, true)
        }
        None => (all.clone(), all.clone(), loaded.latent.clone(), false),
    };
    write_dataset(&out.join("train.csv"), &train)?;
    if held_out {
        write_dataset(&out.join("test.csv"), &eval)?;
    }
    let (p0, m) = start_values(cfg, &train)?;
    let (band_x, band_offsets) = band_inputs(cfg, &train, &eval);

    let wanted: Vec<ModelName> = ORDER.iter().copied().filter(|m| cfg.models.contains(m)).collect();
    let need_reference = cfg.wants(MetricName::Aukl);
    let mut reference: Option<GaussianPredictive> = None;
    let mut sim_k = None;
    let mut records = Vec::new();
    let mut runtimes = Vec::new();

    let mut to_fit = wanted.clone();
    if need_reference && !wanted.contains(&ModelName::Full) {
        to_fit.insert(0, ModelName::Full);
    }
    for name in to_fit {
        let listed = wanted.contains(&name);
        log::info!("fitting {}", name.as_str());
        let fit = match fit_model(name, cfg, &train, &p0, &m, sim_k) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("{} failed: {e}", name.as_str());
                if listed {
                    records.push(ModelRecord::failed(name, &e));
                    runtimes.push(RuntimeRecord { model: name, timing: None });
                }
                continue;
            }
        };
        if name == ModelName::OatBo {
            sim_k = Some(fit.n_knots());
        }
        let scored = (|| -> Result<_> {
            let post = knotgp::model::posterior(&train, fit.knots.as_ref(), &fit.params, &fit.mean)?;
            let pred = predict(&post, &train, &fit.params, &eval.x, eval.offsets.as_deref())?;
            let bands = predict(&post, &train, &fit.params, &band_x, band_offsets.as_deref())?;
            Ok((pred, bands))
        })();
        let (pred, bands) = match scored {
            Ok(v) => v,
            Err(e) => {
                if listed {
                    records.push(ModelRecord::failed(name, &e));
                    runtimes.push(RuntimeRecord { model: name, timing: None });
                }
                continue;
            }
        };
        if name == ModelName::Full {
            reference = Some(pred.latent.latent());
        }
        if !listed {
            continue;
        }

        let lik = likelihood_for(&train, &fit.params);
        let metrics = report(
            &pred.latent,
            &eval.y,
            lik,
            eval.offsets.as_deref(),
            cfg.mnlp_mode,
            reference.as_ref().filter(|_| need_reference),
            eval_latent.as_deref().filter(|_| cfg.wants(MetricName::Rmse)),
        )
        .map(|mut r| {
            if !cfg.wants(MetricName::Srmse) {
                r.srmse = None;
            }
            if !cfg.wants(MetricName::Mnlp) {
                r.mnlp = None;
                r.mnlp_plugin = None;
                r.neg_log_probs.clear();
            }
            r
        });
        let metrics = match metrics {
            Ok(r) => r,
            Err(e) => {
                records.push(ModelRecord::failed(name, &e));
                runtimes.push(RuntimeRecord { model: name, timing: None });
                continue;
            }
        };

        let tag = name.as_str();
        write_with_inputs(
            &out.join(format!("bands_{tag}.csv")),
            &band_x,
            &["mean", "latent_sd", "lower95", "upper95"],
            &[&bands.mean, &bands.latent_sd, &bands.lower95, &bands.upper95],
        )?;
        if let Some(k) = &fit.initial_knots {
            write_points(&out.join(format!("knots_{tag}_initial.csv")), k)?;
        }
        if let Some(k) = &fit.knots {
            write_points(&out.join(format!("knots_{tag}_final.csv")), k)?;
        }

        runtimes.push(RuntimeRecord {
            model: name,
            timing: Some(Timing::of(&fit)),
        });
        records.push(ModelRecord {
            model: name,
            status: Status::Ok,
            error: None,
            k: fit.knots.as_ref().map(|k| k.len()),
            t_max: uses_oat(name).then_some(cfg.oat.t_max),
            termination: Some(fit.termination),
            message: fit.message.clone(),
            log_marginal: Some(fit.log_marginal),
            ga_steps: Some(fit.ga_steps),
            trace: fit.trace.clone(),
            proposal_evaluations: fit.proposal_evaluations.clone(),
            params: Some(fit.params.clone()),
            mean: Some(fit.mean),
            metrics: Some(metrics),
        });
    }

    let results = ExperimentResults {
        config_hash: cfg.hash(),
        seeds: Seeds {
            root: cfg.seed,
            synth: cfg.data.synth.as_ref().map(|s| s.seed.unwrap_or(cfg.seed)),
            split_stream: Stream::Split.id(),
            init_stream: Stream::Init.id(),
            proposal_stream: Stream::Proposal.id(),
        },
        likelihood: train.likelihood,
        n_train: train.len(),
        n_test: eval.len(),
        held_out,
        models: records,
    };
    write_json(&out.join(RESULTS_FILE), &results)?;
    write_json(&out.join(RUNTIMES_FILE), &runtimes)?;
    Ok(results)
}
