//! Fitted-model files. An artifact embeds its training data so that
//! prediction needs nothing else.

use std::path::Path;

use knotgp::model::posterior;
use knotgp::oat::{FitResult, Termination};
use knotgp::predictive::Posterior;
use knotgp::{Dataset, KernelParams, MeanFunction, Points};
use serde::{Deserialize, Serialize};

use crate::config::ModelName;
use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub model: ModelName,
    pub config_hash: String,
    pub seed: u64,
    pub params: KernelParams,
    pub mean: MeanFunction,
    pub knots: Option<Points>,
    pub initial_knots: Option<Points>,
    pub log_marginal: f64,
    pub trace: Vec<f64>,
    pub termination: Termination,
    pub message: Option<String>,
    pub ga_steps: usize,
    pub proposal_evaluations: Vec<usize>,
    pub data: Dataset,
}

impl Artifact {
    pub fn new(model: ModelName, config_hash: String, seed: u64, fit: &FitResult, data: &Dataset) -> Self {
        Self {
            model,
            config_hash,
            seed,
            params: fit.params.clone(),
            mean: fit.mean,
            knots: fit.knots.clone(),
            initial_knots: fit.initial_knots.clone(),
            log_marginal: fit.log_marginal,
            trace: fit.trace.clone(),
            termination: fit.termination,
            message: fit.message.clone(),
            ga_steps: fit.ga_steps,
            proposal_evaluations: fit.proposal_evaluations.clone(),
            data: data.clone(),
        }
    }

    pub fn posterior(&self) -> Result<Posterior> {
        Ok(posterior(&self.data, self.knots.as_ref(), &self.params, &self.mean)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::io(path.display(), e))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path.display(), e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
}
