use std::path::{Path, PathBuf};

use knotgp::metrics::MnlpMode;
use knotgp::oat::{InitStrategy, OatConfig};
use knotgp::optimize::ConvergenceSpec;
use knotgp::synth::SynthKind;
use knotgp::LikelihoodKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModelName {
    Full,
    OatBo,
    OatRs,
    Simultaneous,
    FixedKnots,
}

impl ModelName {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Full => "full",
            ModelName::OatBo => "oat_bo",
            ModelName::OatRs => "oat_rs",
            ModelName::Simultaneous => "simultaneous",
            ModelName::FixedKnots => "fixed_knots",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Srmse,
    Mnlp,
    Aukl,
    Rmse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub kind: SynthKind,
    pub n: usize,
    /// Defaults to the root seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// CSV file, relative to the config file.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "gaussian")]
    pub likelihood: LikelihoodKind,
    #[serde(default)]
    pub synth: Option<SynthSection>,
}

fn gaussian() -> LikelihoodKind {
    LikelihoodKind::Gaussian
}

/// Starting hyperparameters. Missing entries fall back to data-driven
/// defaults; a missing mean is estimated from the training targets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub signal_variance: Option<f64>,
    pub lengthscales: Option<Vec<f64>>,
    pub noise_variance: Option<f64>,
    pub mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimultaneousSection {
    /// Knot count; when unset, the count OAT-BO settled on, else the knot budget.
    pub k: Option<usize>,
    pub init: InitStrategy,
}

impl Default for SimultaneousSection {
    fn default() -> Self {
        Self {
            k: None,
            init: InitStrategy::Kmeans,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedKnotsSection {
    /// Evenly spaced knots over the input range.
    pub k: usize,
}

impl Default for FixedKnotsSection {
    fn default() -> Self {
        Self { k: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Not part of the config hash.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    pub data: DataSection,
    #[serde(default = "all_models")]
    pub models: Vec<ModelName>,
    /// Training fraction. Without it every model is scored on its own
    /// training inputs.
    #[serde(default)]
    pub split: Option<f64>,
    #[serde(default = "all_metrics")]
    pub metrics: Vec<MetricName>,
    #[serde(default)]
    pub mnlp_mode: MnlpMode,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub oat: OatConfig,
    #[serde(default)]
    pub convergence: ConvergenceSpec,
    #[serde(default)]
    pub simultaneous: SimultaneousSection,
    #[serde(default)]
    pub fixed_knots: FixedKnotsSection,
    /// Points in the prediction-band grid for 1-D inputs; 0 uses the test inputs.
    #[serde(default = "band_grid")]
    pub band_grid: usize,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn all_models() -> Vec<ModelName> {
    vec![
        ModelName::Full,
        ModelName::OatBo,
        ModelName::OatRs,
        ModelName::Simultaneous,
        ModelName::FixedKnots,
    ]
}

fn all_metrics() -> Vec<MetricName> {
    vec![MetricName::Srmse, MetricName::Mnlp, MetricName::Aukl, MetricName::Rmse]
}

fn band_grid() -> usize {
    201
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub model: Option<ModelName>,
    pub kmax: Option<usize>,
    pub tmin: Option<usize>,
    pub tmax: Option<usize>,
    pub threshold: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("bad config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_toml(&text, &base)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(m) = o.model {
            self.models = vec![m];
        }
        if let Some(k) = o.kmax {
            self.oat.max_knots = k;
        }
        if let Some(t) = o.tmin {
            self.oat.t_min = t;
        }
        if let Some(t) = o.tmax {
            self.oat.t_max = t;
        }
        if let Some(t) = o.threshold {
            self.oat.improvement_threshold = t;
        }
        // one root seed drives every stream
        self.oat.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(CliError::Usage("config lists no models".into()));
        }
        if let Some(s) = self.split {
            if !(s > 0.0 && s < 1.0) {
                return Err(CliError::Usage(format!("split must lie in (0, 1), got {s}")));
            }
        }
        match (&self.data.path, &self.data.synth) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(CliError::Usage("data needs exactly one of 'path' or 'synth'".into())),
        }
        self.oat.validate()?;
        self.convergence.validate()?;
        if self.fixed_knots.k == 0 {
            return Err(CliError::Usage("fixed_knots.k must be positive".into()));
        }
        Ok(())
    }

    pub fn data_path(&self) -> Option<PathBuf> {
        self.data.path.as_ref().map(|p| self.base_dir.join(p))
    }

    pub fn wants(&self, m: MetricName) -> bool {
        self.metrics.contains(&m)
    }

    /// SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [data]
        synth = { kind = "gaussian_1d", n = 50 }
    "#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(cfg.models.len(), 5);
        assert_eq!(cfg.oat, OatConfig::default());
        assert_eq!(cfg.fixed_knots.k, 20);
        cfg.validate().unwrap();
    }

    #[test]
    fn flags_win() {
        let text = format!("seed = 3\n[oat]\nmax_knots = 12\n{MINIMAL}");
        let mut cfg = ExperimentConfig::from_toml(&text, Path::new(".")).unwrap();
        cfg.apply(&Overrides {
            kmax: Some(7),
            model: Some(ModelName::OatRs),
            ..Default::default()
        });
        assert_eq!(cfg.oat.max_knots, 7);
        assert_eq!(cfg.models, vec![ModelName::OatRs]);
        assert_eq!(cfg.oat.seed, 3);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_toml(MINIMAL, Path::new("a")).unwrap();
        let b = ExperimentConfig::from_toml(MINIMAL, Path::new("b")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.out = Some("elsewhere".into());
        assert_eq!(a.hash(), c.hash());
        c.seed = 1;
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rejects_bad_split_and_unknown_keys() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL, Path::new(".")).unwrap();
        cfg.split = Some(1.0);
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
        assert!(ExperimentConfig::from_toml("bogus = 1\n[data]\npath = \"x.csv\"", Path::new(".")).is_err());
    }
}
