//! Command-line front end: `fit`, `predict`, `experiment` and `synth`.

pub mod artifact;
pub mod config;
pub mod error;
pub mod experiment;
pub mod run;
pub mod table;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use knotgp::synth::{generate, SynthKind};

use crate::artifact::{write_json, Artifact};
use crate::config::{ExperimentConfig, ModelName, Overrides};
use crate::error::{CliError, Result};
use crate::run::{fit_model, load_data, predict, start_values, synth_spec, Timing};

#[derive(Debug, Parser)]
#[command(name = "knotgp", version, about = "Sparse GP fitting with one-at-a-time knot selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelName>,
    /// Knot budget.
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Minimum evaluations per proposal.
    #[arg(long)]
    pub tmin: Option<usize>,
    /// Maximum evaluations per proposal.
    #[arg(long)]
    pub tmax: Option<usize>,
    /// Log-marginal gain needed to keep a knot.
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            model: self.model,
            kmax: self.kmax,
            tmin: self.tmin,
            tmax: self.tmax,
            threshold: self.threshold,
        }
    }

    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&self.overrides());
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model to the whole dataset and save it.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV, overriding the config's data source.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Predict at new inputs from a saved model.
    Predict {
        #[arg(long)]
        artifact: PathBuf,
        /// CSV with columns x1..xd and optionally a.
        #[arg(long)]
        input: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every configured model on a shared train/test split.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic dataset.
    Synth {
        #[arg(long, value_parser = parse_kind)]
        kind: SynthKind,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dataset CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write the latent function values.
        #[arg(long)]
        latent: Option<PathBuf>,
    },
}

fn parse_kind(s: &str) -> std::result::Result<SynthKind, String> {
    match s {
        "gaussian_1d" => Ok(SynthKind::Gaussian1d),
        "poisson_lgcp_1d" => Ok(SynthKind::PoissonLgcp1d),
        "banana_like_2d" => Ok(SynthKind::BananaLike2d),
        _ => Err(format!("unknown kind '{s}' (gaussian_1d, poisson_lgcp_1d, banana_like_2d)")),
    }
}

pub const ARTIFACT_FILE: &str = "model.json";
pub const TIMING_FILE: &str = "model.timing.json";

pub fn cmd_fit(common: &Common, data: Option<&Path>) -> Result<Artifact> {
    let mut cfg = common.load()?;
    if let Some(p) = data {
        cfg.data.path = Some(std::env::current_dir().map_err(|e| CliError::io("cwd", e))?.join(p));
        cfg.data.synth = None;
    }
    let model = match cfg.models.as_slice() {
        [one] => *one,
        _ => ModelName::OatBo,
    };
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(out.display(), e))?;
    let loaded = load_data(&cfg)?;
    let (p0, m) = start_values(&cfg, &loaded.data)?;
    let fit = fit_model(model, &cfg, &loaded.data, &p0, &m, None)?;
    let art = Artifact::new(model, cfg.hash(), cfg.seed, &fit, &loaded.data);
    art.save(&out.join(ARTIFACT_FILE))?;
    write_json(&out.join(TIMING_FILE), &Timing::of(&fit))?;
    Ok(art)
}

pub fn cmd_predict(artifact: &Path, input: &Path, out: Option<&Path>) -> Result<()> {
    let art = Artifact::load(artifact)?;
    let (x, offsets) = table::read_inputs(input)?;
    let post = art.posterior()?;
    let p = predict(&post, &art.data, &art.params, &x, offsets.as_deref())?;
    let headers: Vec<String> = ["mean", "latent_sd", "lower95", "upper95"].iter().map(|s| s.to_string()).collect();
    let rows = (0..x.len()).map(|i| vec![p.mean[i], p.latent_sd[i], p.lower95[i], p.upper95[i]]);
    match out {
        Some(path) => table::write_rows(path, &headers, rows),
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            let io = |e| CliError::io("stdout", e);
            w.write_record(&headers).map_err(io)?;
            for r in rows {
                w.write_record(r.iter().map(|v| v.to_string())).map_err(io)?;
            }
            w.flush().map_err(|e| CliError::io("stdout", e))
        }
    }
}

pub fn cmd_experiment(common: &Common) -> Result<experiment::ExperimentResults> {
    let cfg = common.load()?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    experiment::run_experiment(&cfg, &out)
}

pub fn cmd_synth(kind: SynthKind, n: usize, seed: u64, out: &Path, latent: Option<&Path>) -> Result<()> {
    let s = generate(&synth_spec(kind, n, seed))?;
    table::write_dataset(out, &s.data)?;
    if let Some(path) = latent {
        table::write_with_inputs(path, &s.data.x, &["f"], &[&s.latent])?;
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { common, data } => cmd_fit(&common, data.as_deref()).map(|_| ()),
        Command::Predict { artifact, input, out } => cmd_predict(&artifact, &input, out.as_deref()),
        Command::Experiment { common } => cmd_experiment(&common).map(|_| ()),
        Command::Synth {
            kind,
            n,
            seed,
            out,
            latent,
        } => cmd_synth(kind, n, seed, &out, latent.as_deref()),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
