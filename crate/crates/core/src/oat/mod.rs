//! One-at-a-time knot selection and the baselines it is compared against.

mod init;
mod meta;
mod proposal;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Points};
use crate::error::{GpError, Result};
use crate::kernel::{KernelParams, MeanFunction};
use crate::model::{log_marginal, optimize_params};
use crate::optimize::ConvergenceSpec;
use crate::rng::{stream, Stream};

pub use init::{init_knots, kmeans, uniform_grid, InitStrategy, KMEANS_ITERS, KMEANS_RESTARTS};
pub use meta::{expected_improvement, MetaGp, MetaGpConfig};
pub use proposal::{candidate_locations, propose_bo, propose_rs, Proposal, ProposalContext};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalKind {
    /// Expected improvement under a meta GP.
    Bo,
    /// Best of a random subset of data locations.
    Rs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OatConfig {
    pub initial_knots: usize,
    pub max_knots: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub improvement_threshold: f64,
    pub init: InitStrategy,
    pub proposal: ProposalKind,
    pub meta: MetaGpConfig,
    pub seed: u64,
}

impl Default for OatConfig {
    fn default() -> Self {
        Self {
            initial_knots: 5,
            max_knots: 30,
            t_min: 10,
            t_max: 30,
            improvement_threshold: 0.1,
            init: InitStrategy::Kmeans,
            proposal: ProposalKind::Bo,
            meta: MetaGpConfig::default(),
            seed: 0,
        }
    }
}

impl OatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_knots == 0 || self.initial_knots > self.max_knots {
            return Err(GpError::input(format!(
                "need 1 <= initial knots <= max knots, got {} and {}",
                self.initial_knots, self.max_knots
            )));
        }
        if self.t_min == 0 || self.t_min > self.t_max {
            return Err(GpError::input(format!(
                "need 1 <= t_min <= t_max, got {} and {}",
                self.t_min, self.t_max
            )));
        }
        if self.improvement_threshold.is_nan() || self.improvement_threshold <= 0.0 {
            return Err(GpError::input("improvement threshold must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The knot budget was reached (or the single optimization ran out of
    /// iterations for the non-greedy fits).
    Budget,
    /// The last candidate did not clear the improvement threshold, or the
    /// optimization converged.
    Converged,
    /// A proposal or optimization failed; the best state so far is kept.
    Error,
}

/// Outcome of a model fit.
#[derive(Clone, Debug)]
pub struct FitResult {
    /// `None` for the dense model.
    pub knots: Option<Points>,
    pub initial_knots: Option<Points>,
    pub params: KernelParams,
    pub mean: MeanFunction,
    pub log_marginal: f64,
    /// Log marginal likelihood after initialization and after each accepted
    /// knot.
    pub trace: Vec<f64>,
    /// Likelihood evaluations used by each proposal.
    pub proposal_evaluations: Vec<usize>,
    pub ga_steps: usize,
    pub ga_time: Duration,
    pub proposal_time: Duration,
    pub total_time: Duration,
    pub termination: Termination,
    pub message: Option<String>,
}

impl FitResult {
    pub fn n_knots(&self) -> usize {
        self.knots.as_ref().map_or(0, |k| k.len())
    }
}

fn check_spec(spec: &ConvergenceSpec) -> Result<()> {
    spec.validate()
}

/// Greedy knot selection. After a hyperparameter-only fit at the initial
/// knots, each round proposes a knot, then jointly optimizes that knot and
/// the hyperparameters with the earlier knots frozen. The knot is kept only
/// if the log marginal likelihood rose by at least the threshold.
pub fn oat_fit(
    data: &Dataset,
    m: &MeanFunction,
    p0: &KernelParams,
    cfg: &OatConfig,
    spec: &ConvergenceSpec,
) -> Result<FitResult> {
    cfg.validate()?;
    check_spec(spec)?;
    let start = Instant::now();
    let mut init_rng = stream(cfg.seed, Stream::Init);
    let mut prop_rng = stream(cfg.seed, Stream::Proposal);
    let initial = init_knots(&data.x, &cfg.init, cfg.initial_knots, &mut init_rng)?;

    let first = optimize_params(data, Some(&initial), initial.len(), p0, m, spec)?;
    let mut ga_steps = first.ascent.iterations;
    let mut ga_time = first.elapsed;
    let mut proposal_time = Duration::ZERO;
    let mut knots = initial.clone();
    let mut params = first.params;
    let mut current = first.log_marginal;
    let mut trace = vec![current];
    let mut evaluations = Vec::new();
    let mut message = None;

    let termination = loop {
        if knots.len() >= cfg.max_knots {
            break Termination::Budget;
        }
        let t0 = Instant::now();
        let ctx = ProposalContext {
            data,
            knots: &knots,
            params: &params,
            mean: m,
            current,
        };
        let proposed = match cfg.proposal {
            ProposalKind::Bo => propose_bo(ctx, &cfg.meta, cfg.t_min, cfg.t_max, &mut prop_rng),
            ProposalKind::Rs => propose_rs(ctx, cfg.t_max, &mut prop_rng),
        };
        proposal_time += t0.elapsed();
        let proposal = match proposed {
            Ok(p) => p,
            Err(e) => {
                message = Some(format!("proposal failed: {e}"));
                break Termination::Error;
            }
        };
        evaluations.push(proposal.evaluations);

        let mut candidate = knots.clone();
        candidate.push(&proposal.knot)?;
        let fit = match optimize_params(data, Some(&candidate), knots.len(), &params, m, spec) {
            Ok(f) => f,
            Err(e) => {
                message = Some(format!("joint optimization failed: {e}"));
                break Termination::Error;
            }
        };
        ga_steps += fit.ascent.iterations;
        ga_time += fit.elapsed;
        let gain = fit.log_marginal - current;
        log::debug!(
            "knot {} proposed at {:?} (w = {:.4}), optimized gain {gain:.4}",
            knots.len() + 1,
            proposal.knot,
            proposal.value
        );
        if !(gain >= cfg.improvement_threshold) {
            break Termination::Converged;
        }
        knots = fit.knots.expect("sparse fit keeps knots");
        params = fit.params;
        current = fit.log_marginal;
        trace.push(current);
    };

    Ok(FitResult {
        knots: Some(knots),
        initial_knots: Some(initial),
        params,
        mean: *m,
        log_marginal: current,
        trace,
        proposal_evaluations: evaluations,
        ga_steps,
        ga_time,
        proposal_time,
        total_time: start.elapsed(),
        termination,
        message,
    })
}

fn single_fit(
    data: &Dataset,
    knots: Option<Points>,
    first_free: usize,
    m: &MeanFunction,
    p0: &KernelParams,
    spec: &ConvergenceSpec,
) -> Result<FitResult> {
    check_spec(spec)?;
    let start = Instant::now();
    let fit = optimize_params(data, knots.as_ref(), first_free, p0, m, spec)?;
    let termination = match fit.ascent.status {
        crate::optimize::AscentStatus::Converged => Termination::Converged,
        crate::optimize::AscentStatus::BudgetExhausted => Termination::Budget,
        crate::optimize::AscentStatus::NonFinite => Termination::Error,
    };
    Ok(FitResult {
        knots: fit.knots,
        initial_knots: knots,
        params: fit.params,
        mean: *m,
        log_marginal: fit.log_marginal,
        trace: vec![fit.log_marginal],
        proposal_evaluations: Vec::new(),
        ga_steps: fit.ascent.iterations,
        ga_time: fit.elapsed,
        proposal_time: Duration::ZERO,
        total_time: start.elapsed(),
        termination,
        message: (termination == Termination::Error)
            .then(|| "objective stopped being finite; best iterate kept".to_string()),
    })
}

/// Joint ascent over all `k` knots and the hyperparameters.
pub fn simultaneous_fit(
    data: &Dataset,
    m: &MeanFunction,
    p0: &KernelParams,
    k: usize,
    init: &InitStrategy,
    seed: u64,
    spec: &ConvergenceSpec,
) -> Result<FitResult> {
    if k == 0 {
        return Err(GpError::input("simultaneous optimization needs at least one knot"));
    }
    let knots = init_knots(&data.x, init, k, &mut stream(seed, Stream::Init))?;
    single_fit(data, Some(knots), 0, m, p0, spec)
}

/// Hyperparameters only, with the knots held where they are.
pub fn fixed_knots_fit(
    data: &Dataset,
    m: &MeanFunction,
    p0: &KernelParams,
    knots: &Points,
    spec: &ConvergenceSpec,
) -> Result<FitResult> {
    single_fit(data, Some(knots.clone()), knots.len(), m, p0, spec)
}

/// Dense model with optimized hyperparameters.
pub fn full_fit(data: &Dataset, m: &MeanFunction, p0: &KernelParams, spec: &ConvergenceSpec) -> Result<FitResult> {
    single_fit(data, None, 0, m, p0, spec)
}

/// Log marginal likelihood of a finished fit, recomputed from scratch.
pub fn refit_log_marginal(data: &Dataset, fit: &FitResult) -> Result<f64> {
    log_marginal(data, fit.knots.as_ref(), &fit.params, &fit.mean)
}
