//! Candidate knot proposals: Bayesian optimization over data locations and
//! the best-of-a-random-subset baseline.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;

use crate::data::{Dataset, Points};
use crate::error::{GpError, Result};
use crate::kernel::{KernelParams, MeanFunction};
use crate::model::log_marginal;

use super::meta::{expected_improvement, MetaGp, MetaGpConfig};

/// Everything a proposal needs about the current model.
#[derive(Clone, Copy, Debug)]
pub struct ProposalContext<'a> {
    pub data: &'a Dataset,
    pub knots: &'a Points,
    pub params: &'a KernelParams,
    pub mean: &'a MeanFunction,
    /// Log marginal likelihood of the current model.
    pub current: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub knot: Vec<f64>,
    /// Log marginal likelihood with the candidate appended and the
    /// hyperparameters held at their current values.
    pub value: f64,
    /// Likelihood evaluations spent, including failed ones.
    pub evaluations: usize,
    pub failures: usize,
}

fn row_key(row: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same location
    row.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Distinct data locations that are not already knots, in data order.
pub fn candidate_locations(x: &Points, knots: &Points) -> Points {
    let mut seen: HashSet<Vec<u64>> = knots.rows().map(row_key).collect();
    let mut out = Points::empty(x.dim());
    for row in x.rows() {
        if seen.insert(row_key(row)) {
            out.push(row).expect("same dimension");
        }
    }
    out
}

struct Evaluator<'a> {
    ctx: ProposalContext<'a>,
    augmented: Points,
    evaluations: usize,
    failures: usize,
}

impl<'a> Evaluator<'a> {
    fn new(ctx: ProposalContext<'a>) -> Self {
        let mut augmented = ctx.knots.clone();
        augmented.push(&vec![0.0; ctx.knots.dim()]).expect("same dimension");
        Self {
            ctx,
            augmented,
            evaluations: 0,
            failures: 0,
        }
    }

    fn eval(&mut self, z: &[f64]) -> Option<f64> {
        self.evaluations += 1;
        let last = self.augmented.len() - 1;
        self.augmented.row_mut(last).copy_from_slice(z);
        match log_marginal(self.ctx.data, Some(&self.augmented), self.ctx.params, self.ctx.mean) {
            Ok(w) if w.is_finite() => Some(w),
            Ok(w) => {
                log::warn!("skipping candidate {z:?}: log marginal likelihood is {w}");
                self.failures += 1;
                None
            }
            Err(e) => {
                log::warn!("skipping candidate {z:?}: {e}");
                self.failures += 1;
                None
            }
        }
    }
}

/// Index of the largest value; the earliest wins ties.
fn argmax(values: impl IntoIterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

fn finish(candidates: &Points, explored: &[(usize, f64)], ev: &Evaluator) -> Result<Proposal> {
    // explored entries are in evaluation order; pick by candidate index on ties
    let mut sorted = explored.to_vec();
    sorted.sort_by_key(|(i, _)| *i);
    let (idx, value) = argmax(sorted).ok_or_else(|| {
        GpError::Proposal(format!(
            "all {} candidate evaluations failed",
            ev.evaluations
        ))
    })?;
    Ok(Proposal {
        knot: candidates.row(idx).to_vec(),
        value,
        evaluations: ev.evaluations,
        failures: ev.failures,
    })
}

/// Best of `t_max` distinct random data locations.
pub fn propose_rs<R: Rng>(ctx: ProposalContext, t_max: usize, rng: &mut R) -> Result<Proposal> {
    if t_max == 0 {
        return Err(GpError::input("the proposal budget must be at least 1"));
    }
    let candidates = candidate_locations(&ctx.data.x, ctx.knots);
    if candidates.is_empty() {
        return Err(GpError::Proposal("no data location is free to become a knot".into()));
    }
    let picks = sample(rng, candidates.len(), t_max.min(candidates.len())).into_vec();
    let mut ev = Evaluator::new(ctx);
    let explored: Vec<(usize, f64)> = picks
        .into_iter()
        .filter_map(|i| ev.eval(candidates.row(i)).map(|w| (i, w)))
        .collect();
    finish(&candidates, &explored, &ev)
}

/// Bayesian-optimization proposal: `t_min` random data locations, then up to
/// `t_max - t_min` locations chosen by expected improvement under a meta GP
/// whose hyperparameters are refitted every round. The hyperparameters of
/// the model itself stay fixed throughout.
pub fn propose_bo<R: Rng>(
    ctx: ProposalContext,
    meta_config: &MetaGpConfig,
    t_min: usize,
    t_max: usize,
    rng: &mut R,
) -> Result<Proposal> {
    if t_min == 0 || t_min > t_max {
        return Err(GpError::input(format!(
            "proposal budget needs 1 <= t_min <= t_max, got {t_min} and {t_max}"
        )));
    }
    let candidates = candidate_locations(&ctx.data.x, ctx.knots);
    if candidates.is_empty() {
        return Err(GpError::Proposal("no data location is free to become a knot".into()));
    }
    let m = candidates.len();
    let mut ev = Evaluator::new(ctx);
    let mut explored: Vec<(usize, f64)> = Vec::new();
    let mut tried = vec![false; m];
    for i in sample(rng, m, t_min.min(m)).into_vec() {
        tried[i] = true;
        if let Some(w) = ev.eval(candidates.row(i)) {
            explored.push((i, w));
        }
    }

    let mut meta = MetaGp::new(ctx.knots, ctx.current, ctx.params.lengthscales.clone(), *meta_config)?;
    for &(i, w) in &explored {
        meta.add(candidates.row(i), w)?;
    }
    while ev.evaluations < t_max && tried.iter().any(|t| !t) {
        meta.refit()?;
        let (mu, var) = meta.predict(&candidates)?;
        let best = meta.incumbent();
        let mut scores = Vec::with_capacity(m);
        for i in 0..m {
            if !tried[i] {
                scores.push((i, expected_improvement(mu[i], var[i], best)?));
            }
        }
        let Some((next, _)) = argmax(scores) else { break };
        tried[next] = true;
        if let Some(w) = ev.eval(candidates.row(next)) {
            explored.push((next, w));
            meta.add(candidates.row(next), w)?;
        }
    }
    finish(&candidates, &explored, &ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Dataset, Points, KernelParams, MeanFunction) {
        let xs: Vec<f64> = (0..60).map(|i| i as f64 * 10.0 / 59.0).collect();
        let y: Vec<f64> = xs.iter().map(|x| (1.3 * x).sin() + 0.3 * (3.1 * x).cos()).collect();
        let data = Dataset::gaussian(Points::from_scalars(&xs), y).unwrap();
        let knots = Points::from_scalars(&[1.0, 5.0]);
        let p = KernelParams::new(1.0, vec![0.8], 0.05).unwrap();
        (data, knots, p, MeanFunction::zero())
    }

    fn ctx<'a>(d: &'a Dataset, k: &'a Points, p: &'a KernelParams, m: &'a MeanFunction) -> ProposalContext<'a> {
        ProposalContext {
            data: d,
            knots: k,
            params: p,
            mean: m,
            current: log_marginal(d, Some(k), p, m).unwrap(),
        }
    }

    #[test]
    fn exhaustive_rs_finds_global_best_location() {
        let (d, k, p, m) = setup();
        let c = ctx(&d, &k, &p, &m);
        let prop = propose_rs(c, d.len(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let cands = candidate_locations(&d.x, &k);
        let mut best = f64::NEG_INFINITY;
        for z in cands.rows() {
            let mut kk = k.clone();
            kk.push(z).unwrap();
            best = best.max(log_marginal(&d, Some(&kk), &p, &m).unwrap());
        }
        assert_eq!(prop.value, best);
        assert_eq!(prop.evaluations, cands.len());
    }

    #[test]
    fn rs_returns_best_sampled_and_replays() {
        let (d, k, p, m) = setup();
        let c = ctx(&d, &k, &p, &m);
        let a = propose_rs(c, 7, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = propose_rs(c, 7, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.evaluations, 7);
    }

    #[test]
    fn bo_respects_budget_and_replays() {
        let (d, k, p, m) = setup();
        let c = ctx(&d, &k, &p, &m);
        let cfg = MetaGpConfig::default();
        let a = propose_bo(c, &cfg, 4, 12, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = propose_bo(c, &cfg, 4, 12, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.evaluations <= 12);
        assert!(!k.contains_row(&a.knot));
        assert!(a.value > c.current);
    }

    #[test]
    fn bo_with_single_evaluation_is_one_random_location() {
        let (d, k, p, m) = setup();
        let c = ctx(&d, &k, &p, &m);
        let cfg = MetaGpConfig::default();
        let bo = propose_bo(c, &cfg, 1, 1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let rs = propose_rs(c, 1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(bo.evaluations, 1);
        assert_eq!(bo, rs);
    }

    #[test]
    fn bo_beats_or_matches_its_random_phase() {
        let (d, k, p, m) = setup();
        let c = ctx(&d, &k, &p, &m);
        let cfg = MetaGpConfig::default();
        let short = propose_bo(c, &cfg, 5, 5, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let long = propose_bo(c, &cfg, 5, 15, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert!(long.value >= short.value);
    }

    #[test]
    fn existing_knots_are_not_candidates() {
        let x = Points::from_scalars(&[0.0, 1.0, 1.0, -0.0, 2.0]);
        let c = candidate_locations(&x, &Points::from_scalars(&[0.0]));
        assert_eq!(c.as_slice(), &[1.0, 2.0]);
    }
}
