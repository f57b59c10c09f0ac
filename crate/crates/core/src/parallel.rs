//! Fork-join and multi-chain drivers plus the contribution/speedup model.
//!
//! Fork-join rounds let every worker run one full cascade from the same
//! incumbent; the lowest accepting rank wins. The winning rank is therefore
//! a truncated geometric variable, which is what [`fit_geometric`] inverts.

use alloc::vec;
use alloc::vec::Vec;

use crate::kernel::{ChainSink, KernelConfig, NullSink, RunError, RunOutput, Sampler, SamplerOptions};
use crate::model::TargetDensity;
use crate::proposal::ProposalState;
use crate::refine::{convergence_check, refine_two_phase, ConvergenceReport, RefinedSample, DEFAULT_KS_ALPHA};
use crate::{Error, Result};

/// Largest worker count considered by [`recommend_workers`].
pub const MAX_WORKERS: u32 = 1 << 16;

pub const DEFAULT_EFFICIENCY_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContributionTally {
    /// Accepted states credited to ranks `1..=P`.
    pub counts: Vec<u64>,
}

impl ContributionTally {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::BadDimension { what: "worker count", found: 0 });
        }
        Ok(Self { counts })
    }

    pub fn worker_count(&self) -> u32 {
        self.counts.len() as u32
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Truncated geometric probabilities `p (1-p)^(r-1) / (1 - (1-p)^P)`.
pub fn truncated_geometric_pmf(p: f64, workers: u32) -> Vec<f64> {
    if p >= 1.0 {
        let mut v = vec![0.0; workers as usize];
        v[0] = 1.0;
        return v;
    }
    let q = libm::log1p(-p);
    let norm = -libm::expm1(workers as f64 * q);
    (0..workers).map(|r| p * libm::exp(r as f64 * q) / norm).collect()
}

/// Maximum-likelihood success probability of a truncated geometric tally.
///
/// Returns 1 when every count sits in rank 1. When the tally is at least
/// as flat as the uniform distribution the likelihood peaks at `p -> 0` and
/// the lower end of the search bracket is returned.
pub fn fit_geometric(tally: &ContributionTally) -> Result<f64> {
    let n = tally.total();
    if n == 0 {
        return Err(Error::EmptyTally);
    }
    let s: u64 = tally.counts.iter().enumerate().map(|(r, c)| r as u64 * c).sum();
    if s == 0 {
        return Ok(1.0);
    }
    let (n, s, pw) = (n as f64, s as f64, tally.worker_count() as f64);
    let score = |p: f64| {
        let q = libm::log1p(-p);
        let trunc = pw * libm::exp((pw - 1.0) * q) / -libm::expm1(pw * q);
        n / p - s / (1.0 - p) - n * trunc
    };
    let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
    if score(lo) <= 0.0 {
        return Ok(lo);
    }
    if score(hi) >= 0.0 {
        return Ok(1.0);
    }
    // the score is monotone, so bisection converges to the unique root
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Expected speedup of `workers` fork-join workers at acceptance probability
/// `p`: `(1 - (1-p)^P) / p`.
pub fn predict_speedup(p: f64, workers: u32) -> f64 {
    // the closed form rounds to just under 1 for some p
    if p >= 1.0 || workers == 1 {
        return 1.0;
    }
    if p <= 0.0 {
        return workers as f64;
    }
    -libm::expm1(workers as f64 * libm::log1p(-p)) / p
}

/// Smallest worker count reaching `1 - floor` of the saturation speedup
/// `1/p`, capped at [`MAX_WORKERS`].
pub fn recommend_workers(p: f64, efficiency_floor: f64) -> u32 {
    if p >= 1.0 {
        return 1;
    }
    let q = libm::log1p(-p);
    let ln_floor = libm::log(efficiency_floor);
    (1..=MAX_WORKERS).find(|&w| w as f64 * q <= ln_floor).unwrap_or(MAX_WORKERS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupReport {
    pub fitted_p: f64,
    pub predicted_curve: Vec<(u32, f64)>,
    pub recommended_workers: u32,
    pub observed_speedup: Option<f64>,
}

impl SpeedupReport {
    /// Fits the tally and tabulates the prediction at powers of two up to
    /// `max_workers` (and at `max_workers` itself).
    pub fn from_tally(tally: &ContributionTally, max_workers: u32, efficiency_floor: f64) -> Result<Self> {
        let p = fit_geometric(tally)?;
        Ok(Self::from_probability(p, max_workers, efficiency_floor))
    }

    pub fn from_probability(p: f64, max_workers: u32, efficiency_floor: f64) -> Self {
        let max_workers = max_workers.clamp(1, MAX_WORKERS);
        let mut curve = Vec::new();
        let mut w = 1u32;
        while w < max_workers {
            curve.push((w, predict_speedup(p, w)));
            w *= 2;
        }
        curve.push((max_workers, predict_speedup(p, max_workers)));
        Self {
            fitted_p: p,
            predicted_curve: curve,
            recommended_workers: recommend_workers(p, efficiency_floor),
            observed_speedup: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForkJoinOutput {
    pub run: RunOutput,
    pub tally: ContributionTally,
    /// `None` when nothing was accepted.
    pub speedup: Option<SpeedupReport>,
}

/// Single-chain run with `workers` round-synchronous workers.
pub fn run_forkjoin<T, S>(
    target: &T,
    config: KernelConfig,
    proposal: ProposalState,
    workers: u32,
    sink: &mut S,
) -> core::result::Result<ForkJoinOutput, RunError<S::Error>>
where
    T: TargetDensity + ?Sized,
    S: ChainSink,
{
    let run = Sampler::new(target, config, proposal, SamplerOptions::fork_join(workers))?.run(sink)?;
    Ok(forkjoin_output(run)?)
}

/// Wraps a finished fork-join run with its tally and speedup fit.
pub fn forkjoin_output(run: RunOutput) -> Result<ForkJoinOutput> {
    let tally = ContributionTally::new(run.summary.tally.clone())?;
    let speedup = match fit_geometric(&tally) {
        Ok(p) => Some(SpeedupReport::from_probability(p, tally.worker_count().max(2) * 2, DEFAULT_EFFICIENCY_FLOOR)),
        Err(Error::EmptyTally) => None,
        Err(e) => return Err(e),
    };
    Ok(ForkJoinOutput { run, tally, speedup })
}

/// Runs chain `index` of a multi-chain simulation.
pub fn run_chain<T, S>(
    target: &T,
    config: KernelConfig,
    proposal: ProposalState,
    index: u64,
    sink: &mut S,
) -> core::result::Result<RunOutput, RunError<S::Error>>
where
    T: TargetDensity + ?Sized,
    S: ChainSink,
{
    Sampler::new(target, config, proposal, SamplerOptions::chain(index))?.run(sink)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiChainOutput {
    pub runs: Vec<Result<RunOutput>>,
    /// Refined sample per chain, or the refinement error.
    pub refined: Vec<Result<RefinedSample>>,
    /// Present when at least two chains were refined.
    pub convergence: Option<ConvergenceReport>,
}

/// Refines finished chains and compares them pairwise.
pub fn summarize_chains(runs: Vec<Result<RunOutput>>) -> MultiChainOutput {
    let refined: Vec<Result<RefinedSample>> = runs
        .iter()
        .map(|r| match r {
            Ok(out) => refine_two_phase(&out.chain),
            Err(e) => Err(e.clone()),
        })
        .collect();
    let ok: Vec<&RefinedSample> = refined.iter().filter_map(|r| r.as_ref().ok()).collect();
    let convergence = if ok.len() >= 2 { convergence_check(&ok, DEFAULT_KS_ALPHA).ok() } else { None };
    MultiChainOutput { runs, refined, convergence }
}

/// Runs `n_chains` independent chains one after another.
pub fn run_multichain<T>(target: &T, config: &KernelConfig, proposal: &ProposalState, n_chains: u64) -> MultiChainOutput
where
    T: TargetDensity + ?Sized,
{
    let runs = (0..n_chains)
        .map(|i| {
            run_chain(target, config.clone(), proposal.clone(), i, &mut NullSink).map_err(|e| match e {
                RunError::Sampler(e) => e,
                RunError::Sink(never) => match never {},
            })
        })
        .collect();
    summarize_chains(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_examples() {
        let t = ContributionTally::new(vec![40, 0, 0, 0]).unwrap();
        assert_eq!(fit_geometric(&t).unwrap(), 1.0);
        // P = 2: the score 3/p - 1/(1-p) - 6(1-p)/(p(2-p)) vanishes at 1/2
        let t = ContributionTally::new(vec![2, 1]).unwrap();
        assert!((fit_geometric(&t).unwrap() - 0.5).abs() < 1e-10);
        assert_eq!(fit_geometric(&ContributionTally::new(vec![0, 0]).unwrap()), Err(Error::EmptyTally));
    }

    #[test]
    fn fit_matches_grid_search() {
        let t = ContributionTally::new(vec![50, 30, 12, 9, 4, 1]).unwrap();
        let loglik = |p: f64| {
            t.counts
                .iter()
                .zip(truncated_geometric_pmf(p, 6))
                .map(|(&c, q)| c as f64 * libm::log(q))
                .sum::<f64>()
        };
        let best = (1..100_000).map(|i| i as f64 / 100_000.0).max_by(|a, b| loglik(*a).total_cmp(&loglik(*b))).unwrap();
        assert!((fit_geometric(&t).unwrap() - best).abs() < 2e-5);
    }

    #[test]
    fn speedup_examples() {
        assert_eq!(predict_speedup(0.37, 1), 1.0);
        assert!((predict_speedup(0.5, 2) - 1.5).abs() < 1e-15);
        assert!((predict_speedup(0.5, 200) - 2.0).abs() < 1e-12);
        assert!((predict_speedup(1e-9, 64) - 64.0).abs() < 1e-5);
    }

    #[test]
    fn recommend_examples() {
        assert_eq!(recommend_workers(1.0, 0.05), 1);
        assert_eq!(recommend_workers(0.5, 0.05), 5);
        assert_eq!(recommend_workers(0.1, 0.05), 29);
        assert_eq!(recommend_workers(1e-9, 0.05), MAX_WORKERS);
    }

    #[test]
    fn curve_starts_at_one() {
        let r = SpeedupReport::from_probability(0.2, 100, 0.05);
        assert_eq!(r.predicted_curve[0], (1, 1.0));
        assert_eq!(r.predicted_curve.last().unwrap().0, 100);
        assert!(r.predicted_curve.windows(2).all(|w| w[0].1 <= w[1].1));
    }
}
