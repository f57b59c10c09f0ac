//! Autocorrelation estimates, two-phase thinning and cross-chain checks.

use alloc::vec;
use alloc::vec::Vec;

use crate::chain::CompactChain;
use crate::kernel::burnin_location;
use crate::{Error, Result};

/// Shortest series the estimator accepts.
pub const MIN_SERIES: usize = 8;

/// Thinning stops once the aggregate IAC is within this of 1.
pub const STOP_TOLERANCE: f64 = 0.05;

/// Residual autocorrelation must also clear this many standard errors of
/// its estimator under independence. With a few hundred points the noise
/// alone is far above `STOP_TOLERANCE`.
pub const NOISE_SIGMAS: f64 = 3.0;

/// Batches grow to ten times the current IAC estimate while at least this
/// many batches remain.
const GROWTH_FACTOR: f64 = 10.0;
const MIN_BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IacMethod {
    BatchMeans,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IacEstimate {
    pub per_dimension: Vec<f64>,
    /// Maximum over dimensions.
    pub aggregate: f64,
    pub method: IacMethod,
}

/// When thinning stops.
///
/// A dimension shows residual autocorrelation when its batch-means IAC
/// exceeds `1 + max(tolerance, iac_sigmas * sqrt(2 / (b - 1)))` for `b`
/// batches, or when `|lag-1 autocorrelation| * sqrt(n)` exceeds
/// `lag1_sigmas`. Thinning continues while any dimension does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub tolerance: f64,
    pub iac_sigmas: f64,
    pub lag1_sigmas: Option<f64>,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { tolerance: STOP_TOLERANCE, iac_sigmas: NOISE_SIGMAS, lag1_sigmas: Some(NOISE_SIGMAS) }
    }
}

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let m = mean(x);
    let den: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    if den <= 0.0 {
        return 0.0;
    }
    x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / den
}

fn residual<P: AsRef<[f64]>>(points: &[P], d: usize, rule: &StopRule) -> Result<(bool, f64)> {
    let n = points.len();
    let mut column = vec![0.0; n];
    let mut any = false;
    let mut aggregate: f64 = 1.0;
    for j in 0..d {
        for (c, p) in column.iter_mut().zip(points) {
            *c = p.as_ref()[j];
        }
        let (t, b) = batch_means_iac(&column);
        aggregate = aggregate.max(t);
        let noise = if b > 1 { libm::sqrt(2.0 / (b - 1) as f64) } else { f64::INFINITY };
        any |= t > 1.0 + rule.tolerance.max(rule.iac_sigmas * noise);
        if let Some(z) = rule.lag1_sigmas {
            any |= libm::fabs(lag1_autocorrelation(&column)) * libm::sqrt(n as f64) > z;
        }
    }
    Ok((any, aggregate))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn population_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Estimate and the number of batches behind it.
fn batch_means_iac(x: &[f64]) -> (f64, usize) {
    let n = x.len();
    let mut m = (libm::cbrt(n as f64) as usize).max(1);
    // guard against cbrt rounding just below an exact cube
    while (m + 1).pow(3) <= n {
        m += 1;
    }
    loop {
        let b = n / m;
        let y = &x[..b * m];
        let v = population_variance(y);
        if v <= 0.0 {
            return (1.0, b);
        }
        let means: Vec<f64> = y.chunks_exact(m).map(mean).collect();
        let t = (m as f64 * population_variance(&means) / v).max(1.0);
        let grown = libm::ceil(GROWTH_FACTOR * t) as usize;
        if grown <= m || n / grown < MIN_BATCHES {
            return (t, b);
        }
        m = grown;
    }
}

/// Integrated autocorrelation time of a scalar series by batch means.
///
/// Batches start at `floor(n^(1/3))` states and grow while the estimate
/// says they are shorter than ten autocorrelation times. Weighted series are
/// expanded first. A constant series has IAC 1.
pub fn estimate_iac(series: &[f64], weights: Option<&[u64]>) -> Result<f64> {
    let expanded;
    let x = match weights {
        Some(w) => {
            if w.len() != series.len() {
                return Err(Error::DimensionMismatch { expected: series.len(), found: w.len() });
            }
            expanded = series
                .iter()
                .zip(w)
                .flat_map(|(v, &k)| core::iter::repeat(*v).take(k as usize))
                .collect::<Vec<_>>();
            expanded.as_slice()
        }
        None => series,
    };
    if x.len() < MIN_SERIES {
        return Err(Error::SeriesTooShort { needed: MIN_SERIES, found: x.len() });
    }
    Ok(batch_means_iac(x).0)
}

/// Per-dimension IAC of a sequence of points.
pub fn estimate_iac_points<P: AsRef<[f64]>>(points: &[P], dimension: usize) -> Result<IacEstimate> {
    if points.len() < MIN_SERIES {
        return Err(Error::SeriesTooShort { needed: MIN_SERIES, found: points.len() });
    }
    let mut column = vec![0.0; points.len()];
    let mut per_dimension = Vec::with_capacity(dimension);
    for j in 0..dimension {
        for (c, p) in column.iter_mut().zip(points) {
            let p = p.as_ref();
            if p.len() != dimension {
                return Err(Error::DimensionMismatch { expected: dimension, found: p.len() });
            }
            *c = p[j];
        }
        per_dimension.push(batch_means_iac(&column).0);
    }
    let aggregate = per_dimension.iter().copied().fold(1.0, f64::max);
    Ok(IacEstimate { per_dimension, aggregate, method: IacMethod::BatchMeans })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementRound {
    pub phase: u8,
    pub iac_aggregate: f64,
    /// Rows (phase 1) or points (phase 2) kept after this round.
    pub kept_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedSample {
    pub dimension: usize,
    pub points: Vec<Vec<f64>>,
    pub log_funcs: Vec<f64>,
    pub source_verbose_length: u64,
    pub burnin_location: u64,
    pub rounds: Vec<RefinementRound>,
}

impl RefinedSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.points.iter().map(|p| p[j]).collect()
    }
}

fn thin<T: Clone>(v: &[T], step: usize) -> Vec<T> {
    v.iter().step_by(step).cloned().collect()
}

/// Drops burn-in, then thins the compact rows and finally the expanded
/// points until neither shows residual autocorrelation.
///
/// A round thins only when [`StopRule::default`] finds residual
/// autocorrelation; the step is `ceil(IAC)`, at least 2.
/// Phase 1 treats the compact rows as a plain sequence and keeps every
/// `ceil(IAC)`-th row with its weight. Phase 2 expands the survivors and
/// thins the points the same way. A chain with fewer than eight unique
/// states past burn-in is returned as its unique states.
pub fn refine_two_phase(chain: &CompactChain) -> Result<RefinedSample> {
    refine_two_phase_with(chain, &StopRule::default())
}

pub fn refine_two_phase_with(chain: &CompactChain, rule: &StopRule) -> Result<RefinedSample> {
    let d = chain.dimension();
    let series: Vec<(f64, u64)> = chain.rows().iter().map(|r| (r.log_func, r.weight)).collect();
    let burnin = burnin_location(&series, d);
    let verbose_len = chain.verbose_len();
    if verbose_len - burnin < MIN_SERIES as u64 {
        return Err(Error::SeriesTooShort { needed: MIN_SERIES, found: (verbose_len - burnin) as usize });
    }

    // rows past burn-in; the row straddling the boundary loses its early copies
    let mut rows: Vec<(&[f64], f64, u64)> = Vec::with_capacity(chain.len());
    let mut offset = 0u64;
    for r in chain.rows() {
        let end = offset + r.weight;
        if end > burnin {
            let w = end - offset.max(burnin);
            rows.push((r.state.as_slice(), r.log_func, w));
        }
        offset = end;
    }

    let mut rounds = Vec::new();
    let done = |points: Vec<Vec<f64>>, log_funcs: Vec<f64>, rounds: Vec<RefinementRound>| RefinedSample {
        dimension: d,
        points,
        log_funcs,
        source_verbose_length: verbose_len,
        burnin_location: burnin,
        rounds,
    };

    if rows.len() < MIN_SERIES {
        let points = rows.iter().map(|r| r.0.to_vec()).collect();
        let log_funcs = rows.iter().map(|r| r.1).collect();
        return Ok(done(points, log_funcs, rounds));
    }

    while rows.len() >= MIN_SERIES {
        let states: Vec<&[f64]> = rows.iter().map(|r| r.0).collect();
        let (more, iac) = residual(&states, d, rule)?;
        if !more {
            break;
        }
        rows = thin(&rows, (libm::ceil(iac) as usize).max(2));
        rounds.push(RefinementRound { phase: 1, iac_aggregate: iac, kept_count: rows.len() as u64 });
    }

    let mut points: Vec<&[f64]> = Vec::new();
    let mut log_funcs = Vec::new();
    for &(s, l, w) in &rows {
        for _ in 0..w {
            points.push(s);
            log_funcs.push(l);
        }
    }
    while points.len() >= MIN_SERIES {
        let (more, iac) = residual(&points, d, rule)?;
        if !more {
            break;
        }
        let step = (libm::ceil(iac) as usize).max(2);
        points = thin(&points, step);
        log_funcs = thin(&log_funcs, step);
        rounds.push(RefinementRound { phase: 2, iac_aggregate: iac, kept_count: points.len() as u64 });
    }
    Ok(done(points.into_iter().map(<[f64]>::to_vec).collect(), log_funcs, rounds))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // small-argument series of the CDF converges faster
        let c = core::f64::consts::PI * core::f64::consts::PI / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 1..=20 {
            let j = (2 * k - 1) as f64;
            s += libm::exp(-j * j * c);
        }
        let cdf = libm::sqrt(2.0 * core::f64::consts::PI) / lambda * s;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = libm::exp(-2.0 * kf * kf * lambda * lambda);
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64) / (na + nb) as f64;
    Ok(KsResult { statistic: d, p_value: kolmogorov_sf(libm::sqrt(ne) * d) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCheck {
    pub first: usize,
    pub second: usize,
    pub dimension: usize,
    pub ks: KsResult,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub alpha: f64,
    /// Per-test threshold after the Bonferroni correction.
    pub threshold: f64,
    pub checks: Vec<PairCheck>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub const DEFAULT_KS_ALPHA: f64 = 0.01;

/// Pairwise per-dimension KS tests between refined samples.
pub fn convergence_check(samples: &[&RefinedSample], alpha: f64) -> Result<ConvergenceReport> {
    let d = samples.first().map_or(0, |s| s.dimension);
    if samples.iter().any(|s| s.dimension != d) {
        return Err(Error::DimensionMismatch { expected: d, found: samples.iter().map(|s| s.dimension).find(|&x| x != d).unwrap_or(d) });
    }
    let n = samples.len();
    let tests = (n * n.saturating_sub(1) / 2 * d).max(1);
    let threshold = alpha / tests as f64;
    let mut checks = Vec::new();
    for first in 0..n {
        for second in first + 1..n {
            for dim in 0..d {
                let ks = ks_two_sample(&samples[first].column(dim), &samples[second].column(dim))?;
                checks.push(PairCheck { first, second, dimension: dim, ks, passed: ks.p_value > threshold });
            }
        }
    }
    Ok(ConvergenceReport { alpha, threshold, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainRow;

    #[test]
    fn constant_series_is_one() {
        assert_eq!(estimate_iac(&[2.5; 100], None).unwrap(), 1.0);
        assert_eq!(estimate_iac(&[1.0, 2.0], Some(&[4, 4])).unwrap() >= 1.0, true);
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(estimate_iac(&[1.0; 7], None), Err(Error::SeriesTooShort { .. })));
        assert!(estimate_iac(&[1.0, 2.0], Some(&[4, 4])).is_ok());
    }

    #[test]
    fn alternating_series_has_no_positive_correlation() {
        let x: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(estimate_iac(&x, None).unwrap(), 1.0);
    }

    #[test]
    fn ks_examples() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[1.5, 2.5, 3.5, 4.5]).unwrap();
        assert!((r.statistic - 0.25).abs() < 1e-15);
        let r = ks_two_sample(&[0.1, 0.5, 0.9], &[2.1, 2.2]).unwrap();
        assert_eq!(r.statistic, 1.0);
        let a = [0.3, -1.0, 2.0, 0.3];
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(ks_two_sample(&[], &a), Err(Error::EmptySample));
    }

    #[test]
    fn kolmogorov_branches_agree() {
        for lam in [1.1, 1.15, 1.18, 1.2, 1.25] {
            let c = core::f64::consts::PI * core::f64::consts::PI / (8.0 * lam * lam);
            let small: f64 = (1..=20).map(|k| libm::exp(-((2 * k - 1) as f64).powi(2) * c)).sum::<f64>()
                * libm::sqrt(2.0 * core::f64::consts::PI)
                / lam;
            let large: f64 = 2.0 * (1..=50).map(|k| {
                let t = libm::exp(-2.0 * (k * k) as f64 * lam * lam);
                if k % 2 == 1 { t } else { -t }
            }).sum::<f64>();
            assert!((1.0 - small - large).abs() < 1e-12, "{lam}");
        }
        // tabulated critical value: Q(1.3581) = 0.05
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn repeated_state_refines_to_itself() {
        let mut c = CompactChain::new(1);
        c.append_or_increment(ChainRow::new(vec![0.7], -1.0, 1000)).unwrap();
        let r = refine_two_phase(&c).unwrap();
        assert_eq!(r.points, vec![vec![0.7]]);
        assert!(r.rounds.is_empty());
    }

    #[test]
    fn too_short_after_burnin() {
        let mut c = CompactChain::new(1);
        for i in 0..5 {
            c.append_or_increment(ChainRow::new(vec![i as f64], -10.0 + i as f64, 1)).unwrap();
        }
        assert!(matches!(refine_two_phase(&c), Err(Error::SeriesTooShort { .. })));
    }

    #[test]
    fn burnin_splits_straddling_row() {
        let mut c = CompactChain::new(1);
        c.append_or_increment(ChainRow::new(vec![5.0], -20.0, 3)).unwrap();
        c.append_or_increment(ChainRow::new(vec![0.0], -1.0, 10)).unwrap();
        let r = refine_two_phase(&c).unwrap();
        assert_eq!(r.burnin_location, 3);
        assert_eq!(r.points, vec![vec![0.0]]);
    }

    #[test]
    fn bonferroni_threshold() {
        let s = RefinedSample {
            dimension: 2,
            points: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            log_funcs: vec![0.0, 0.0],
            source_verbose_length: 2,
            burnin_location: 0,
            rounds: Vec::new(),
        };
        let rep = convergence_check(&[&s, &s, &s], 0.01).unwrap();
        assert_eq!(rep.checks.len(), 6);
        assert!((rep.threshold - 0.01 / 6.0).abs() < 1e-18);
        assert!(rep.passed());
    }

    fn iid_chain(d: usize, n: usize, seed: u64) -> CompactChain {
        use crate::rng::{StreamRng, Variates};
        let mut rng = StreamRng::for_chain(seed, 0);
        let mut c = CompactChain::new(d);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
            let lf = -0.5 * x.iter().map(|v| v * v).sum::<f64>();
            c.append_or_increment(ChainRow::new(x, lf, 1)).unwrap();
        }
        c
    }

    #[test]
    fn iid_chain_keeps_nearly_everything() {
        for (d, seed) in [(1, 1), (4, 2), (4, 3)] {
            let c = iid_chain(d, 5000, seed);
            let r = refine_two_phase(&c).unwrap();
            assert!(r.rounds.len() <= 1, "{:?}", r.rounds);
            let kept = r.len() as f64 / (c.verbose_len() - r.burnin_location) as f64;
            assert!(r.rounds.is_empty() || kept >= 0.5);
        }
    }

    #[test]
    fn kept_counts_strictly_decrease() {
        // slow sine plus a little jitter: strongly autocorrelated
        let mut c = CompactChain::new(1);
        for i in 0..20_000 {
            let v = libm::sin(i as f64 / 300.0) + 1e-3 * libm::sin(i as f64 * 7.77);
            c.append_or_increment(ChainRow::new(vec![v], 0.0, 1)).unwrap();
        }
        let r = refine_two_phase(&c).unwrap();
        assert!(r.rounds.len() >= 2);
        assert!(r.rounds.windows(2).all(|w| w[1].kept_count < w[0].kept_count));
    }
}
