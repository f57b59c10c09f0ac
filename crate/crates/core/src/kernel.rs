//! The delayed-rejection adaptive Metropolis loop.
//!
//! One iteration ("round") proposes from the incumbent state at stage 0 and,
//! on rejection, cascades through the delayed-rejection stages. Every stage
//! proposal is centered at the incumbent with a shrinking scale and consumes
//! exactly `d` normals plus one uniform. A rejected cascade increments the
//! incumbent's weight.
//!
//! [`Sampler`] owns the whole run state, so it can be snapshotted between
//! rounds and resumed bit for bit. Randomness comes either from one
//! continuous stream per chain, or from a fresh stream per `(round, rank)`;
//! the latter is what fork-join workers use and makes every round a pure
//! function of the incumbent state.

use alloc::vec;
use alloc::vec::Vec;

use crate::chain::{ChainRow, CompactChain, WeightedMoments};
use crate::codec::{ByteReader, ByteWriter};
use crate::model::{log_density, TargetDensity};
use crate::proposal::ProposalState;
use crate::rng::{StreamRng, Variates};
use crate::{Error, Result};

/// Upper bound on delayed-rejection stages; the stage-k acceptance ratio
/// costs `O(3^k)` kernel evaluations.
pub const MAX_DR_STAGES: u32 = 8;

/// Rows between forced flush points.
pub const FLUSH_ROWS: u64 = 1000;

/// Verbose states between progress ticks.
pub const PROGRESS_PERIOD: u64 = 1000;

const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    /// Number of unique (compact) states to collect.
    pub chain_length_target: u64,
    pub dr_stage_count: u32,
    /// Unique states between adaptations.
    pub adaptation_period: u64,
    /// Initial adaptations that use accepted states only.
    pub greedy_adaptation_count: u64,
    pub start_point: Vec<f64>,
    pub rng_seed: u64,
}

pub fn default_adaptation_period(dimension: usize) -> u64 {
    (10 * dimension as u64).max(100)
}

impl KernelConfig {
    pub fn new(start_point: Vec<f64>, rng_seed: u64) -> Self {
        Self {
            chain_length_target: 10_000,
            dr_stage_count: 1,
            adaptation_period: default_adaptation_period(start_point.len()),
            greedy_adaptation_count: 4,
            start_point,
            rng_seed,
        }
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        if self.chain_length_target < 1 {
            return Err(Error::InvalidConfig("chain length target must be at least 1".into()));
        }
        if self.adaptation_period < 1 {
            return Err(Error::InvalidConfig("adaptation period must be at least 1".into()));
        }
        if self.dr_stage_count > MAX_DR_STAGES {
            return Err(Error::InvalidConfig("too many delayed-rejection stages".into()));
        }
        if self.start_point.len() != dimension {
            return Err(Error::DimensionMismatch { expected: dimension, found: self.start_point.len() });
        }
        if self.start_point.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("start point must be finite".into()));
        }
        Ok(())
    }
}

/// Standard Metropolis rule for a symmetric proposal.
pub fn mh_accept_stage0(log_current: f64, log_candidate: f64, u: f64) -> bool {
    libm::log(u) < log_candidate - log_current
}

/// Second-stage delayed-rejection rule.
///
/// `alpha_y2_y1` and `alpha_x_y1` are stage-0 acceptance probabilities;
/// `log_q_ratio` is `ln q0(y2 -> y1) - ln q0(x -> y1)`. Both stage proposals
/// are centered at the current state, so the stage-1 kernels cancel but the
/// stage-0 kernels do not.
pub fn dr_accept_stage1(
    log_x: f64,
    log_y2: f64,
    alpha_y2_y1: f64,
    alpha_x_y1: f64,
    log_q_ratio: f64,
    u: f64,
) -> Result<bool> {
    for a in [alpha_y2_y1, alpha_x_y1] {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidAlpha(a));
        }
    }
    let num = log_y2 + libm::log1p(-alpha_y2_y1);
    let den = log_x + libm::log1p(-alpha_x_y1);
    Ok(libm::log(u) < num - den + log_q_ratio)
}

/// `ln(1 - e^a)` for `a <= 0`.
fn log1m_exp(a: f64) -> f64 {
    if a > -core::f64::consts::LN_2 {
        libm::log(-libm::expm1(a))
    } else {
        libm::log1p(-libm::exp(a))
    }
}

/// Points visited by one delayed-rejection cascade: `points[0]` is the
/// incumbent, `points[k]` the stage `k - 1` candidate.
struct Cascade<'a> {
    proposal: &'a ProposalState,
    points: &'a [Vec<f64>],
    log_f: &'a [f64],
}

impl Cascade<'_> {
    /// Log acceptance probability of the last point of `path`, given every
    /// intermediate point was rejected from `path[0]`.
    fn log_alpha(&self, path: &[usize]) -> Result<f64> {
        let i = path.len() - 1;
        let (first, last) = (path[0], path[i]);
        let lf_last = self.log_f[last];
        if lf_last == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let mut num = lf_last;
        let mut den = self.log_f[first];
        let mut rev = Vec::with_capacity(i + 1);
        for j in 1..i {
            rev.clear();
            rev.extend((i - j..=i).rev().map(|k| path[k]));
            num += self.proposal.log_kernel(j - 1, &self.points[last], &self.points[path[i - j]])?;
            num += log1m_exp(self.log_alpha(&rev)?);
            den += self.proposal.log_kernel(j - 1, &self.points[first], &self.points[path[j]])?;
            den += log1m_exp(self.log_alpha(&path[..=j])?);
        }
        let r = num - den;
        Ok(if r.is_nan() { f64::NEG_INFINITY } else { r.min(0.0) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Accepted {
    pub stage: u32,
    pub state: Vec<f64>,
    pub log_func: f64,
}

/// Outcome of one worker's full proposal cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub rank: u32,
    pub stages_tried: u32,
    pub accepted: Option<Accepted>,
}

/// Runs one cascade from `(incumbent, log_incumbent)`.
pub fn attempt_cascade<T, R>(
    target: &T,
    proposal: &ProposalState,
    incumbent: &[f64],
    log_incumbent: f64,
    dr_stages: u32,
    rank: u32,
    rng: &mut R,
) -> Result<Attempt>
where
    T: TargetDensity + ?Sized,
    R: Variates + ?Sized,
{
    let d = incumbent.len();
    let mut points = Vec::with_capacity(dr_stages as usize + 2);
    points.push(incumbent.to_vec());
    let mut log_f = Vec::with_capacity(dr_stages as usize + 2);
    log_f.push(log_incumbent);
    let mut path: Vec<usize> = vec![0];
    for stage in 0..=dr_stages {
        let mut y = vec![0.0; d];
        proposal.sample_candidate(incumbent, stage as usize, rng, &mut y)?;
        let u = rng.open01();
        let ly = log_density(target, &y)?;
        points.push(y);
        log_f.push(ly);
        path.push(points.len() - 1);
        let la = Cascade { proposal, points: &points, log_f: &log_f }.log_alpha(&path)?;
        if libm::log(u) < la {
            let state = points.pop().unwrap_or_default();
            return Ok(Attempt {
                rank,
                stages_tried: stage + 1,
                accepted: Some(Accepted { stage, state, log_func: ly }),
            });
        }
    }
    Ok(Attempt { rank, stages_tried: dr_stages + 1, accepted: None })
}

/// Smallest verbose index whose log-density is within `dimension / 2` of the
/// series maximum. `series` holds `(log_func, weight)` pairs.
pub fn burnin_location(series: &[(f64, u64)], dimension: usize) -> u64 {
    let max = series.iter().fold(f64::NEG_INFINITY, |m, (l, _)| m.max(*l));
    let threshold = max - dimension as f64 / 2.0;
    let mut offset = 0;
    for &(l, w) in series {
        if l >= threshold {
            return offset;
        }
        offset += w;
    }
    offset
}

/// Incremental form of [`burnin_location`] over a growing compact chain.
#[derive(Debug, Clone, PartialEq)]
pub struct BurninTracker {
    gap: f64,
    max_log_func: f64,
    cursor_row: u64,
    cursor_offset: u64,
}

impl BurninTracker {
    pub fn new(dimension: usize) -> Self {
        Self { gap: dimension as f64 / 2.0, max_log_func: f64::NEG_INFINITY, cursor_row: 0, cursor_offset: 0 }
    }

    /// Call after appending a row; only the last row can raise the maximum.
    pub fn observe(&mut self, rows: &[ChainRow]) {
        let Some(last) = rows.last() else { return };
        if last.log_func <= self.max_log_func {
            return;
        }
        self.max_log_func = last.log_func;
        let threshold = self.max_log_func - self.gap;
        while (self.cursor_row as usize) < rows.len() - 1 && rows[self.cursor_row as usize].log_func < threshold {
            self.cursor_offset += rows[self.cursor_row as usize].weight;
            self.cursor_row += 1;
        }
    }

    pub fn location(&self) -> u64 {
        self.cursor_offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamConvention {
    /// One continuous stream per chain, stored in restart files.
    Continuous,
    /// A fresh stream per `(round, rank)`.
    PerRound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerOptions {
    pub convention: StreamConvention,
    pub workers: u32,
    /// Selects the chain's streams; process ids are `chain_index + rank`.
    pub chain_index: u64,
}

impl SamplerOptions {
    pub fn serial() -> Self {
        Self { convention: StreamConvention::Continuous, workers: 1, chain_index: 0 }
    }

    pub fn fork_join(workers: u32) -> Self {
        Self { convention: StreamConvention::PerRound, workers, chain_index: 0 }
    }

    pub fn chain(chain_index: u64) -> Self {
        Self { convention: StreamConvention::Continuous, workers: 1, chain_index }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Streams {
    Continuous(StreamRng),
    PerRound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationEvent {
    pub verbose_index: u64,
    pub compact_index: u64,
    pub measure: f64,
    /// Effective stage-0 proposal covariance after the adaptation, row-major.
    pub covariance: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressTick {
    pub verbose_length: u64,
    pub compact_length: u64,
    pub mean_acceptance_rate: f64,
    pub last_adaptation_measure: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageStats {
    pub tried: u64,
    pub accepted: u64,
}

impl StageStats {
    pub fn rate(&self) -> f64 {
        if self.tried == 0 {
            0.0
        } else {
            self.accepted as f64 / self.tried as f64
        }
    }
}

/// Receives finalized chain rows as the sampler produces them.
pub trait ChainSink {
    type Error;

    fn push_row(&mut self, row: &ChainRow) -> core::result::Result<(), Self::Error>;

    /// Called after every adaptation and every [`FLUSH_ROWS`] emitted rows,
    /// between rounds. Persistent sinks flush and snapshot here.
    fn flush_point(&mut self, _sampler: &SamplerCore) -> core::result::Result<(), Self::Error> {
        Ok(())
    }

    fn progress(&mut self, _tick: &ProgressTick) -> core::result::Result<(), Self::Error> {
        Ok(())
    }
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl ChainSink for NullSink {
    type Error = core::convert::Infallible;
    fn push_row(&mut self, _row: &ChainRow) -> core::result::Result<(), Self::Error> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunError<E> {
    Sampler(Error),
    Sink(E),
}

impl<E> From<Error> for RunError<E> {
    fn from(e: Error) -> Self {
        RunError::Sampler(e)
    }
}

impl<E: core::fmt::Display> core::fmt::Display for RunError<E> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RunError::Sampler(e) => write!(f, "{e}"),
            RunError::Sink(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSummary {
    pub verbose_length: u64,
    pub compact_length: u64,
    pub rounds: u64,
    /// Accepted proposals over proposals consulted, counting the start point.
    pub mean_acceptance_rate: f64,
    pub stage_stats: Vec<StageStats>,
    pub final_proposal: ProposalState,
    pub burnin_location: u64,
    pub adaptations: Vec<AdaptationEvent>,
    /// Accepted states credited per worker rank.
    pub tally: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub chain: CompactChain,
    pub summary: KernelSummary,
}

/// Everything a run mutates, apart from the target.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerCore {
    config: KernelConfig,
    options: SamplerOptions,
    proposal: ProposalState,
    streams: Streams,
    chain: CompactChain,
    round: u64,
    attempts: u64,
    accepted: u64,
    stages: Vec<StageStats>,
    moments_all: WeightedMoments,
    moments_unique: WeightedMoments,
    pending_measure: f64,
    last_measure: f64,
    adaptations: Vec<AdaptationEvent>,
    burnin: BurninTracker,
    rows_emitted: u64,
    tally: Vec<u64>,
}

impl SamplerCore {
    pub fn chain(&self) -> &CompactChain {
        &self.chain
    }

    pub fn proposal(&self) -> &ProposalState {
        &self.proposal
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn options(&self) -> SamplerOptions {
        self.options
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn rows_emitted(&self) -> u64 {
        self.rows_emitted
    }

    pub fn verbose_len(&self) -> u64 {
        self.round + 1
    }

    pub fn adaptations(&self) -> &[AdaptationEvent] {
        &self.adaptations
    }

    pub fn mean_acceptance_rate(&self) -> f64 {
        (self.accepted + 1) as f64 / (self.attempts + 1) as f64
    }

    pub fn is_complete(&self) -> bool {
        self.chain.len() as u64 >= self.config.chain_length_target
    }

    fn summary(&self) -> KernelSummary {
        KernelSummary {
            verbose_length: self.verbose_len(),
            compact_length: self.chain.len() as u64,
            rounds: self.round,
            mean_acceptance_rate: self.mean_acceptance_rate(),
            stage_stats: self.stages.clone(),
            final_proposal: self.proposal.clone(),
            burnin_location: self.burnin.location(),
            adaptations: self.adaptations.clone(),
            tally: self.tally.clone(),
        }
    }

    /// Serializes the run state. Rows already emitted to the sink are not
    /// included; they are restored from the chain file.
    pub fn encode_snapshot(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.u32(SNAPSHOT_VERSION);
        w.u64(self.chain.dimension() as u64);
        w.u8(match self.options.convention {
            StreamConvention::Continuous => 0,
            StreamConvention::PerRound => 1,
        });
        w.u32(self.options.workers);
        w.u64(self.options.chain_index);
        self.proposal.encode(&mut w);
        match &self.streams {
            Streams::Continuous(rng) => w.bytes(&rng.to_bytes()),
            Streams::PerRound => w.bytes(&[]),
        }
        w.u64(self.round);
        w.u64(self.attempts);
        w.u64(self.accepted);
        w.u64(self.stages.len() as u64);
        for s in &self.stages {
            w.u64(s.tried);
            w.u64(s.accepted);
        }
        self.moments_all.encode(&mut w);
        self.moments_unique.encode(&mut w);
        w.f64(self.pending_measure);
        w.f64(self.last_measure);
        w.u64(self.adaptations.len() as u64);
        for a in &self.adaptations {
            w.u64(a.verbose_index);
            w.u64(a.compact_index);
            w.f64(a.measure);
            w.f64s(&a.covariance);
        }
        w.f64(self.burnin.gap);
        w.f64(self.burnin.max_log_func);
        w.u64(self.burnin.cursor_row);
        w.u64(self.burnin.cursor_offset);
        w.u64(self.rows_emitted);
        w.u64s(&self.tally);
        let pending = &self.chain.rows()[self.rows_emitted as usize..];
        w.u64(pending.len() as u64);
        for r in pending {
            r.encode(&mut w);
        }
        w.into_inner()
    }
}

pub struct Sampler<'t, T: ?Sized> {
    target: &'t T,
    core: SamplerCore,
}

impl<'t, T: TargetDensity + ?Sized> Sampler<'t, T> {
    pub fn new(target: &'t T, config: KernelConfig, proposal: ProposalState, options: SamplerOptions) -> Result<Self> {
        let d = target.dimension();
        config.validate(d)?;
        if proposal.dimension() != d {
            return Err(Error::DimensionMismatch { expected: d, found: proposal.dimension() });
        }
        if proposal.dr_scales().len() < config.dr_stage_count as usize {
            return Err(Error::InvalidConfig("proposal has fewer delayed-rejection scales than stages".into()));
        }
        if options.workers < 1 {
            return Err(Error::InvalidConfig("worker count must be at least 1".into()));
        }
        let streams = match options.convention {
            StreamConvention::Continuous if options.workers != 1 => {
                return Err(Error::InvalidConfig("continuous streams need exactly one worker".into()))
            }
            StreamConvention::Continuous => Streams::Continuous(StreamRng::for_chain(config.rng_seed, options.chain_index)),
            StreamConvention::PerRound => Streams::PerRound,
        };
        let start = config.start_point.clone();
        let log_start = log_density(target, &start)?;
        if !log_start.is_finite() {
            return Err(Error::NonFiniteStart);
        }
        let mut chain = CompactChain::new(d);
        let mut first = ChainRow::new(start.clone(), log_start, 1);
        first.process_id = (options.chain_index + 1) as u32;
        chain.append_or_increment(first)?;
        let mut burnin = BurninTracker::new(d);
        burnin.observe(chain.rows());
        let mut moments_all = WeightedMoments::new(d);
        moments_all.add(&start, 1.0);
        let moments_unique = moments_all.clone();
        let stages = vec![StageStats::default(); config.dr_stage_count as usize + 1];
        let tally = vec![0; options.workers as usize];
        Ok(Self {
            target,
            core: SamplerCore {
                config,
                options,
                proposal,
                streams,
                chain,
                round: 0,
                attempts: 0,
                accepted: 0,
                stages,
                moments_all,
                moments_unique,
                pending_measure: 0.0,
                last_measure: 0.0,
                adaptations: Vec::new(),
                burnin,
                rows_emitted: 0,
                tally,
            },
        })
    }

    /// Rebuilds a sampler from [`SamplerCore::encode_snapshot`] output and the
    /// rows that had been emitted when the snapshot was taken.
    pub fn resume(
        target: &'t T,
        config: KernelConfig,
        options: SamplerOptions,
        snapshot: &[u8],
        emitted: Vec<ChainRow>,
    ) -> Result<Self> {
        let d = target.dimension();
        config.validate(d)?;
        let mut r = ByteReader::new(snapshot);
        if r.u32()? != SNAPSHOT_VERSION {
            return Err(Error::Decode("unsupported snapshot version"));
        }
        if r.u64()? as usize != d {
            return Err(Error::Decode("snapshot dimension differs from target"));
        }
        let convention = match r.u8()? {
            0 => StreamConvention::Continuous,
            1 => StreamConvention::PerRound,
            _ => return Err(Error::Decode("stream convention")),
        };
        let stored = SamplerOptions { convention, workers: r.u32()?, chain_index: r.u64()? };
        if stored != options {
            return Err(Error::Decode("snapshot was taken with different sampler options"));
        }
        let proposal = ProposalState::decode(&mut r)?;
        let rng_bytes = r.bytes()?;
        let streams = match convention {
            StreamConvention::Continuous => Streams::Continuous(StreamRng::from_bytes(rng_bytes)?),
            StreamConvention::PerRound => Streams::PerRound,
        };
        let round = r.u64()?;
        let attempts = r.u64()?;
        let accepted = r.u64()?;
        let n_stages = r.u64()? as usize;
        if n_stages != config.dr_stage_count as usize + 1 {
            return Err(Error::Decode("stage count differs from configuration"));
        }
        let mut stages = Vec::with_capacity(n_stages);
        for _ in 0..n_stages {
            stages.push(StageStats { tried: r.u64()?, accepted: r.u64()? });
        }
        let moments_all = WeightedMoments::decode(&mut r)?;
        let moments_unique = WeightedMoments::decode(&mut r)?;
        let pending_measure = r.f64()?;
        let last_measure = r.f64()?;
        let n_adapt = r.u64()?;
        let mut adaptations = Vec::new();
        for _ in 0..n_adapt {
            adaptations.push(AdaptationEvent {
                verbose_index: r.u64()?,
                compact_index: r.u64()?,
                measure: r.f64()?,
                covariance: r.f64s()?,
            });
        }
        let burnin = BurninTracker { gap: r.f64()?, max_log_func: r.f64()?, cursor_row: r.u64()?, cursor_offset: r.u64()? };
        let rows_emitted = r.u64()?;
        let tally = r.u64s()?;
        if emitted.len() as u64 != rows_emitted {
            return Err(Error::Decode("emitted row count differs from snapshot"));
        }
        let mut chain = CompactChain::new(d);
        for row in emitted {
            chain.push_unchecked(row)?;
        }
        let n_pending = r.u64()?;
        for _ in 0..n_pending {
            chain.push_unchecked(ChainRow::decode(&mut r)?)?;
        }
        if !r.is_empty() || chain.is_empty() {
            return Err(Error::Decode("trailing or missing snapshot data"));
        }
        Ok(Self {
            target,
            core: SamplerCore {
                config,
                options,
                proposal,
                streams,
                chain,
                round,
                attempts,
                accepted,
                stages,
                moments_all,
                moments_unique,
                pending_measure,
                last_measure,
                adaptations,
                burnin,
                rows_emitted,
                tally,
            },
        })
    }

    pub fn core(&self) -> &SamplerCore {
        &self.core
    }

    pub fn target(&self) -> &'t T {
        self.target
    }

    pub fn is_complete(&self) -> bool {
        self.core.is_complete()
    }

    /// Cascade of worker `rank` for the current round. Per-round streams only.
    pub fn attempt_for_round(&self, rank: u32) -> Result<Attempt> {
        let c = &self.core;
        if c.streams != Streams::PerRound {
            return Err(Error::InvalidConfig("per-round attempts need the per-round stream convention".into()));
        }
        let mut rng = StreamRng::for_round(c.config.rng_seed, c.options.chain_index, c.round, rank);
        let inc = c.chain.last().ok_or(Error::EmptyRange)?;
        attempt_cascade(self.target, &c.proposal, &inc.state, inc.log_func, c.config.dr_stage_count, rank, &mut rng)
    }

    /// Consults workers in rank order until one accepts.
    pub fn consult(&mut self) -> Result<Vec<Attempt>> {
        if self.core.streams == Streams::PerRound {
            let mut out = Vec::new();
            for rank in 1..=self.core.options.workers {
                let a = self.attempt_for_round(rank)?;
                let done = a.accepted.is_some();
                out.push(a);
                if done {
                    break;
                }
            }
            return Ok(out);
        }
        let c = &mut self.core;
        let inc = c.chain.last().ok_or(Error::EmptyRange)?;
        let Streams::Continuous(rng) = &mut c.streams else { unreachable!() };
        let a = attempt_cascade(self.target, &c.proposal, &inc.state, inc.log_func, c.config.dr_stage_count, 1, rng)?;
        Ok(vec![a])
    }

    /// Applies one round. `consulted` holds the attempts in rank order; only
    /// the last may be accepted.
    pub fn commit<S: ChainSink>(&mut self, consulted: &[Attempt], sink: &mut S) -> core::result::Result<(), RunError<S::Error>> {
        let c = &mut self.core;
        c.round += 1;
        c.attempts += consulted.len() as u64;
        for a in consulted {
            for s in 0..a.stages_tried as usize {
                c.stages[s].tried += 1;
            }
        }
        let mut appended = false;
        match consulted.last().and_then(|a| a.accepted.as_ref().map(|acc| (a.rank, acc))) {
            Some((rank, acc)) => {
                c.accepted += 1;
                c.stages[acc.stage as usize].accepted += 1;
                c.tally[rank as usize - 1] += 1;
                let row = ChainRow {
                    process_id: (c.options.chain_index + u64::from(rank)) as u32,
                    dr_stage: acc.stage,
                    mean_acceptance_rate: 0.0,
                    adaptation_measure: c.pending_measure,
                    burnin_location: 0,
                    weight: 1,
                    log_func: acc.log_func,
                    state: acc.state.clone(),
                };
                appended = c.chain.append_or_increment(row)?;
                if appended {
                    c.pending_measure = 0.0;
                    let prev = &c.chain.rows()[c.chain.len() - 2];
                    sink.push_row(prev).map_err(RunError::Sink)?;
                    c.rows_emitted += 1;
                    c.burnin.observe(c.chain.rows());
                    c.moments_unique.add(&acc.state, 1.0);
                }
            }
            None => {
                if let Some(last) = c.chain.last_mut() {
                    last.weight += 1;
                }
            }
        }
        let mar = c.mean_acceptance_rate();
        let burnin = c.burnin.location();
        let last = c.chain.last_mut().ok_or(Error::EmptyRange)?;
        last.mean_acceptance_rate = mar;
        last.burnin_location = burnin;
        c.moments_all.add(&last.state, 1.0);

        let mut flush = false;
        if appended && c.chain.len() as u64 % c.config.adaptation_period == 0 {
            self.adapt()?;
            flush = true;
        }
        let c = &mut self.core;
        if appended && c.rows_emitted % FLUSH_ROWS == 0 {
            flush = true;
        }
        if c.verbose_len() % PROGRESS_PERIOD == 0 {
            let tick = ProgressTick {
                verbose_length: c.verbose_len(),
                compact_length: c.chain.len() as u64,
                mean_acceptance_rate: mar,
                last_adaptation_measure: c.last_measure,
            };
            sink.progress(&tick).map_err(RunError::Sink)?;
        }
        if flush {
            sink.flush_point(&self.core).map_err(RunError::Sink)?;
        }
        Ok(())
    }

    fn adapt(&mut self) -> Result<()> {
        let c = &mut self.core;
        let (cov, n) = if (c.adaptations.len() as u64) < c.config.greedy_adaptation_count {
            (c.moments_unique.covariance(), c.moments_unique.total_weight() as u64)
        } else {
            (c.moments_all.covariance(), c.moments_all.total_weight() as u64)
        };
        let (next, record) = c.proposal.adapt(&cov, n)?;
        if next.adaptation_count() == c.proposal.adaptation_count() {
            return Ok(());
        }
        c.proposal = next;
        c.pending_measure = record.measure;
        c.last_measure = record.measure;
        c.adaptations.push(AdaptationEvent {
            verbose_index: c.verbose_len() - 1,
            compact_index: c.chain.len() as u64 - 1,
            measure: record.measure,
            covariance: c.proposal.effective_covariance().as_slice().to_vec(),
        });
        Ok(())
    }

    pub fn step<S: ChainSink>(&mut self, sink: &mut S) -> core::result::Result<(), RunError<S::Error>> {
        let consulted = self.consult()?;
        self.commit(&consulted, sink)
    }

    /// Emits the pending row and returns the chain.
    pub fn finish<S: ChainSink>(mut self, sink: &mut S) -> core::result::Result<RunOutput, RunError<S::Error>> {
        let c = &mut self.core;
        for row in &c.chain.rows()[c.rows_emitted as usize..] {
            sink.push_row(row).map_err(RunError::Sink)?;
        }
        c.rows_emitted = c.chain.len() as u64;
        let summary = c.summary();
        Ok(RunOutput { chain: self.core.chain, summary })
    }

    pub fn run<S: ChainSink>(mut self, sink: &mut S) -> core::result::Result<RunOutput, RunError<S::Error>> {
        while !self.is_complete() {
            self.step(sink)?;
        }
        self.finish(sink)
    }
}

/// Serial run with the chain-0 continuous stream.
pub fn run_kernel<T, S>(
    target: &T,
    config: KernelConfig,
    proposal: ProposalState,
    sink: &mut S,
) -> core::result::Result<RunOutput, RunError<S::Error>>
where
    T: TargetDensity + ?Sized,
    S: ChainSink,
{
    Sampler::new(target, config, proposal, SamplerOptions::serial())?.run(sink)
}
