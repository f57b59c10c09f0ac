//! Drives a full simulation: restart detection, sampling in the requested
//! parallel mode, refinement, and the output suite.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use paradram_core::kernel::{Attempt, RunError, RunOutput, Sampler, SamplerOptions};
use paradram_core::model::{BuiltinTarget, TargetDensity};
use paradram_core::parallel::{forkjoin_output, ContributionTally, SpeedupReport, DEFAULT_EFFICIENCY_FLOOR};
use paradram_core::proposal::ProposalState;
use paradram_core::refine::{convergence_check, refine_two_phase, ConvergenceReport, RefinedSample, DEFAULT_KS_ALPHA};
use paradram_core::spec::{ParallelMode, SimulationSpec};
use rayon::prelude::*;

use crate::persist::{
    detect_incomplete, read_chain_prefix, restart_files, variable_names, write_sample, FileSink, OutputSuite,
    PersistError, RestartRecord, RunStatus,
};
use crate::report::{write_report, ChainReport, ReportInput, REPORT_MAX_WORKERS};

/// Called with `(chain, rows emitted)`; returning true aborts the run as if
/// the process had been killed. Used to exercise restarts.
pub type Interrupt = Arc<dyn Fn(u32, u64) -> bool + Send + Sync>;

#[derive(Clone, Default)]
pub struct RunControl {
    pub force_overwrite: bool,
    pub interrupt: Option<Interrupt>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunFailure {
    #[error("{0}")]
    Config(String),
    #[error("{0} holds a completed run; pass --force-overwrite to replace it")]
    RefuseOverwrite(String),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Sampler(#[from] paradram_core::Error),
}

impl RunFailure {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunFailure::Config(_) => 1,
            RunFailure::RefuseOverwrite(_) => 3,
            RunFailure::Persist(_) | RunFailure::Sampler(_) => 2,
        }
    }
}

impl From<RunError<PersistError>> for RunFailure {
    fn from(e: RunError<PersistError>) -> Self {
        match e {
            RunError::Sampler(e) => RunFailure::Sampler(e),
            RunError::Sink(e) => RunFailure::Persist(e),
        }
    }
}

#[derive(Debug)]
pub struct ChainResult {
    pub chain: u32,
    pub resumed: bool,
    pub run: Result<RunOutput, String>,
    pub refined: Result<RefinedSample, String>,
}

#[derive(Debug)]
pub struct SimulationResult {
    pub status_before: RunStatus,
    pub chains: Vec<ChainResult>,
    pub tally: Option<ContributionTally>,
    pub speedup: Option<SpeedupReport>,
    pub convergence: Option<ConvergenceReport>,
}

fn remove_if_present(path: &Path) -> Result<(), PersistError> {
    match fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(source) => Err(PersistError::Io { path: path.to_path_buf(), source }),
    }
}

/// Evaluates one fork-join round, consulting workers in rank order and
/// stopping at the first acceptance. Workers run in parallel batches; the
/// result does not depend on the batch size.
fn forkjoin_round<T: TargetDensity + Sync + ?Sized>(sampler: &Sampler<'_, T>, workers: u32) -> paradram_core::Result<Vec<Attempt>> {
    let batch = rayon::current_num_threads().max(1) as u32;
    let mut consulted = Vec::new();
    let mut next = 1u32;
    while next <= workers {
        let end = (next + batch - 1).min(workers);
        let attempts: Vec<paradram_core::Result<Attempt>> =
            (next..=end).into_par_iter().map(|r| sampler.attempt_for_round(r)).collect();
        for a in attempts {
            let a = a?;
            let done = a.accepted.is_some();
            consulted.push(a);
            if done {
                return Ok(consulted);
            }
        }
        next = end + 1;
    }
    Ok(consulted)
}

fn run_one(
    spec: &SimulationSpec,
    target: &BuiltinTarget,
    proposal: &ProposalState,
    suite: &OutputSuite,
    options: SamplerOptions,
    resume: bool,
    interrupt: Option<Interrupt>,
    chain_no: u32,
) -> Result<(RunOutput, bool), RunFailure> {
    let timed = !spec.deterministic_test_mode;
    let names = variable_names(spec.dimension());
    let restart_path = suite.restart_path();
    let (mut sampler, sink, resumed) = if resume && restart_path.exists() {
        let rec = RestartRecord::read(&restart_path)?;
        if rec.spec_digest != spec.digest() {
            return Err(PersistError::SpecMismatch(restart_path).into());
        }
        let resumed_suite = OutputSuite { format: rec.format, delimiter: rec.delimiter, ..suite.clone() };
        let emitted = read_chain_prefix(&resumed_suite.chain_path(), rec.chain_bytes)?;
        let n = emitted.len() as u64;
        let sampler = Sampler::resume(target, spec.kernel.clone(), options, &rec.snapshot, emitted.rows().to_vec())?;
        let sink = FileSink::resume(&resumed_suite, &rec, n, timed)?;
        (sampler, sink, true)
    } else {
        // a stale snapshot must never pair with a new chain file
        remove_if_present(&restart_path)?;
        let sampler = Sampler::new(target, spec.kernel.clone(), proposal.clone(), options)?;
        let sink = FileSink::create(suite, &names, spec.digest(), timed)?;
        (sampler, sink, false)
    };
    let hook = interrupt.map(|f| Box::new(move |rows: u64| f(chain_no, rows)) as crate::persist::InterruptHook);
    let mut sink = sink.with_interrupt(hook);
    let workers = options.workers;
    while !sampler.is_complete() {
        let consulted = if workers > 1 { forkjoin_round(&sampler, workers)? } else { sampler.consult()? };
        sampler.commit(&consulted, &mut sink)?;
    }
    let out = sampler.finish(&mut sink)?;
    sink.finish()?;
    Ok((out, resumed))
}

fn refine_output(run: &Result<RunOutput, String>) -> Result<RefinedSample, String> {
    match run {
        Ok(out) => refine_two_phase(&out.chain).map_err(|e| e.to_string()),
        Err(e) => Err(format!("chain failed: {e}")),
    }
}

fn write_sample_file(suite: &OutputSuite, spec: &SimulationSpec, refined: &Result<RefinedSample, String>) -> Result<(), PersistError> {
    let empty;
    let sample = match refined {
        Ok(r) => r,
        Err(_) => {
            empty = RefinedSample {
                dimension: spec.dimension(),
                points: Vec::new(),
                log_funcs: Vec::new(),
                source_verbose_length: 0,
                burnin_location: 0,
                rounds: Vec::new(),
            };
            &empty
        }
    };
    write_sample(&suite.sample_path(), suite.delimiter, &variable_names(spec.dimension()), sample)
}

/// Runs `spec`, resuming an interrupted run under the same prefix.
pub fn run_simulation(spec: &SimulationSpec, control: RunControl) -> Result<SimulationResult, RunFailure> {
    spec.validate().map_err(|e| RunFailure::Config(e.to_string()))?;
    let prefix = Path::new(&spec.output.prefix);
    let status = detect_incomplete(prefix)?;
    if status == RunStatus::Complete && !control.force_overwrite {
        return Err(RunFailure::RefuseOverwrite(spec.output.prefix.clone()));
    }
    if let Some(dir) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| PersistError::Io { path: dir.to_path_buf(), source })?;
    }
    let suite = OutputSuite::new(prefix, spec.output.format, spec.output.delimiter);
    let resume = status == RunStatus::Restartable && !control.force_overwrite;
    if !resume {
        for p in restart_files(prefix)? {
            remove_if_present(&p)?;
        }
        remove_if_present(&suite.report_path())?;
    }
    let target = spec.build_target()?;
    let proposal = spec.build_proposal()?;
    let started = Instant::now();

    let mut chains = Vec::new();
    let mut tally = None;
    let mut speedup = None;
    let mut speedup_source = "acceptance-rate";
    match spec.parallel {
        ParallelMode::Serial | ParallelMode::ForkJoin(_) => {
            let options = match spec.parallel {
                ParallelMode::ForkJoin(p) => SamplerOptions::fork_join(p),
                _ => SamplerOptions::serial(),
            };
            let (out, resumed) = run_one(spec, &target, &proposal, &suite, options, resume, control.interrupt.clone(), 1)?;
            if let ParallelMode::ForkJoin(_) = spec.parallel {
                let fj = forkjoin_output(out)?;
                if let Some(mut s) = fj.speedup {
                    s = SpeedupReport::from_probability(s.fitted_p, REPORT_MAX_WORKERS, DEFAULT_EFFICIENCY_FLOOR);
                    speedup = Some(s);
                    speedup_source = "tally";
                }
                tally = Some(fj.tally);
                let run = Ok(fj.run);
                let refined = refine_output(&run);
                chains.push(ChainResult { chain: 1, resumed, run, refined });
            } else {
                let run = Ok(out);
                let refined = refine_output(&run);
                chains.push(ChainResult { chain: 1, resumed, run, refined });
            }
        }
        ParallelMode::MultiChain(n) => {
            let results: Vec<Result<(RunOutput, bool), RunFailure>> = std::thread::scope(|scope| {
                let handles: Vec<_> = (0..n)
                    .map(|i| {
                        let (target, proposal, interrupt) = (&target, &proposal, control.interrupt.clone());
                        let sub = suite.process(i + 1);
                        scope.spawn(move || {
                            run_one(spec, target, proposal, &sub, SamplerOptions::chain(u64::from(i)), resume, interrupt, i + 1)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(RunFailure::Config("chain thread panicked".into())))).collect()
            });
            for (i, r) in results.into_iter().enumerate() {
                let (run, resumed) = match r {
                    Ok((out, resumed)) => (Ok(out), resumed),
                    // an interruption stops the whole run; other failures are recorded
                    Err(RunFailure::Persist(PersistError::Interrupted)) => return Err(PersistError::Interrupted.into()),
                    Err(e) => (Err(e.to_string()), false),
                };
                let refined = refine_output(&run);
                chains.push(ChainResult { chain: i as u32 + 1, resumed, run, refined });
            }
        }
    }

    if speedup.is_none() {
        let rates: Vec<f64> = chains.iter().filter_map(|c| c.run.as_ref().ok()).map(|r| r.summary.mean_acceptance_rate).collect();
        if !rates.is_empty() {
            let p = (rates.iter().sum::<f64>() / rates.len() as f64).clamp(f64::MIN_POSITIVE, 1.0);
            speedup = Some(SpeedupReport::from_probability(p, REPORT_MAX_WORKERS, DEFAULT_EFFICIENCY_FLOOR));
        }
    }
    let convergence = {
        let ok: Vec<&RefinedSample> = chains.iter().filter_map(|c| c.refined.as_ref().ok()).collect();
        if matches!(spec.parallel, ParallelMode::MultiChain(_)) && ok.len() >= 2 {
            convergence_check(&ok, DEFAULT_KS_ALPHA).ok()
        } else {
            None
        }
    };

    for c in &chains {
        let s = if matches!(spec.parallel, ParallelMode::MultiChain(_)) { suite.process(c.chain) } else { suite.clone() };
        write_sample_file(&s, spec, &c.refined)?;
    }
    let wall = (!spec.deterministic_test_mode).then(|| started.elapsed().as_secs_f64());
    let input = ReportInput {
        spec,
        chains: chains
            .iter()
            .map(|c| ChainReport {
                chain: c.chain,
                summary: c.run.as_ref().map(|r| &r.summary).map_err(Clone::clone),
                compact_length: c.run.as_ref().map_or(0, |r| r.chain.len() as u64),
                refined: c.refined.as_ref().map_err(Clone::clone),
            })
            .collect(),
        tally: tally.as_ref(),
        speedup_source,
        speedup: speedup.as_ref(),
        convergence: convergence.as_ref(),
        wall_seconds: wall,
    };
    write_report(&suite.report_path(), &input)?;
    Ok(SimulationResult { status_before: status, chains, tally, speedup, convergence })
}
