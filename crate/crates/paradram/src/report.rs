//! The human-readable report file and the tables read back from it.
//!
//! Sections start with a `[name]` line and hold either `key = value` lines
//! or a comma-separated table with a header row. The file ends with
//! [`REPORT_TERMINATOR`]; a report without it belongs to an unfinished run.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use paradram_core::kernel::KernelSummary;
use paradram_core::parallel::{truncated_geometric_pmf, ContributionTally, SpeedupReport};
use paradram_core::refine::{ConvergenceReport, RefinedSample};
use paradram_core::spec::SimulationSpec;

use crate::config::spec_entries;
use crate::format::g17;
use crate::persist::{write_atomic, PersistError, REPORT_TERMINATOR};

/// Largest worker count in the report's speedup table.
pub const REPORT_MAX_WORKERS: u32 = 4096;

/// Outcome of one chain as shown in the report.
pub struct ChainReport<'a> {
    pub chain: u32,
    pub summary: Result<&'a KernelSummary, String>,
    pub compact_length: u64,
    pub refined: Result<&'a RefinedSample, String>,
}

pub struct ReportInput<'a> {
    pub spec: &'a SimulationSpec,
    pub chains: Vec<ChainReport<'a>>,
    pub tally: Option<&'a ContributionTally>,
    /// Where the speedup fit came from: `tally` or `acceptance-rate`.
    pub speedup_source: &'static str,
    pub speedup: Option<&'a SpeedupReport>,
    pub convergence: Option<&'a ConvergenceReport>,
    pub wall_seconds: Option<f64>,
}

pub fn render_report(input: &ReportInput<'_>) -> String {
    let mut s = String::new();
    let spec = input.spec;
    let _ = writeln!(s, "# paradram simulation report");
    let _ = writeln!(s, "[specification]");
    for (k, v, d) in spec_entries(spec) {
        let _ = writeln!(s, "{k} = {v}   # {d}");
    }

    let _ = writeln!(s, "[chains]");
    let _ = writeln!(
        s,
        "chain,status,verboseLength,compactLength,compressionFactor,meanAcceptanceRate,burninLocation,adaptations,lastAdaptationMeasure"
    );
    for c in &input.chains {
        match &c.summary {
            Ok(sum) => {
                let last = sum.adaptations.last().map_or(0.0, |a| a.measure);
                let _ = writeln!(
                    s,
                    "{},ok,{},{},{},{},{},{},{}",
                    c.chain,
                    sum.verbose_length,
                    sum.compact_length,
                    g17(sum.verbose_length as f64 / sum.compact_length as f64),
                    g17(sum.mean_acceptance_rate),
                    sum.burnin_location,
                    sum.adaptations.len(),
                    g17(last)
                );
            }
            Err(e) => {
                let _ = writeln!(s, "{},failed: {},,,,,,,", c.chain, e.replace(',', ";"));
            }
        }
    }
    if let Some(t) = input.wall_seconds {
        let _ = writeln!(s, "[timing]");
        let _ = writeln!(s, "wallSeconds = {t:.3}");
    }

    let _ = writeln!(s, "[acceptance]");
    let _ = writeln!(s, "chain,stage,tried,accepted,rate");
    for c in &input.chains {
        if let Ok(sum) = &c.summary {
            for (k, st) in sum.stage_stats.iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{},{}", c.chain, k, st.tried, st.accepted, g17(st.rate()));
            }
        }
    }

    let _ = writeln!(s, "[adaptation]");
    let _ = writeln!(s, "chain,adaptationIndex,verboseIndex,compactIndex,measure");
    for c in &input.chains {
        if let Ok(sum) = &c.summary {
            for (i, a) in sum.adaptations.iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{},{}", c.chain, i + 1, a.verbose_index, a.compact_index, g17(a.measure));
            }
        }
    }

    let _ = writeln!(s, "[covariance]");
    let _ = writeln!(s, "chain,adaptationIndex,i,j,value");
    let d = spec.dimension();
    for c in &input.chains {
        if let Ok(sum) = &c.summary {
            for (k, a) in sum.adaptations.iter().enumerate() {
                for i in 0..d {
                    for j in 0..d {
                        let _ = writeln!(s, "{},{},{},{},{}", c.chain, k + 1, i, j, g17(a.covariance[i * d + j]));
                    }
                }
            }
        }
    }

    let _ = writeln!(s, "[sample]");
    let _ = writeln!(s, "chain,status,burninLocation,points");
    for c in &input.chains {
        match &c.refined {
            Ok(r) => {
                let _ = writeln!(s, "{},ok,{},{}", c.chain, r.burnin_location, r.len());
            }
            Err(e) => {
                let _ = writeln!(s, "{},failed: {},,0", c.chain, e.replace(',', ";"));
            }
        }
    }
    let _ = writeln!(s, "[refinement]");
    let _ = writeln!(s, "chain,round,phase,iacAggregate,keptCount");
    for c in &input.chains {
        if let Ok(r) = &c.refined {
            for (i, round) in r.rounds.iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{},{}", c.chain, i + 1, round.phase, g17(round.iac_aggregate), round.kept_count);
            }
        }
    }

    if let Some(t) = input.tally {
        let p = input.speedup.map(|r| r.fitted_p);
        let pmf = p.map(|p| truncated_geometric_pmf(p, t.worker_count()));
        let _ = writeln!(s, "[contributions]");
        let _ = writeln!(s, "rank,count,fittedProbability");
        for (r, c) in t.counts.iter().enumerate() {
            let fitted = pmf.as_ref().map(|v| g17(v[r])).unwrap_or_default();
            let _ = writeln!(s, "{},{},{}", r + 1, c, fitted);
        }
    }

    let _ = writeln!(s, "[speedup]");
    let _ = writeln!(s, "mode = {}", spec.parallel.name());
    let _ = writeln!(s, "workers = {}", spec.parallel.count());
    let _ = writeln!(s, "source = {}", input.speedup_source);
    match input.speedup {
        Some(r) => {
            let _ = writeln!(s, "fittedP = {}", g17(r.fitted_p));
            let _ = writeln!(s, "recommendedWorkers = {}", r.recommended_workers);
            let _ = writeln!(
                s,
                "observedSpeedup = {}",
                r.observed_speedup.map_or_else(|| "not measured".to_string(), g17)
            );
            let _ = writeln!(s, "[speedup-table]");
            let _ = writeln!(s, "P,predictedSpeedup,observedSpeedup");
            for (w, v) in &r.predicted_curve {
                let _ = writeln!(s, "{},{},", w, g17(*v));
            }
        }
        None => {
            let _ = writeln!(s, "fittedP = unavailable");
        }
    }

    if let Some(conv) = input.convergence {
        let _ = writeln!(s, "[convergence]");
        let _ = writeln!(s, "alpha = {}", g17(conv.alpha));
        let _ = writeln!(s, "threshold = {}", g17(conv.threshold));
        let _ = writeln!(s, "passed = {}", conv.passed());
        let _ = writeln!(s, "[convergence-tests]");
        let _ = writeln!(s, "first,second,dimension,statistic,pValue,passed");
        for c in &conv.checks {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                c.first + 1,
                c.second + 1,
                c.dimension + 1,
                g17(c.ks.statistic),
                g17(c.ks.p_value),
                c.passed
            );
        }
    }
    let _ = writeln!(s, "{REPORT_TERMINATOR}");
    s
}

pub fn write_report(path: &Path, input: &ReportInput<'_>) -> Result<(), PersistError> {
    write_atomic(path, render_report(input).as_bytes())
}

/// A report split into its sections' raw lines.
#[derive(Debug, Clone, Default)]
pub struct ParsedReport {
    pub sections: BTreeMap<String, Vec<String>>,
}

impl ParsedReport {
    pub fn parse(text: &str) -> Self {
        let mut sections: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for line in text.lines() {
            if line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = Some(name.to_string());
                sections.entry(name.to_string()).or_default();
            } else if let Some(c) = &current {
                sections.entry(c.clone()).or_default().push(line.to_string());
            }
        }
        Self { sections }
    }

    /// Header and rows of a table section.
    pub fn table(&self, name: &str) -> Option<(Vec<String>, Vec<Vec<String>>)> {
        let lines = self.sections.get(name)?;
        let (head, rows) = lines.split_first()?;
        let header = head.split(',').map(str::to_string).collect();
        Some((header, rows.iter().map(|r| r.split(',').map(str::to_string).collect()).collect()))
    }

    pub fn value(&self, section: &str, key: &str) -> Option<String> {
        self.sections.get(section)?.iter().find_map(|l| {
            let (k, v) = l.split_once('=')?;
            (k.trim() == key).then(|| v.split_once(" #").map_or(v, |p| p.0).trim().to_string())
        })
    }
}
