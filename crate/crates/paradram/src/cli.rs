//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand};
use paradram_core::parallel::{fit_geometric, predict_speedup, recommend_workers, ContributionTally, DEFAULT_EFFICIENCY_FLOOR};
use paradram_core::refine::refine_two_phase;

use crate::config::{merge_settings, spec_from_settings, GlobalArgs, RunArgs};
use crate::format::g17;
use crate::persist::{read_chain_file, variable_names, write_sample, OutputSuite};
use crate::plotdata::{export, Figure};
use crate::report::ParsedReport;
use crate::runner::{run_simulation, RunControl};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_REFUSED: i32 = 3;

const EXIT_CODES: &str = "Exit codes: 0 success, 1 configuration or input error, 2 runtime error, \
3 refused to overwrite a completed run.";

#[derive(Parser, Debug)]
#[command(name = "paradram", version, about = "Delayed-rejection adaptive Metropolis sampler", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a simulation, resuming an interrupted one with the same prefix
    #[command(after_help = EXIT_CODES)]
    Run(RunArgs),
    /// Refine an existing chain or sample file
    Refine {
        /// Chain file (ascii or binary) or sample file
        chain: PathBuf,
        /// Where to write the refined sample
        output: PathBuf,
    },
    /// Predict fork-join speedup from a chain file
    Predict {
        chain: PathBuf,
        /// Largest worker count in the table
        #[arg(long, default_value_t = 1024)]
        max_workers: u32,
    },
    /// Export plot-ready CSV from a finished run
    ExportPlotdata {
        /// Output prefix of the run
        prefix: PathBuf,
        #[arg(value_enum)]
        figure: Figure,
        /// CSV file to write
        output: PathBuf,
    },
}

/// Parses `args` and runs the command, returning the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let r = match cli.command {
        Command::Run(run) => cmd_run(&run, &cli.global, out),
        Command::Refine { chain, output } => cmd_refine(&chain, &output, out),
        Command::Predict { chain, max_workers } => cmd_predict(&chain, max_workers, out),
        Command::ExportPlotdata { prefix, figure, output } => cmd_export_plotdata(&prefix, figure, &output),
    };
    match r {
        Ok(()) => EXIT_OK,
        Err((code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

type CmdResult = Result<(), (i32, String)>;

fn config_err(msg: impl ToString) -> (i32, String) {
    (EXIT_CONFIG, msg.to_string())
}

pub fn cmd_run(run: &RunArgs, global: &GlobalArgs, out: &mut dyn Write) -> CmdResult {
    let settings = merge_settings(run, global).map_err(config_err)?;
    let spec = spec_from_settings(&settings).map_err(config_err)?;
    let control = RunControl { force_overwrite: global.force_overwrite, interrupt: None };
    let result = run_simulation(&spec, control).map_err(|e| (e.exit_code(), e.to_string()))?;
    let suite = OutputSuite::new(&spec.output.prefix, spec.output.format, spec.output.delimiter);
    for c in &result.chains {
        match &c.run {
            Ok(r) => {
                let _ = writeln!(
                    out,
                    "chain {}: {} unique / {} total states{}",
                    c.chain,
                    r.chain.len(),
                    r.summary.verbose_length,
                    if c.resumed { " (resumed)" } else { "" }
                );
            }
            Err(e) => {
                let _ = writeln!(out, "chain {}: failed: {e}", c.chain);
            }
        }
    }
    let _ = writeln!(out, "report: {}", suite.report_path().display());
    Ok(())
}

pub fn cmd_refine(chain: &Path, output: &Path, out: &mut dyn Write) -> CmdResult {
    let file = read_chain_file(chain).map_err(config_err)?;
    let refined = refine_two_phase(&file.chain).map_err(config_err)?;
    let names = if file.chain.variable_names().len() == file.chain.dimension() {
        file.chain.variable_names().to_vec()
    } else {
        variable_names(file.chain.dimension())
    };
    write_sample(output, file.delimiter, &names, &refined).map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
    let _ = writeln!(out, "burninLocation = {}", refined.burnin_location);
    let _ = writeln!(out, "round,phase,iacAggregate,keptCount");
    for (i, r) in refined.rounds.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", i + 1, r.phase, g17(r.iac_aggregate), r.kept_count);
    }
    let _ = writeln!(out, "points = {}", refined.len());
    Ok(())
}

/// Acceptance probability of a chain: fitted from the worker tally when
/// more than one rank contributed, else the final mean acceptance rate.
pub fn chain_acceptance(chain: &paradram_core::chain::CompactChain) -> Result<(f64, &'static str), String> {
    let rows = chain.rows();
    let last = rows.last().ok_or("chain file has no rows")?;
    let ids: Vec<u32> = rows.iter().skip(1).map(|r| r.process_id).collect();
    let first = ids.first().copied();
    if ids.iter().any(|&id| Some(id) != first) {
        let p = *ids.iter().max().unwrap_or(&1) as usize;
        let mut counts = vec![0u64; p];
        for id in ids {
            if id >= 1 {
                counts[id as usize - 1] += 1;
            }
        }
        let tally = ContributionTally::new(counts).map_err(|e| e.to_string())?;
        return Ok((fit_geometric(&tally).map_err(|e| e.to_string())?, "tally"));
    }
    let p = last.mean_acceptance_rate;
    if !(p > 0.0 && p <= 1.0) {
        return Err("chain file has no usable acceptance statistics".into());
    }
    Ok((p, "acceptance-rate"))
}

pub fn cmd_predict(chain: &Path, max_workers: u32, out: &mut dyn Write) -> CmdResult {
    if max_workers < 1 {
        return Err(config_err("max-workers must be at least 1"));
    }
    let file = read_chain_file(chain).map_err(config_err)?;
    let (p, source) = chain_acceptance(&file.chain).map_err(config_err)?;
    let _ = writeln!(out, "source = {source}");
    let _ = writeln!(out, "fittedP = {}", g17(p));
    let _ = writeln!(out, "P,predictedSpeedup");
    let mut w = 1u32;
    while w <= max_workers {
        let _ = writeln!(out, "{},{}", w, g17(predict_speedup(p, w)));
        match w.checked_mul(2) {
            Some(n) => w = n,
            None => break,
        }
    }
    let _ = writeln!(out, "recommendedWorkers = {}", recommend_workers(p, DEFAULT_EFFICIENCY_FLOOR));
    Ok(())
}

pub fn cmd_export_plotdata(prefix: &Path, figure: Figure, output: &Path) -> CmdResult {
    let suite = OutputSuite::new(prefix, paradram_core::spec::ChainFormat::Ascii, ',');
    let path = suite.report_path();
    let text = std::fs::read_to_string(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let csv = export(&ParsedReport::parse(&text), figure).map_err(config_err)?;
    std::fs::write(output, csv).map_err(|e| (EXIT_RUNTIME, format!("{}: {e}", output.display())))
}

/// Long help of the `run` command.
pub fn run_help() -> String {
    let mut cmd = Cli::command();
    cmd.build();
    cmd.find_subcommand_mut("run").map(|c| c.render_long_help().to_string()).unwrap_or_default()
}
