//! Run configuration from flags and `key = value` files.
//!
//! Keys are the long flag names without dashes. A file is read first and
//! flags given on the command line replace its values, so the
//! specification section of a report can be fed back as a config file.

use std::collections::BTreeMap;
use std::path::Path;

use clap::Args;
use paradram_core::kernel::{default_adaptation_period, KernelConfig};
use paradram_core::model::{BuiltinTargetSpec, TargetKind, DEFAULT_BANANA_CURVATURE, DEFAULT_HIMMELBLAU_SCALE};
use paradram_core::spec::{ChainFormat, OutputSettings, ParallelMode, ProposalSettings, SimulationSpec};

use crate::format::g17;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_PREFIX: &str = "paradram";

/// Every specification field as `(key, description)`.
pub const FIELDS: &[(&str, &str)] = &[
    ("target", "target density: mvn, himmelblau or banana"),
    ("dim", "number of dimensions"),
    ("mean", "mvn mean vector, comma separated (default origin)"),
    ("covariance", "mvn covariance, row-major and comma separated (default identity)"),
    ("scale", "himmelblau temperature s in log p = -H/s"),
    ("curvature", "banana twist parameter"),
    ("chain-len", "number of unique states to collect"),
    ("dr-stages", "delayed-rejection stages after the first proposal"),
    ("adaptation-period", "unique states between proposal adaptations"),
    ("greedy-adaptations", "initial adaptations that use accepted states only"),
    ("start", "start point, comma separated (default origin)"),
    ("seed", "random seed"),
    ("proposal-std", "initial proposal standard deviation per axis"),
    ("proposal-scale", "proposal scale factor (default 2.38/sqrt(dim))"),
    ("mode", "parallelism: serial, multichain or forkjoin"),
    ("workers", "chains (multichain) or workers (forkjoin)"),
    ("out", "output path prefix"),
    ("format", "chain file format: ascii or binary"),
    ("delimiter", "ascii column delimiter: a character, or comma, semicolon, tab, space"),
    ("deterministic-test-mode", "blank wall-clock fields so reruns are byte-identical"),
];

const ALIASES: &[(&str, &str)] = &[
    ("target.kind", "target"),
    ("target.dimension", "dim"),
    ("target.mean", "mean"),
    ("target.covariance", "covariance"),
    ("target.scale", "scale"),
    ("target.curvature", "curvature"),
    ("kernel.chain-length-target", "chain-len"),
    ("kernel.dr-stage-count", "dr-stages"),
    ("kernel.adaptation-period", "adaptation-period"),
    ("kernel.greedy-adaptation-count", "greedy-adaptations"),
    ("kernel.start-point", "start"),
    ("kernel.rng-seed", "seed"),
    ("parallel.mode", "mode"),
    ("parallel.count", "workers"),
    ("output.prefix", "out"),
    ("output.format", "format"),
    ("output.delimiter", "delimiter"),
];

/// Flags of the `run` command.
#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// Config file of `key = value` lines; keys are these flag names
    #[arg(long, value_name = "PATH")]
    pub config: Option<std::path::PathBuf>,
    /// Target density: mvn, himmelblau or banana
    #[arg(long)]
    pub target: Option<String>,
    /// Number of dimensions
    #[arg(long)]
    pub dim: Option<String>,
    /// Mvn mean vector, comma separated (default origin)
    #[arg(long, allow_hyphen_values = true)]
    pub mean: Option<String>,
    /// Mvn covariance, row-major and comma separated (default identity)
    #[arg(long, allow_hyphen_values = true)]
    pub covariance: Option<String>,
    /// Himmelblau temperature s in log p = -H/s
    #[arg(long)]
    pub scale: Option<String>,
    /// Banana twist parameter
    #[arg(long, allow_hyphen_values = true)]
    pub curvature: Option<String>,
    /// Number of unique states to collect
    #[arg(long)]
    pub chain_len: Option<String>,
    /// Delayed-rejection stages after the first proposal
    #[arg(long)]
    pub dr_stages: Option<String>,
    /// Unique states between proposal adaptations
    #[arg(long)]
    pub adaptation_period: Option<String>,
    /// Initial adaptations that use accepted states only
    #[arg(long)]
    pub greedy_adaptations: Option<String>,
    /// Start point, comma separated (default origin)
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<String>,
    /// Initial proposal standard deviation per axis
    #[arg(long)]
    pub proposal_std: Option<String>,
    /// Proposal scale factor (default 2.38/sqrt(dim))
    #[arg(long)]
    pub proposal_scale: Option<String>,
    /// Parallelism: serial, multichain or forkjoin
    #[arg(long)]
    pub mode: Option<String>,
    /// Chains (multichain) or workers (forkjoin)
    #[arg(long)]
    pub workers: Option<String>,
    /// Ascii column delimiter: a character, or comma, semicolon, tab, space
    #[arg(long)]
    pub delimiter: Option<String>,
}

/// Flags shared by every command.
#[derive(Args, Debug, Default, Clone)]
pub struct GlobalArgs {
    /// Random seed
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// Output path prefix
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Chain file format: ascii or binary
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// Blank wall-clock fields so reruns are byte-identical
    #[arg(long, global = true)]
    pub deterministic_test_mode: bool,
    /// Replace the outputs of a completed run
    #[arg(long, global = true)]
    pub force_overwrite: bool,
}

pub type Settings = BTreeMap<String, String>;

fn canonical_key(key: &str) -> Option<&'static str> {
    let k = key.trim().replace('_', "-");
    FIELDS
        .iter()
        .map(|f| f.0)
        .find(|f| *f == k)
        .or_else(|| ALIASES.iter().find(|a| a.0.eq_ignore_ascii_case(&k)).map(|a| a.1))
}

/// Parses `key = value` lines. Blank lines, `#` comments and `[section]`
/// lines are ignored.
pub fn parse_config_text(text: &str) -> Result<Settings, String> {
    let mut out = Settings::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once(" #").map_or(raw, |p| p.0).trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        let key = canonical_key(k).ok_or_else(|| format!("line {}: unknown key `{}`", i + 1, k.trim()))?;
        if out.insert(key.to_string(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: `{key}` given twice", i + 1));
        }
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<Settings, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config_text(&text)
}

/// Config file values overlaid with the flags that were given.
pub fn merge_settings(run: &RunArgs, global: &GlobalArgs) -> Result<Settings, String> {
    let mut s = match &run.config {
        Some(p) => read_config_file(p)?,
        None => Settings::new(),
    };
    let flags: [(&str, &Option<String>); 19] = [
        ("target", &run.target),
        ("dim", &run.dim),
        ("mean", &run.mean),
        ("covariance", &run.covariance),
        ("scale", &run.scale),
        ("curvature", &run.curvature),
        ("chain-len", &run.chain_len),
        ("dr-stages", &run.dr_stages),
        ("adaptation-period", &run.adaptation_period),
        ("greedy-adaptations", &run.greedy_adaptations),
        ("start", &run.start),
        ("proposal-std", &run.proposal_std),
        ("proposal-scale", &run.proposal_scale),
        ("mode", &run.mode),
        ("workers", &run.workers),
        ("delimiter", &run.delimiter),
        ("seed", &global.seed),
        ("out", &global.out),
        ("format", &global.format),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            s.insert(k.to_string(), v.clone());
        }
    }
    if global.deterministic_test_mode {
        s.insert("deterministic-test-mode".into(), "true".into());
    }
    Ok(s)
}

fn get<'a>(s: &'a Settings, key: &str) -> Option<&'a str> {
    s.get(key).map(String::as_str).filter(|v| !v.is_empty())
}

fn parse_num<T: std::str::FromStr>(s: &Settings, key: &str) -> Result<Option<T>, String> {
    get(s, key)
        .map(|v| v.parse::<T>().map_err(|_| format!("{key}: cannot parse `{v}`")))
        .transpose()
}

fn parse_list(s: &Settings, key: &str) -> Result<Vec<f64>, String> {
    match get(s, key) {
        None => Ok(Vec::new()),
        Some(v) => v
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| format!("{key}: cannot parse `{x}`")))
            .collect(),
    }
}

fn parse_bool(s: &Settings, key: &str) -> Result<bool, String> {
    match get(s, key) {
        None => Ok(false),
        Some("true" | "yes" | "1" | "on") => Ok(true),
        Some("false" | "no" | "0" | "off") => Ok(false),
        Some(v) => Err(format!("{key}: expected true or false, found `{v}`")),
    }
}

pub fn parse_delimiter(v: &str) -> Result<char, String> {
    match v {
        "comma" => Ok(','),
        "semicolon" => Ok(';'),
        "tab" => Ok('\t'),
        "space" => Ok(' '),
        _ => {
            let mut it = v.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(format!("delimiter: expected a single character, found `{v}`")),
            }
        }
    }
}

fn delimiter_name(c: char) -> String {
    match c {
        '\t' => "tab".into(),
        ' ' => "space".into(),
        c => c.to_string(),
    }
}

pub fn parse_format(v: &str) -> Result<ChainFormat, String> {
    match v.to_ascii_lowercase().as_str() {
        "ascii" | "text" => Ok(ChainFormat::Ascii),
        "binary" | "bin" => Ok(ChainFormat::Binary),
        _ => Err(format!("format: expected ascii or binary, found `{v}`")),
    }
}

/// Builds and validates a specification from merged settings.
pub fn spec_from_settings(s: &Settings) -> Result<SimulationSpec, String> {
    let kind = match get(s, "target") {
        None => TargetKind::MultivariateNormal,
        Some(v) => TargetKind::parse(v).ok_or_else(|| format!("target: unknown target `{v}`"))?,
    };
    let mean = parse_list(s, "mean")?;
    let dim = match parse_num::<usize>(s, "dim")? {
        Some(d) => d,
        None if kind == TargetKind::HimmelblauDensity => 2,
        None if !mean.is_empty() => mean.len(),
        None => return Err("dim: the number of dimensions is required for this target".into()),
    };
    let target = BuiltinTargetSpec {
        kind,
        dimension: dim,
        mean,
        covariance: parse_list(s, "covariance")?,
        scale: parse_num(s, "scale")?.unwrap_or(DEFAULT_HIMMELBLAU_SCALE),
        curvature: parse_num(s, "curvature")?.unwrap_or(DEFAULT_BANANA_CURVATURE),
    };
    let start = parse_list(s, "start")?;
    let seed = parse_num(s, "seed")?.unwrap_or(DEFAULT_SEED);
    let mut kernel = KernelConfig::new(if start.is_empty() { vec![0.0; dim] } else { start }, seed);
    if let Some(n) = parse_num(s, "chain-len")? {
        kernel.chain_length_target = n;
    }
    if let Some(n) = parse_num(s, "dr-stages")? {
        kernel.dr_stage_count = n;
    }
    kernel.adaptation_period = parse_num(s, "adaptation-period")?.unwrap_or_else(|| default_adaptation_period(dim));
    if let Some(n) = parse_num(s, "greedy-adaptations")? {
        kernel.greedy_adaptation_count = n;
    }
    let proposal = ProposalSettings {
        initial_std: parse_num(s, "proposal-std")?.unwrap_or(1.0),
        scale_factor: parse_num(s, "proposal-scale")?,
    };
    let count: Option<u32> = parse_num(s, "workers")?;
    let parallel = match get(s, "mode").unwrap_or("serial") {
        "serial" => ParallelMode::Serial,
        "multichain" | "multi-chain" => ParallelMode::MultiChain(count.unwrap_or(2)),
        "forkjoin" | "fork-join" => ParallelMode::ForkJoin(count.unwrap_or(2)),
        v => return Err(format!("mode: expected serial, multichain or forkjoin, found `{v}`")),
    };
    let output = OutputSettings {
        prefix: get(s, "out").unwrap_or(DEFAULT_PREFIX).to_string(),
        format: get(s, "format").map(parse_format).transpose()?.unwrap_or(ChainFormat::Ascii),
        delimiter: get(s, "delimiter").map(parse_delimiter).transpose()?.unwrap_or(','),
    };
    let spec = SimulationSpec {
        target,
        kernel,
        proposal,
        parallel,
        output,
        deterministic_test_mode: parse_bool(s, "deterministic-test-mode")?,
    };
    if output_delimiter_reserved(spec.output.delimiter) {
        return Err("delimiter: `#` and `=` are reserved".into());
    }
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn output_delimiter_reserved(c: char) -> bool {
    c == '#' || c == '='
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| g17(*x)).collect::<Vec<_>>().join(",")
}

/// `(key, value, description)` for every field, in [`FIELDS`] order.
pub fn spec_entries(spec: &SimulationSpec) -> Vec<(&'static str, String, &'static str)> {
    let t = &spec.target;
    let k = &spec.kernel;
    let values = [
        t.kind.as_str().to_string(),
        t.dimension.to_string(),
        join(&t.mean),
        join(&t.covariance),
        g17(t.scale),
        g17(t.curvature),
        k.chain_length_target.to_string(),
        k.dr_stage_count.to_string(),
        k.adaptation_period.to_string(),
        k.greedy_adaptation_count.to_string(),
        join(&k.start_point),
        k.rng_seed.to_string(),
        g17(spec.proposal.initial_std),
        spec.proposal.scale_factor.map(g17).unwrap_or_default(),
        spec.parallel.name().to_string(),
        spec.parallel.count().to_string(),
        spec.output.prefix.clone(),
        spec.output.format.name().to_string(),
        delimiter_name(spec.output.delimiter),
        spec.deterministic_test_mode.to_string(),
    ];
    FIELDS.iter().zip(values).map(|(&(key, desc), v)| (key, v, desc)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_reparses_to_same_spec() {
        let mut s = Settings::new();
        for (k, v) in [
            ("target", "mvn"),
            ("dim", "2"),
            ("mean", "1,-2"),
            ("covariance", "2,0.5,0.5,1"),
            ("mode", "forkjoin"),
            ("workers", "4"),
            ("delimiter", "tab"),
            ("seed", "9"),
        ] {
            s.insert(k.into(), v.into());
        }
        let spec = spec_from_settings(&s).unwrap();
        let text: String = spec_entries(&spec).iter().map(|(k, v, d)| format!("{k} = {v}   # {d}\n")).collect();
        assert_eq!(spec_from_settings(&parse_config_text(&text).unwrap()).unwrap(), spec);
    }

    #[test]
    fn aliases_and_errors() {
        let s = parse_config_text("target.kind = himmelblau\n[x]\n# note\nkernel.rng-seed = 3\n").unwrap();
        let spec = spec_from_settings(&s).unwrap();
        assert_eq!(spec.dimension(), 2);
        assert_eq!(spec.kernel.rng_seed, 3);
        assert!(parse_config_text("bogus = 1").is_err());
        assert!(parse_config_text("seed = 1\nseed = 2").is_err());
        let s = parse_config_text("dim = 0").unwrap();
        assert!(spec_from_settings(&s).unwrap_err().contains("dimension"));
    }

    #[test]
    fn every_field_has_an_entry() {
        let spec = spec_from_settings(&parse_config_text("dim = 3").unwrap()).unwrap();
        let entries = spec_entries(&spec);
        assert_eq!(entries.len(), FIELDS.len());
        assert_eq!(spec.kernel.adaptation_period, 100);
    }
}
