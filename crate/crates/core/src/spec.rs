//! Complete description of a simulation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::codec::Fnv64;
use crate::kernel::KernelConfig;
use crate::linalg::Matrix;
use crate::model::{make_builtin_target, BuiltinTarget, BuiltinTargetSpec};
use crate::proposal::{default_dr_scales, default_scale_factor, ProposalState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParallelMode {
    Serial,
    MultiChain(u32),
    ForkJoin(u32),
}

impl ParallelMode {
    pub fn name(self) -> &'static str {
        match self {
            ParallelMode::Serial => "serial",
            ParallelMode::MultiChain(_) => "multichain",
            ParallelMode::ForkJoin(_) => "forkjoin",
        }
    }

    /// Chains for multi-chain mode, workers for fork-join, 1 otherwise.
    pub fn count(self) -> u32 {
        match self {
            ParallelMode::Serial => 1,
            ParallelMode::MultiChain(n) | ParallelMode::ForkJoin(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainFormat {
    Ascii,
    Binary,
}

impl ChainFormat {
    pub fn name(self) -> &'static str {
        match self {
            ChainFormat::Ascii => "ascii",
            ChainFormat::Binary => "binary",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub prefix: String,
    pub format: ChainFormat,
    pub delimiter: char,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalSettings {
    /// Initial proposal standard deviation along every axis.
    pub initial_std: f64,
    /// Stage-0 scale factor; `None` means `2.38 / sqrt(d)`.
    pub scale_factor: Option<f64>,
}

impl Default for ProposalSettings {
    fn default() -> Self {
        Self { initial_std: 1.0, scale_factor: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub target: BuiltinTargetSpec,
    pub kernel: KernelConfig,
    pub proposal: ProposalSettings,
    pub parallel: ParallelMode,
    pub output: OutputSettings,
    pub deterministic_test_mode: bool,
}

impl SimulationSpec {
    /// Serial run of `target` from the origin with default settings.
    pub fn new(target: BuiltinTargetSpec, seed: u64, prefix: impl Into<String>) -> Self {
        let d = target.dimension;
        Self {
            target,
            kernel: KernelConfig::new(vec![0.0; d], seed),
            proposal: ProposalSettings::default(),
            parallel: ParallelMode::Serial,
            output: OutputSettings { prefix: prefix.into(), format: ChainFormat::Ascii, delimiter: ',' },
            deterministic_test_mode: false,
        }
    }

    pub fn dimension(&self) -> usize {
        self.target.dimension
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimension();
        if d == 0 {
            return Err(Error::InvalidConfig("dimension must be at least 1".into()));
        }
        make_builtin_target(&self.target)?;
        self.kernel.validate(d)?;
        match self.parallel {
            ParallelMode::MultiChain(0) => return Err(Error::InvalidConfig("chain count must be at least 1".into())),
            ParallelMode::ForkJoin(0) => return Err(Error::InvalidConfig("worker count must be at least 1".into())),
            _ => {}
        }
        if !(self.proposal.initial_std > 0.0 && self.proposal.initial_std.is_finite()) {
            return Err(Error::InvalidConfig("proposal standard deviation must be a positive real".into()));
        }
        if let Some(s) = self.proposal.scale_factor {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig("proposal scale factor must be a positive real".into()));
            }
        }
        if self.output.prefix.is_empty() {
            return Err(Error::InvalidConfig("output prefix must not be empty".into()));
        }
        let c = self.output.delimiter;
        if c.is_alphanumeric() || matches!(c, '.' | '-' | '+' | '"' | '\n' | '\r') {
            return Err(Error::InvalidConfig("delimiter must not occur inside numbers or break lines".into()));
        }
        Ok(())
    }

    pub fn build_target(&self) -> Result<BuiltinTarget> {
        make_builtin_target(&self.target)
    }

    pub fn build_proposal(&self) -> Result<ProposalState> {
        let d = self.dimension();
        let var = self.proposal.initial_std * self.proposal.initial_std;
        let scale = self.proposal.scale_factor.unwrap_or_else(|| default_scale_factor(d));
        ProposalState::new(
            Matrix::identity(d).scaled(var),
            scale,
            default_dr_scales(self.kernel.dr_stage_count as usize),
        )
    }

    /// Hash of every field that shapes the trajectory or the file layout.
    ///
    /// The chain length target, delimiter, prefix and test mode are left
    /// out, so a run can be extended or moved without invalidating its
    /// restart file.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv64::default();
        h.write(b"paradram-spec-v1");
        let t = &self.target;
        h.write(t.kind.as_str().as_bytes());
        h.write_u64(t.dimension as u64);
        h.write_u64(t.mean.len() as u64);
        t.mean.iter().for_each(|v| h.write_f64(*v));
        h.write_u64(t.covariance.len() as u64);
        t.covariance.iter().for_each(|v| h.write_f64(*v));
        h.write_f64(t.scale);
        h.write_f64(t.curvature);
        let k = &self.kernel;
        h.write_u64(k.rng_seed);
        h.write_u64(u64::from(k.dr_stage_count));
        h.write_u64(k.adaptation_period);
        h.write_u64(k.greedy_adaptation_count);
        k.start_point.iter().for_each(|v| h.write_f64(*v));
        h.write_f64(self.proposal.initial_std);
        h.write_f64(self.proposal.scale_factor.unwrap_or(-1.0));
        h.write(self.parallel.name().as_bytes());
        h.write_u64(u64::from(self.parallel.count()));
        h.write(self.output.format.name().as_bytes());
        h.finish()
    }

    /// Names of the chain files' state columns.
    pub fn variable_names(&self) -> Vec<String> {
        crate::chain::default_variable_names(self.dimension())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SimulationSpec {
        SimulationSpec::new(BuiltinTargetSpec::standard_normal(4), 42, "run")
    }

    #[test]
    fn digest_scope() {
        let a = base();
        let mut b = a.clone();
        b.kernel.chain_length_target *= 3;
        b.output.delimiter = ';';
        assert_eq!(a.digest(), b.digest());
        let mut c = a.clone();
        c.kernel.rng_seed = 43;
        assert_ne!(a.digest(), c.digest());
        let mut c = a.clone();
        c.target = BuiltinTargetSpec::standard_normal(3);
        c.kernel.start_point.pop();
        assert_ne!(a.digest(), c.digest());
        let mut c = a.clone();
        c.parallel = ParallelMode::ForkJoin(1);
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn validation_names_the_problem() {
        let mut s = base();
        s.target.dimension = 0;
        s.kernel.start_point.clear();
        let e = s.validate().unwrap_err();
        assert!(alloc::format!("{e}").contains("dimension"));
        let mut s = base();
        s.parallel = ParallelMode::ForkJoin(0);
        assert!(s.validate().is_err());
        let mut s = base();
        s.output.delimiter = 'e';
        assert!(s.validate().is_err());
        assert!(base().validate().is_ok());
    }

    #[test]
    fn proposal_defaults() {
        let p = base().build_proposal().unwrap();
        assert!((p.scale_factor() - 1.19).abs() < 1e-12);
        assert_eq!(p.dr_scales(), &[0.5]);
    }
}
