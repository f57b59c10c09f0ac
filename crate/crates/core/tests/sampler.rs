use paradram_core::chain::{ChainRow, CompactChain};
use paradram_core::kernel::{
    burnin_location, run_kernel, BurninTracker, ChainSink, KernelConfig, NullSink, Sampler, SamplerCore, SamplerOptions,
    StreamConvention,
};
use paradram_core::model::{make_builtin_target, BuiltinTargetSpec, FnTarget};
use paradram_core::parallel::{run_chain, run_forkjoin, run_multichain};
use paradram_core::proposal::ProposalState;
use proptest::prelude::*;

fn mvn_setup(len: u64, seed: u64) -> (paradram_core::model::BuiltinTarget, KernelConfig, ProposalState) {
    let cov = vec![2.0, 0.6, 0.0, 0.6, 1.0, -0.3, 0.0, -0.3, 0.5];
    let t = make_builtin_target(&BuiltinTargetSpec::mvn(vec![1.0, -2.0, 0.5], cov)).unwrap();
    let mut cfg = KernelConfig::new(vec![0.0; 3], seed);
    cfg.chain_length_target = len;
    (t, cfg, ProposalState::isotropic(3, 1.0, 1).unwrap())
}

#[test]
fn recovers_mvn_moments() {
    let (t, cfg, p) = mvn_setup(40_000, 5);
    let out = run_kernel(&t, cfg, p, &mut NullSink).unwrap();
    let stats = out.chain.chain_stats(out.summary.burnin_location).unwrap();
    let truth_mean = [1.0, -2.0, 0.5];
    for i in 0..3 {
        assert!((stats.mean[i] - truth_mean[i]).abs() < 0.1, "{:?}", stats.mean);
    }
    assert!((stats.covariance[(0, 0)] - 2.0).abs() < 0.3);
    assert!((stats.covariance[(0, 1)] - 0.6).abs() < 0.2);
    assert!(out.summary.adaptations.len() > 10);
    assert!(out.summary.adaptations.iter().all(|a| (0.0..=1.0).contains(&a.measure)));
}

#[test]
fn same_seed_same_chain() {
    let (t, cfg, p) = mvn_setup(2000, 9);
    let a = run_kernel(&t, cfg.clone(), p.clone(), &mut NullSink).unwrap();
    let b = run_kernel(&t, cfg, p, &mut NullSink).unwrap();
    assert_eq!(a, b);
}

#[test]
fn forkjoin_one_worker_is_per_round_serial() {
    let (t, cfg, p) = mvn_setup(1500, 3);
    let fj = run_forkjoin(&t, cfg.clone(), p.clone(), 1, &mut NullSink).unwrap();
    let opts = SamplerOptions { convention: StreamConvention::PerRound, workers: 1, chain_index: 0 };
    let serial = Sampler::new(&t, cfg, p, opts).unwrap().run(&mut NullSink).unwrap();
    assert_eq!(fj.run, serial);
    assert_eq!(fj.tally.total() + 1, serial.chain.len() as u64);
}

#[test]
fn multichain_one_chain_is_serial() {
    let (t, cfg, p) = mvn_setup(1500, 4);
    let serial = run_kernel(&t, cfg.clone(), p.clone(), &mut NullSink).unwrap();
    let multi = run_multichain(&t, &cfg, &p, 1);
    assert_eq!(multi.runs[0].as_ref().unwrap(), &serial);
    let other = run_chain(&t, cfg, p, 1, &mut NullSink).unwrap();
    assert_ne!(other.chain, serial.chain);
    assert!(other.chain.rows().iter().all(|r| r.process_id == 2));
}

#[test]
fn flat_target_forkjoin_credits_rank_one() {
    let t = FnTarget::new(2, "flat", |_: &[f64]| 0.0);
    let mut cfg = KernelConfig::new(vec![0.0; 2], 1);
    cfg.chain_length_target = 300;
    let out = run_forkjoin(&t, cfg, ProposalState::isotropic(2, 1.0, 1).unwrap(), 8, &mut NullSink).unwrap();
    assert_eq!(out.tally.counts[0], 299);
    assert!(out.tally.counts[1..].iter().all(|&c| c == 0));
    assert_eq!(out.speedup.unwrap().fitted_p, 1.0);
}

/// Records emitted rows and the snapshot taken at each flush point.
#[derive(Default)]
struct Recorder {
    rows: Vec<ChainRow>,
    snapshots: Vec<(Vec<u8>, usize)>,
    ticks: Vec<u64>,
}

impl ChainSink for Recorder {
    type Error = ();
    fn push_row(&mut self, row: &ChainRow) -> Result<(), ()> {
        self.rows.push(row.clone());
        Ok(())
    }
    fn flush_point(&mut self, s: &SamplerCore) -> Result<(), ()> {
        assert_eq!(s.rows_emitted() as usize, self.rows.len());
        self.snapshots.push((s.encode_snapshot(), self.rows.len()));
        Ok(())
    }
    fn progress(&mut self, tick: &paradram_core::kernel::ProgressTick) -> Result<(), ()> {
        self.ticks.push(tick.verbose_length);
        Ok(())
    }
}

#[test]
fn resume_from_any_flush_point_is_exact() {
    for opts in [SamplerOptions::serial(), SamplerOptions::fork_join(3)] {
        let (t, mut cfg, p) = mvn_setup(3000, 21);
        cfg.adaptation_period = 150;
        let mut rec = Recorder::default();
        let full = Sampler::new(&t, cfg.clone(), p.clone(), opts).unwrap().run(&mut rec).unwrap();
        assert_eq!(rec.rows, full.chain.rows());
        assert!(rec.snapshots.len() >= 10);
        assert_eq!(rec.ticks.first(), Some(&1000));
        for (snap, n) in rec.snapshots.iter().step_by(3) {
            let s = Sampler::resume(&t, cfg.clone(), opts, snap, rec.rows[..*n].to_vec()).unwrap();
            let resumed = s.run(&mut NullSink).unwrap();
            assert_eq!(resumed, full);
        }
    }
}

#[test]
fn resume_with_longer_target_extends_prefix() {
    let (t, cfg, p) = mvn_setup(1200, 8);
    let mut rec = Recorder::default();
    let short = Sampler::new(&t, cfg.clone(), p.clone(), SamplerOptions::serial()).unwrap().run(&mut rec).unwrap();
    let (snap, n) = rec.snapshots.last().unwrap().clone();
    let mut longer = cfg.clone();
    longer.chain_length_target = 2000;
    let resumed = Sampler::resume(&t, longer.clone(), SamplerOptions::serial(), &snap, rec.rows[..n].to_vec())
        .unwrap()
        .run(&mut NullSink)
        .unwrap();
    let direct = run_kernel(&t, longer, p, &mut NullSink).unwrap();
    assert_eq!(resumed, direct);
    assert_eq!(&direct.chain.rows()[..n], &short.chain.rows()[..n]);
}

#[test]
fn snapshot_rejects_other_options() {
    let (t, cfg, p) = mvn_setup(1200, 8);
    let mut rec = Recorder::default();
    Sampler::new(&t, cfg.clone(), p, SamplerOptions::serial()).unwrap().run(&mut rec).unwrap();
    let (snap, n) = rec.snapshots[0].clone();
    assert!(Sampler::resume(&t, cfg.clone(), SamplerOptions::fork_join(2), &snap, rec.rows[..n].to_vec()).is_err());
    assert!(Sampler::resume(&t, cfg, SamplerOptions::serial(), &snap[..snap.len() - 3], rec.rows[..n].to_vec()).is_err());
}

#[test]
fn row_columns_are_consistent() {
    let (t, cfg, p) = mvn_setup(3000, 2);
    let out = run_kernel(&t, cfg, p, &mut NullSink).unwrap();
    let rows = out.chain.rows();
    let mut verbose = 0u64;
    for r in rows {
        verbose += r.weight;
        // serial rate is unique states over verbose states so far
        let unique = rows.iter().take_while(|x| !std::ptr::eq(*x, r)).count() as f64 + 1.0;
        assert_eq!(r.mean_acceptance_rate, unique / verbose as f64);
        assert!(r.burnin_location < verbose);
    }
    assert_eq!(out.summary.verbose_length, verbose);
    assert!(rows.iter().filter(|r| r.adaptation_measure > 0.0).count() >= 20);
}

proptest! {
    #[test]
    fn tracker_matches_batch_burnin(series in prop::collection::vec((-50.0f64..0.0, 1u64..5), 1..60), d in 1usize..6) {
        let mut chain = CompactChain::new(1);
        let mut tracker = BurninTracker::new(d);
        for (i, (l, w)) in series.iter().enumerate() {
            chain.push_unchecked(ChainRow::new(vec![i as f64], *l, *w)).unwrap();
            tracker.observe(chain.rows());
            prop_assert_eq!(tracker.location(), burnin_location(&series[..=i], d));
        }
    }
}
