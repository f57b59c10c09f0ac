use paradram_core::linalg::Matrix;
use paradram_core::parallel::{fit_geometric, predict_speedup, recommend_workers, truncated_geometric_pmf, ContributionTally};
use paradram_core::proposal::{adaptation_measure, ProposalState};
use paradram_core::refine::{estimate_iac, ks_two_sample};
use proptest::prelude::*;

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, 8..400)
}

proptest! {
    #[test]
    fn iac_is_at_least_one_and_affine_invariant(x in series(), a in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0], b in -1e3f64..1e3) {
        let t = estimate_iac(&x, None).unwrap();
        prop_assert!(t >= 1.0);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let u = estimate_iac(&y, None).unwrap();
        prop_assert!((t - u).abs() <= 1e-9 * t, "{} vs {}", t, u);
    }

    #[test]
    fn weights_expand(x in prop::collection::vec(-5.0f64..5.0, 4..50), w in prop::collection::vec(1u64..4, 50)) {
        let w = &w[..x.len()];
        let expanded: Vec<f64> = x.iter().zip(w).flat_map(|(v, k)| std::iter::repeat_n(*v, *k as usize)).collect();
        prop_assume!(expanded.len() >= 8);
        prop_assert_eq!(estimate_iac(&x, Some(w)).unwrap(), estimate_iac(&expanded, None).unwrap());
    }

    #[test]
    fn ks_symmetric_and_monotone_invariant(a in prop::collection::vec(-3.0f64..3.0, 1..80), b in prop::collection::vec(-3.0f64..3.0, 1..80)) {
        let ab = ks_two_sample(&a, &b).unwrap();
        let ba = ks_two_sample(&b, &a).unwrap();
        prop_assert_eq!(ab.statistic, ba.statistic);
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert!((0.0..=1.0).contains(&ab.statistic) && (0.0..=1.0).contains(&ab.p_value));
        let f = |v: &f64| v.exp() + v * v * v;
        let fa: Vec<f64> = a.iter().map(f).collect();
        let fb: Vec<f64> = b.iter().map(f).collect();
        prop_assert_eq!(ks_two_sample(&fa, &fb).unwrap().statistic, ab.statistic);
    }

    #[test]
    fn speedup_curve_shape(p in 0.001f64..1.0) {
        prop_assert_eq!(predict_speedup(p, 1), 1.0);
        let mut prev = 1.0;
        let mut prev_gain = f64::INFINITY;
        for w in 2..=512u32 {
            let s = predict_speedup(p, w);
            prop_assert!(s >= prev && s <= 1.0 / p * (1.0 + 1e-12));
            let gain = s - prev;
            prop_assert!(gain <= prev_gain + 1e-12);
            prev_gain = gain;
            prev = s;
        }
        let r = recommend_workers(p, 0.05);
        prop_assert!(r >= 1);
    }

    #[test]
    fn fit_recovers_expected_tally(p in 0.02f64..0.98, workers in 2u32..64) {
        let counts: Vec<u64> = truncated_geometric_pmf(p, workers).iter().map(|q| (q * 1e9).round() as u64).collect();
        let fit = fit_geometric(&ContributionTally::new(counts).unwrap()).unwrap();
        prop_assert!((fit - p).abs() < 1e-6, "{} vs {}", fit, p);
    }

    #[test]
    fn pmf_sums_to_one(p in 0.0f64..=1.0, workers in 1u32..200) {
        let s: f64 = truncated_geometric_pmf(p, workers).iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adaptation_measure_in_unit_interval(d in prop::collection::vec(0.01f64..100.0, 3), off in -0.9f64..0.9, s in 0.1f64..3.0) {
        let mut a = Matrix::identity(2);
        a[(0, 0)] = d[0];
        a[(1, 1)] = d[1];
        a[(0, 1)] = off * (d[0] * d[1]).sqrt();
        a[(1, 0)] = a[(0, 1)];
        let mut b = Matrix::identity(2);
        b[(0, 0)] = d[2];
        let pa = ProposalState::new(a, s, Vec::new()).unwrap();
        let pb = ProposalState::new(b, 1.0, Vec::new()).unwrap();
        let m = adaptation_measure(&pa, &pb).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
        prop_assert_eq!(adaptation_measure(&pa, &pa.clone()).unwrap(), 0.0);
    }
}
