use hhcs::coherence::{System, SystemKind};
use hhcs::indexing::{build_levels, PartitionKind};
use hhcs::sampling::{
    draw_sample, draw_sample_stream, mds_allocate, measure, measure_adjoint, sampling_mask, uds_pmf,
    vds_pmf, SampleSet, SamplingPlan,
};
use hhcs::transforms::fwht;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pmf_of(plan: &SamplingPlan) -> &[f64] {
    match plan {
        SamplingPlan::Density { pmf, .. } => pmf,
        _ => panic!("not a density plan"),
    }
}

#[test]
fn vds_pmfs_are_valid() {
    for system in [System::HadDhw1d, System::Had2Idhw, System::Had2Adhw] {
        let max_r = if system.is_2d() { 6 } else { 12 };
        for r in 1..=max_r {
            let sys = SystemKind::new(system, r);
            let plan = vds_pmf(sys);
            let pmf = pmf_of(&plan);
            let total: f64 = pmf.iter().sum();
            assert!((total - 1.0).abs() <= 1e-12, "{system:?} r={r}");
            assert!(pmf.iter().all(|&p| p > 0.0));
            if system == System::HadDhw1d {
                // constant within a level, non-increasing across levels
                for level in sys.partition().levels {
                    assert!(level.iter().all(|&i| pmf[i - 1] == pmf[level[0] - 1]));
                }
                assert!(pmf.windows(2).all(|w| w[1] <= w[0]));
            }
        }
    }
    assert_eq!(pmf_of(&uds_pmf(8)), &[0.125; 8]);
}

#[test]
fn vds_frequencies_match_pmf() {
    let sys = SystemKind::new(System::HadDhw1d, 5);
    let plan = vds_pmf(sys);
    let pmf = pmf_of(&plan);
    let draws = 1_000_000;
    let sample = draw_sample(&plan, draws, 31).unwrap();
    let counts = sample.counts(32).unwrap();
    for (i, (&c, &p)) in counts.iter().zip(pmf).enumerate() {
        let expected = draws as f64 * p;
        let se = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((c as f64 - expected).abs() <= 3.0 * se, "bin {}: {c} vs {expected}", i + 1);
    }
    for (&w, &d) in sample.omega.iter().zip(&sample.weights) {
        assert_eq!(d, 1.0 / pmf[w - 1].sqrt());
    }
}

#[test]
fn draws_are_reproducible() {
    let plan = uds_pmf(8);
    let a = draw_sample(&plan, 4, 1).unwrap();
    assert_eq!(a, draw_sample(&plan, 4, 1).unwrap());
    assert_eq!(a.to_csv(), draw_sample(&plan, 4, 1).unwrap().to_csv());
    // different seeds and streams give different sets in practice
    let b = draw_sample(&plan, 64, 2).unwrap();
    assert_ne!(draw_sample(&plan, 64, 1).unwrap().omega, b.omega);
    assert_ne!(draw_sample_stream(&plan, 64, 2, 1).unwrap().omega, b.omega);
}

#[test]
fn exhaustive_mds_hits_everything_once() {
    let partition = build_levels(PartitionKind::Iso2d, 3);
    let plan = SamplingPlan::Multilevel { m: partition.sizes(), partition: partition.clone() };
    let sample = draw_sample(&plan, 64, 9).unwrap();
    assert_eq!(sample.counts(64).unwrap(), vec![1; 64]);
    assert!(sample.weights.iter().all(|&w| w == 1.0));
}

#[test]
fn mds_draws_are_distinct_within_levels() {
    let partition = build_levels(PartitionKind::Dyadic1d, 6);
    let m = vec![1, 1, 1, 3, 5, 7, 9];
    let plan = SamplingPlan::Multilevel { m: m.clone(), partition: partition.clone() };
    let sample = draw_sample(&plan, 27, 4).unwrap();
    let lookup = partition.level_lookup();
    let mut per_level = vec![0; m.len()];
    for &w in &sample.omega {
        per_level[lookup[w]] += 1;
    }
    assert_eq!(per_level, m);
    assert!(sample.counts(64).unwrap().iter().all(|&c| c <= 1));
    let too_many = SamplingPlan::Multilevel { m: vec![2, 0, 0, 0, 0, 0, 0], partition };
    assert_eq!(draw_sample(&too_many, 2, 1).unwrap_err().category(), "infeasible");
}

#[test]
fn identity_enumeration_measures_the_transform() {
    let sys = SystemKind::new(System::HadDhw1d, 4);
    let plan = SamplingPlan::Multilevel { m: sys.partition().sizes(), partition: sys.partition() };
    let mut sample = draw_sample(&plan, 16, 0).unwrap();
    sample.omega = (1..=16).collect();
    let x: Vec<f64> = (0..16).map(|i| i as f64).collect();
    assert_eq!(measure(sys, &sample, &x).unwrap(), fwht(&x).unwrap());
}

#[test]
fn adjoint_identity_with_duplicates() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for system in [System::HadDhw1d, System::Had2Idhw, System::Had2Adhw] {
        let sys = SystemKind::new(system, 3);
        let n = sys.n_total();
        let plan = vds_pmf(sys);
        let sample = draw_sample(&plan, 3 * n / 2, 3).unwrap();
        assert!(sample.counts(n).unwrap().iter().any(|&c| c > 1));
        for _ in 0..10 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..sample.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ax = measure(sys, &sample, &x).unwrap();
            let atv = measure_adjoint(sys, &sample, &v).unwrap();
            let lhs: f64 = ax.iter().zip(&v).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&atv).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }
}

#[test]
fn distinct_rows_are_orthonormal() {
    let sys = SystemKind::new(System::Had2Idhw, 3);
    let partition = sys.partition();
    let plan = SamplingPlan::Multilevel { m: vec![1, 2, 5, 12], partition };
    let sample: SampleSet = draw_sample(&plan, 20, 12).unwrap();
    let y: Vec<f64> = (0..20).map(|i| i as f64 - 3.5).collect();
    let back = measure(sys, &sample, &measure_adjoint(sys, &sample, &y).unwrap()).unwrap();
    for (a, b) in y.iter().zip(&back) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn mask_marks_drawn_rows() {
    let sys = SystemKind::new(System::Had2Adhw, 2);
    let mut sample = draw_sample(&uds_pmf(16), 1, 0).unwrap();
    sample.omega = vec![2];
    // index 2 is row 2, column 1 of the 4x4 grid
    let (w, h, px) = sampling_mask(sys, &sample).unwrap();
    assert_eq!((w, h), (4, 4));
    assert_eq!(px.iter().filter(|&&p| p == 255).count(), 1);
    assert_eq!(px[4], 255);
}

proptest! {
    #[test]
    fn allocation_conserves_and_caps(r in 1u32..7, seed in 0u64..1000, frac in 0.0f64..=1.0) {
        let partition = build_levels(PartitionKind::Dyadic1d, r);
        let sizes = partition.sizes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut k: Vec<usize> = sizes.iter().map(|&s| rng.random_range(0..=s)).collect();
        if k.iter().all(|&v| v == 0) {
            k[0] = 1;
        }
        let m_total = (frac * partition.total() as f64).round() as usize;
        let SamplingPlan::Multilevel { m, .. } = mds_allocate(&k, m_total, &partition).unwrap() else {
            unreachable!()
        };
        prop_assert_eq!(m.iter().sum::<usize>(), m_total);
        for (mt, s) in m.iter().zip(&sizes) {
            prop_assert!(mt <= s);
        }
        let big_k: usize = k.iter().sum();
        let same = mds_allocate(&k, big_k, &partition).unwrap();
        let SamplingPlan::Multilevel { m: exact, .. } = same else { unreachable!() };
        prop_assert_eq!(exact, k);
    }
}
