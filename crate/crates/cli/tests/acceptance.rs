//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p hhcs-cli --test acceptance` (add `--release` for
//! realistic timings).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hhcs::coherence::{local_coherence, multilevel_coherence, structure_check, Mode, System, SystemKind};
use hhcs::indexing::{dyadic_below, dyadic_level, flatten_cartesian};
use hhcs::recovery::{me_reconstruct, solve_bpdn, RecoveryProblem};
use hhcs::sampling::{
    draw_sample_stream, measure, trial_rng, uds_pmf, vds_pmf, SampleSet, SamplingPlan, Strategy, RNG_ID,
};
use hhcs::signals::{generate, l2, make_noise, mean_sre_db, trial_error, SignalSpec};
use hhcs::transforms::{apply, dense_basis, haar_matrix, hadamard_matrix, window_matrix, Basis, BasisKind, Direction};
use hhcs_cli::config::ExperimentConfig;
use hhcs_cli::experiment::run_experiment;
use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use ndarray::{Array1, Array2};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant, detail: String) -> Outcome {
    let took = start.elapsed();
    if took > limit {
        Err(format!("{detail}; took {took:.1?} > {limit:?}"))
    } else {
        Ok(detail)
    }
}

fn systems() -> Vec<SystemKind> {
    let mut out: Vec<SystemKind> = (1..=6).map(|r| SystemKind::new(System::HadDhw1d, r)).collect();
    for system in [System::Had2Idhw, System::Had2Adhw] {
        out.extend((1..=4).map(|r| SystemKind::new(system, r)));
    }
    out
}

fn expected_sum_sq(sys: SystemKind) -> f64 {
    let r = sys.r as f64;
    match sys.system {
        System::HadDhw1d => r + 1.0,
        System::Had2Idhw => 3.0 * r + 1.0,
        System::Had2Adhw => (r + 1.0) * (r + 1.0),
    }
}

fn coherence_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut bitwise = true;
    let mut sums_ok = true;
    for sys in systems() {
        let closed = local_coherence(sys, Mode::Closed).map_err(|e| e.to_string())?;
        let brute = local_coherence(sys, Mode::Brute).map_err(|e| e.to_string())?;
        for (a, b) in closed.values.iter().zip(&brute.values) {
            worst = worst.max((a - b).abs());
            bitwise &= a.to_bits() == b.to_bits();
        }
        let sum: f64 = brute.values.iter().map(|v| v * v).sum();
        sums_ok &= (sum - expected_sum_sq(sys)).abs() <= 1e-12;
    }
    let at_n8: Vec<f64> = [System::HadDhw1d, System::Had2Idhw, System::Had2Adhw]
        .iter()
        .map(|&s| local_coherence(SystemKind::new(s, 3), Mode::Brute).unwrap().values.iter().map(|v| v * v).sum())
        .collect();
    let n8_ok = at_n8.iter().zip([4.0, 10.0, 16.0]).all(|(a, b)| (a - b).abs() <= 1e-12);
    let detail = format!("max |closed - brute| = {worst:e}, bitwise = {bitwise}, N = 8 sums = {at_n8:?}");
    check(worst <= 1e-13 && sums_ok && n8_ok, detail.clone())?;
    within(Duration::from_secs(10), start, detail)
}

fn block_structure() -> Outcome {
    let start = Instant::now();
    let mut cases: Vec<SystemKind> = (1..=8).map(|r| SystemKind::new(System::HadDhw1d, r)).collect();
    for system in [System::Had2Idhw, System::Had2Adhw] {
        cases.extend((1..=4).map(|r| SystemKind::new(system, r)));
    }
    let (mut off, mut mag, mut pat) = (0.0f64, 0.0f64, 0.0f64);
    let mut all = true;
    for sys in cases {
        let report = structure_check(sys).map_err(|e| e.to_string())?;
        off = off.max(report.worst_off_diagonal);
        mag = mag.max(report.worst_magnitude);
        pat = pat.max(report.worst_pattern);
        all &= report.passes(1e-12);
    }
    let detail = format!("off-diagonal {off:e}, magnitude {mag:e}, pattern {pat:e}");
    check(all, detail.clone())?;
    within(Duration::from_secs(30), start, detail)
}

fn multilevel_exactness() -> Outcome {
    let mut mismatches = 0;
    let mut off_nonzero = 0;
    for sys in systems() {
        let closed = multilevel_coherence(sys, Mode::Closed).map_err(|e| e.to_string())?.values;
        let brute = multilevel_coherence(sys, Mode::Brute).map_err(|e| e.to_string())?.values;
        mismatches += closed.iter().zip(&brute).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
        off_nonzero += brute.indexed_iter().filter(|((t, l), v)| t != l && **v != 0.0).count();
    }
    check(
        mismatches == 0 && off_nonzero == 0,
        format!("{mismatches} closed/brute mismatches, {off_nonzero} nonzero off-diagonal entries"),
    )
}

const BASES: [Basis; 5] = [Basis::Hadamard1d, Basis::Hadamard2d, Basis::Dhw, Basis::Adhw, Basis::Idhw];

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `((matrix, column), (matrix, column))` of the separable factors of each
/// 2-D basis element; matrices 0 = window, 1 = wavelet, 2 = Hadamard.
fn separable_columns(basis: Basis, r: u32) -> Vec<((usize, usize), (usize, usize))> {
    let n = 1usize << r;
    let mut cols = vec![((0, 0), (0, 0)); n * n];
    if basis == Basis::Idhw {
        for l in 1..=r {
            let tl = dyadic_level(l);
            let below = dyadic_below(l);
            for (ta, tb, s1, s2) in [(0, 1, &tl, &below), (1, 1, &tl, &tl), (1, 0, &below, &tl)] {
                let idx = flatten_cartesian(s1, s2, n, n).unwrap();
                let mut k = 0;
                for &pa in &tl {
                    for &pb in &tl {
                        cols[idx[k] - 1] = ((ta, pa - 1), (tb, pb - 1));
                        k += 1;
                    }
                }
            }
        }
    } else {
        let id = if basis == Basis::Adhw { 1 } else { 2 };
        for a in 0..n {
            for b in 0..n {
                cols[a * n + b] = ((id, a), (id, b));
            }
        }
    }
    cols
}

fn transform_correctness() -> Outcome {
    let mut rng = trial_rng(4, 0);
    let mut worst_orth = 0.0f64;
    let mut worst_fast = 0.0f64;
    let mut worst_round = 0.0f64;
    for basis in BASES {
        let max_r = if basis.is_2d() { 5 } else { 10 };
        for r in 0..=max_r {
            let kind = BasisKind::new(basis, r);
            let b = dense_basis(kind).map_err(|e| e.to_string())?;
            let gram = b.t().dot(&b) - Array2::<f64>::eye(b.nrows());
            worst_orth = worst_orth.max(gram.iter().fold(0.0, |m, v| m.max(v.abs())));
            let x: Vec<f64> = (0..kind.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let xa = Array1::from(x.clone());
            let fwd = apply(basis, Direction::Analysis, &x).unwrap();
            let inv = apply(basis, Direction::Synthesis, &x).unwrap();
            worst_fast = worst_fast.max(max_diff(&b.t().dot(&xa).to_vec(), &fwd) / l2(&x).max(1.0));
            worst_fast = worst_fast.max(max_diff(&b.dot(&xa).to_vec(), &inv) / l2(&x).max(1.0));
            let back = apply(basis, Direction::Synthesis, &fwd).unwrap();
            worst_round = worst_round.max(max_diff(&back, &x) / l2(&x).max(1.0));
        }
    }
    // 64 x 64 against the separable factorization
    let r = 6;
    let n = 1usize << r;
    let mats = [window_matrix(r).unwrap(), haar_matrix(r).unwrap(), hadamard_matrix(r).unwrap()];
    for basis in [Basis::Hadamard2d, Basis::Adhw, Basis::Idhw] {
        let x: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let img = Array2::from_shape_fn((n, n), |(i, j)| x[i + n * j]);
        let fast = apply(basis, Direction::Analysis, &x).unwrap();
        for (k, &((ia, a), (ib, b))) in separable_columns(basis, r).iter().enumerate() {
            let coef = mats[ib].column(b).dot(&img.dot(&mats[ia].column(a)));
            worst_fast = worst_fast.max((coef - fast[k]).abs() / l2(&x));
        }
        let back = apply(basis, Direction::Synthesis, &fast).unwrap();
        worst_round = worst_round.max(max_diff(&back, &x) / l2(&x));
    }
    // window and wavelet columns written out from support and sign
    let mut column_mismatch = 0;
    for r in 0..=10u32 {
        for (a, w) in [(0, window_matrix(r).unwrap()), (1, haar_matrix(r).unwrap())] {
            let len = 1usize << r;
            let scale0 = 0.5f64.powi(r as i32).sqrt();
            column_mismatch += w.column(0).iter().filter(|&&v| v != scale0).count();
            for l in 1..=r {
                let width = 1usize << (r - l + 1);
                let m = 0.5f64.powi((r - l + 1) as i32).sqrt();
                for (p, &col) in dyadic_level(l).iter().enumerate() {
                    for tau in 0..len {
                        let expected = if tau < p * width || tau >= (p + 1) * width {
                            0.0
                        } else if a == 1 && tau >= p * width + width / 2 {
                            -m
                        } else {
                            m
                        };
                        column_mismatch += (w[[tau, col - 1]] != expected) as usize;
                    }
                }
            }
        }
    }
    check(
        worst_orth <= 1e-10 && worst_fast <= 1e-10 && worst_round <= 1e-10 && column_mismatch == 0,
        format!(
            "orthonormality {worst_orth:e}, fast vs dense {worst_fast:e}, round trip {worst_round:e}, \
             {column_mismatch} column entries off"
        ),
    )
}

fn exact_sparse_recovery() -> Outcome {
    let start = Instant::now();
    let sys = SystemKind::new(System::HadDhw1d, 8);
    let plan = vds_pmf(sys);
    let mut recovered = 0;
    let mut errors = Vec::new();
    for seed in 0..50u64 {
        let mut rng = trial_rng(seed, 1);
        let x = generate(&SignalSpec::SparseHaar { k: 8 }, sys, &mut rng).map_err(|e| e.to_string())?;
        let sample = draw_sample_stream(&plan, 128, seed, 0).map_err(|e| e.to_string())?;
        let y = measure(sys, &sample, &x).unwrap();
        let report = solve_bpdn(&RecoveryProblem::new(sys, &sample, &y, 0.0)).map_err(|e| e.to_string())?;
        let err = l2(&x.iter().zip(&report.x_hat).map(|(a, b)| a - b).collect::<Vec<_>>()) / l2(&x);
        recovered += (err <= 1e-4) as usize;
        errors.push(err);
    }
    errors.sort_by(f64::total_cmp);
    let detail = format!("{recovered}/50 within 1e-4 (need 48), median relative error {:.3e}", errors[25]);
    check(recovered >= 48, detail.clone())?;
    within(Duration::from_secs(120), start, detail)
}

fn strategy_ordering() -> Outcome {
    let start = Instant::now();
    let mut config = ExperimentConfig::gaussian();
    config.ratios = vec![0.2];
    config.trials = 20;
    let report = run_experiment(&config, 0).map_err(|e| e.to_string())?;
    let sre = |s| report.mean_cs_sre(s, 0.2).unwrap();
    let (uds, vds, mds) = (sre(Strategy::Uds), sre(Strategy::Vds), sre(Strategy::Mds));
    let detail = format!("UDS {uds:.2} dB, VDS {vds:.2} dB, MDS {mds:.2} dB");
    check(vds >= uds + 5.0 && mds >= vds + 2.0, detail.clone())?;
    within(Duration::from_secs(600), start, detail)
}

fn full_sample(n: usize) -> SampleSet {
    SampleSet {
        strategy: Strategy::Mds,
        omega: (1..=n).collect(),
        weights: vec![1.0; n],
        rng: RNG_ID.into(),
        seed: 0,
        stream: 0,
    }
}

fn me_identity() -> Outcome {
    let cases = [
        (SystemKind::new(System::HadDhw1d, 9), SignalSpec::GaussianBump { sigma: 64.0, i0: None }),
        (SystemKind::new(System::Had2Idhw, 6), SignalSpec::SheppLogan),
        (SystemKind::new(System::Had2Adhw, 6), SignalSpec::SheppLogan),
    ];
    let mut noiseless = f64::INFINITY;
    let mut noisy = Vec::new();
    for (c, (sys, spec)) in cases.iter().enumerate() {
        let n = sys.n_total();
        let sample = full_sample(n);
        let mut rng = trial_rng(7, c as u64);
        let x = generate(spec, *sys, &mut rng).unwrap();
        let y = measure(*sys, &sample, &x).unwrap();
        let clean = trial_error(&x, &me_reconstruct(*sys, &sample, &y).unwrap()).unwrap();
        noiseless = noiseless.min(clean.sre_db);
        let ratios: Vec<f64> = (0..10)
            .map(|_| {
                let noise = make_noise(&x, n, Some(20.0), &mut rng);
                let y: Vec<f64> = y.iter().zip(&noise.values).map(|(a, b)| a + b).collect();
                trial_error(&x, &me_reconstruct(*sys, &sample, &y).unwrap()).unwrap().ratio
            })
            .collect();
        noisy.push(mean_sre_db(&ratios));
    }
    check(
        noiseless >= 240.0 && noisy.iter().all(|s| (s - 20.0).abs() <= 1.0),
        format!("noiseless min {noiseless:.1} dB, SNR 20 runs {noisy:.3?} dB"),
    )
}

/// `Σ values - 1`, with the sum formed exactly in 2^-90 fixed point.
fn exact_sum_minus_one(values: &[f64]) -> f64 {
    const SHIFT: i32 = 90;
    let mut acc: i128 = 0;
    for &v in values {
        let scaled = v * 2f64.powi(SHIFT);
        assert!(scaled.fract() == 0.0 && scaled < 2f64.powi(120), "{v} not representable");
        acc += scaled as i128;
    }
    (acc - (1i128 << SHIFT)) as f64 / 2f64.powi(SHIFT)
}

fn pmf_validity() -> Outcome {
    let mut worst = 0.0f64;
    for system in [System::HadDhw1d, System::Had2Idhw, System::Had2Adhw] {
        let max_r = if system.is_2d() { 8 } else { 16 };
        for r in 1..=max_r {
            let SamplingPlan::Density { pmf, .. } = vds_pmf(SystemKind::new(system, r)) else {
                return Err("vds plan is not a pmf".into());
            };
            worst = worst.max(exact_sum_minus_one(&pmf).abs());
        }
    }
    let SamplingPlan::Density { pmf, .. } = vds_pmf(SystemKind::new(System::HadDhw1d, 3)) else { unreachable!() };
    let expected = [0.25, 0.25, 0.125, 0.125, 0.0625, 0.0625, 0.0625, 0.0625];
    let exact = pmf == expected;
    check(worst <= 1e-12 && exact, format!("max |sum - 1| = {worst:e}, N = 8 pmf exact = {exact}"))
}

/// Basis pursuit in signal space as a linear program over `(u, t)`.
fn lp_objective(sys: SystemKind, sample: &SampleSet, y: &[f64]) -> f64 {
    let phi = dense_basis(sys.sensing()).unwrap();
    let psi = dense_basis(sys.sparsity()).unwrap();
    let n = sys.n_total();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let u: Vec<_> = (0..n).map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    let t: Vec<_> = (0..n).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    for i in 0..n {
        let mut upper = LinearExpr::empty();
        let mut lower = LinearExpr::empty();
        for k in 0..n {
            upper.add(u[k], psi[[k, i]]);
            lower.add(u[k], psi[[k, i]]);
        }
        upper.add(t[i], -1.0);
        lower.add(t[i], 1.0);
        lp.add_constraint(upper, ComparisonOp::Le, 0.0);
        lp.add_constraint(lower, ComparisonOp::Ge, 0.0);
    }
    let mut seen = std::collections::BTreeSet::new();
    for (&w, &v) in sample.omega.iter().zip(y) {
        if seen.insert(w) {
            let mut row = LinearExpr::empty();
            for k in 0..n {
                row.add(u[k], phi[[k, w - 1]]);
            }
            lp.add_constraint(row, ComparisonOp::Eq, v);
        }
    }
    lp.solve().expect("feasible LP").objective()
}

fn solver_oracle() -> Outcome {
    let systems = [
        SystemKind::new(System::HadDhw1d, 3),
        SystemKind::new(System::HadDhw1d, 4),
        SystemKind::new(System::Had2Idhw, 2),
        SystemKind::new(System::Had2Adhw, 2),
    ];
    let mut rng = trial_rng(99, 0);
    let mut worst = 0.0f64;
    for instance in 0..25u64 {
        let sys = systems[instance as usize % systems.len()];
        let n = sys.n_total();
        let plan = if instance % 2 == 0 { vds_pmf(sys) } else { uds_pmf(n) };
        let sample = draw_sample_stream(&plan, rng.random_range(n / 4..=n / 2), 5, instance).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = measure(sys, &sample, &x).unwrap();
        let report = solve_bpdn(&RecoveryProblem::new(sys, &sample, &y, 0.0)).map_err(|e| e.to_string())?;
        let lp = lp_objective(sys, &sample, &y);
        worst = worst.max((report.objective - lp).abs() / lp);
    }
    check(worst <= 1e-6, format!("max relative objective gap {worst:e} over 25 instances"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = ExperimentConfig::gaussian();
    config.r = 7;
    config.ratios = vec![0.1, 0.3];
    config.trials = 6;
    config.seed = 2024;
    config.signal = SignalSpec::GaussianBump { sigma: 16.0, i0: None };
    let mut outputs = Vec::new();
    for (threads, run) in [(1, 0), (1, 1), (8, 0), (8, 1)] {
        let out = dir.path().join(format!("t{threads}_{run}"));
        run_experiment(&config, threads).map_err(|e| e.to_string())?.write(&out).map_err(|e| e.to_string())?;
        let read = |f: &str| std::fs::read(out.join(f)).unwrap();
        outputs.push((read("trials.csv"), read("summary.csv")));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    check(same, format!("4 runs (1 and 8 threads) byte-identical = {same}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("coherence exactness", coherence_exactness),
        ("block structure", block_structure),
        ("multilevel coherence", multilevel_exactness),
        ("transform correctness", transform_correctness),
        ("exact sparse recovery", exact_sparse_recovery),
        ("strategy ordering", strategy_ordering),
        ("ME full-sampling identity", me_identity),
        ("pmf validity", pmf_validity),
        ("solver LP equivalence", solver_oracle),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{took:.2?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{took:.2?}]", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
