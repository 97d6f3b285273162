//! Monte-Carlo runs over measurement ratios, strategies and trials.

use std::fmt::Write as _;
use std::path::Path;

use hhcs::coherence::SystemKind;
use hhcs::io::fmt_f64;
use hhcs::recovery::{me_reconstruct, solve_bpdn, RecoveryProblem};
use hhcs::sampling::{
    draw_sample_stream, mds_allocate, measure, trial_rng, uds_pmf, vds_pmf, SamplingPlan, Strategy, RNG_ID,
};
use hhcs::signals::{effective_sparsity, generate, make_noise, mean_sre_db, trial_error};
use hhcs::transforms::{apply, Direction};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, SparsitySource};
use crate::error::{CliError, CliResult};

/// What a random stream is used for. Streams are `purpose | ratio | strategy | trial`
/// packed into 64 bits, so every draw has its own non-overlapping stream.
#[derive(Debug, Clone, Copy)]
enum Purpose {
    Pregenerate = 1,
    Signal = 2,
    Sample = 3,
    Noise = 4,
}

fn stream_id(purpose: Purpose, ratio: usize, strategy: usize, trial: usize) -> u64 {
    ((purpose as u64) << 60) | ((ratio as u64) << 40) | ((strategy as u64) << 32) | trial as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub ratio: f64,
    pub m: usize,
    pub strategy: Strategy,
    pub trial: usize,
    pub cs_ratio: f64,
    pub cs_sre_db: f64,
    pub cs_exact: bool,
    pub me_ratio: f64,
    pub me_sre_db: f64,
    pub me_exact: bool,
    pub converged: bool,
    pub iterations: usize,
    pub feasibility_residual: f64,
    pub objective: f64,
    pub epsilon: f64,
    pub distinct: usize,
    pub sample_stream: u64,
    /// Draws per level for MDS, empty otherwise.
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub ratio: f64,
    pub m: usize,
    pub strategy: Strategy,
    pub trials: usize,
    pub cs_mean_sre_db: f64,
    pub me_mean_sre_db: f64,
    pub converged: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportMeta {
    pub library_version: &'static str,
    pub rng: &'static str,
    /// Per-level sparsities used by every MDS trial (worst-case source only).
    pub worst_case_k: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub meta: ReportMeta,
    pub trials: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

pub fn measurement_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64).round() as usize).clamp(1, n)
}

/// Per-level maximum of the effective sparsities of independently drawn signals.
fn worst_case_k(config: &ExperimentConfig, system: SystemKind, count: usize) -> CliResult<Vec<usize>> {
    let partition = system.partition();
    let mut worst = vec![0; partition.len()];
    for j in 0..count {
        let mut rng = trial_rng(config.seed, stream_id(Purpose::Pregenerate, 0, 0, j));
        let x = generate(&config.signal, system, &mut rng)?;
        let s = apply(system.sparsity().basis, Direction::Analysis, &x)?;
        let eff = effective_sparsity(&s, config.rho, &partition)?;
        for (w, k) in worst.iter_mut().zip(eff.k) {
            *w = (*w).max(k);
        }
    }
    Ok(worst)
}

struct Job {
    ratio_idx: usize,
    strategy_idx: usize,
    trial: usize,
}

fn run_trial(
    config: &ExperimentConfig,
    system: SystemKind,
    signal: &[f64],
    worst_k: Option<&[usize]>,
    density_plans: &[Option<SamplingPlan>],
    job: &Job,
) -> CliResult<TrialRecord> {
    let n = system.n_total();
    let ratio = config.ratios[job.ratio_idx];
    let strategy = config.strategies[job.strategy_idx];
    let m = measurement_count(ratio, n);
    let plan = match &density_plans[job.strategy_idx] {
        Some(plan) => plan.clone(),
        None => {
            let partition = system.partition();
            let k = match worst_k {
                Some(k) => k.to_vec(),
                None => {
                    let s = apply(system.sparsity().basis, Direction::Analysis, signal)?;
                    effective_sparsity(&s, config.rho, &partition)?.k
                }
            };
            mds_allocate(&k, m, &partition)?
        }
    };
    let levels = match &plan {
        SamplingPlan::Multilevel { m, .. } => m.clone(),
        SamplingPlan::Density { .. } => Vec::new(),
    };
    let sample_stream = stream_id(Purpose::Sample, job.ratio_idx, job.strategy_idx, job.trial);
    let sample = draw_sample_stream(&plan, m, config.seed, sample_stream)?;
    // noise depends on the ratio and trial only, so strategies see the same draw
    let mut noise_rng = trial_rng(config.seed, stream_id(Purpose::Noise, job.ratio_idx, 0, job.trial));
    let noise = make_noise(signal, m, config.snr_db, &mut noise_rng);
    let y: Vec<f64> = measure(system, &sample, signal)?.iter().zip(&noise.values).map(|(a, b)| a + b).collect();
    let epsilon = if strategy.is_weighted() { noise.weighted_norm(&sample.weights) } else { noise.norm() };

    let mut problem = RecoveryProblem::new(system, &sample, &y, epsilon);
    problem.tolerances = config.tolerances;
    let report = solve_bpdn(&problem)?;
    let cs = trial_error(signal, &report.x_hat)?;
    let me = trial_error(signal, &me_reconstruct(system, &sample, &y)?)?;
    let distinct = sample.counts(n)?.iter().filter(|&&c| c > 0).count();
    Ok(TrialRecord {
        ratio,
        m,
        strategy,
        trial: job.trial,
        cs_ratio: cs.ratio,
        cs_sre_db: cs.sre_db,
        cs_exact: cs.exact,
        me_ratio: me.ratio,
        me_sre_db: me.sre_db,
        me_exact: me.exact,
        converged: report.converged,
        iterations: report.iterations,
        feasibility_residual: report.feasibility_residual,
        objective: report.objective,
        epsilon,
        distinct,
        sample_stream,
        levels,
    })
}

/// Runs every (ratio, strategy, trial) triple on a pool of `threads`
/// workers (0 = rayon's default). Results do not depend on `threads`.
pub fn run_experiment(config: &ExperimentConfig, threads: usize) -> CliResult<ExperimentReport> {
    config.validate()?;
    let system = config.system_kind();
    let n = system.n_total();

    let worst_k = match config.sparsity_source {
        SparsitySource::WorstCase { pregenerated } if config.strategies.contains(&Strategy::Mds) => {
            Some(worst_case_k(config, system, pregenerated)?)
        }
        _ => None,
    };
    let signals = (0..config.trials)
        .map(|e| {
            let mut rng = trial_rng(config.seed, stream_id(Purpose::Signal, 0, 0, e));
            generate(&config.signal, system, &mut rng)
        })
        .collect::<hhcs::Result<Vec<_>>>()?;
    let density_plans: Vec<Option<SamplingPlan>> = config
        .strategies
        .iter()
        .map(|s| match s {
            Strategy::Uds => Some(uds_pmf(n)),
            Strategy::Vds => Some(vds_pmf(system)),
            Strategy::Mds => None,
        })
        .collect();

    let mut jobs = Vec::new();
    for ratio_idx in 0..config.ratios.len() {
        for strategy_idx in 0..config.strategies.len() {
            for trial in 0..config.trials {
                jobs.push(Job { ratio_idx, strategy_idx, trial });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let trials: Vec<TrialRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|job| run_trial(config, system, &signals[job.trial], worst_k.as_deref(), &density_plans, job))
            .collect::<CliResult<Vec<_>>>()
    })?;

    let summary = trials
        .chunks(config.trials)
        .map(|group| {
            let cs: Vec<f64> = group.iter().map(|t| t.cs_ratio).collect();
            let me: Vec<f64> = group.iter().map(|t| t.me_ratio).collect();
            SummaryRow {
                ratio: group[0].ratio,
                m: group[0].m,
                strategy: group[0].strategy,
                trials: group.len(),
                cs_mean_sre_db: mean_sre_db(&cs),
                me_mean_sre_db: mean_sre_db(&me),
                converged: group.iter().filter(|t| t.converged).count(),
            }
        })
        .collect();
    Ok(ExperimentReport {
        config: config.clone(),
        meta: ReportMeta { library_version: hhcs::VERSION, rng: RNG_ID, worst_case_k: worst_k },
        trials,
        summary,
    })
}

pub const TRIALS_HEADER: &str = "ratio,m,strategy,trial,cs_ratio,cs_sre_db,cs_exact,me_ratio,me_sre_db,me_exact,\
converged,iterations,feasibility_residual,objective,epsilon,distinct,sample_stream,levels";

pub const SUMMARY_HEADER: &str = "ratio,m,strategy,trials,cs_mean_sre_db,me_mean_sre_db,converged";

impl ExperimentReport {
    pub fn trials_csv(&self) -> String {
        let mut out = format!("{TRIALS_HEADER}\n");
        for t in &self.trials {
            let levels: Vec<String> = t.levels.iter().map(|m| m.to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                fmt_f64(t.ratio),
                t.m,
                t.strategy.name(),
                t.trial + 1,
                fmt_f64(t.cs_ratio),
                fmt_f64(t.cs_sre_db),
                t.cs_exact as u8,
                fmt_f64(t.me_ratio),
                fmt_f64(t.me_sre_db),
                t.me_exact as u8,
                t.converged as u8,
                t.iterations,
                fmt_f64(t.feasibility_residual),
                fmt_f64(t.objective),
                fmt_f64(t.epsilon),
                t.distinct,
                t.sample_stream,
                levels.join(";"),
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt_f64(s.ratio),
                s.m,
                s.strategy.name(),
                s.trials,
                fmt_f64(s.cs_mean_sre_db),
                fmt_f64(s.me_mean_sre_db),
                s.converged,
            );
        }
        out
    }

    pub fn meta_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        s.push('\n');
        s
    }

    /// Writes `trials.csv`, `summary.csv`, `config.json` and `meta.json`.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let files = [
            ("trials.csv", self.trials_csv()),
            ("summary.csv", self.summary_csv()),
            ("config.json", self.config.to_json()),
            ("meta.json", self.meta_json()),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| CliError::io(path, e))?;
        }
        Ok(())
    }

    pub fn mean_cs_sre(&self, strategy: Strategy, ratio: f64) -> Option<f64> {
        self.summary.iter().find(|s| s.strategy == strategy && s.ratio == ratio).map(|s| s.cs_mean_sre_db)
    }
}
