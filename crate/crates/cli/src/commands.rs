//! Subcommands: thin wrappers over one library operation each.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hhcs::coherence::{local_coherence, multilevel_coherence, structure_check, Mode, System, SystemKind};
use hhcs::io::{column_csv, fmt_f64, image_to_gray, pgm};
use hhcs::recovery::{me_reconstruct, solve_bpdn, RecoveryProblem, Tolerances};
use hhcs::sampling::{
    draw_sample_stream, mds_allocate, measure, sampling_mask, uds_pmf, vds_pmf, SampleSet, Strategy, RNG_ID,
};
use hhcs::signals::{generate, trial_error, SignalSpec};
use hhcs::transforms::{apply, Basis, BasisKind, Direction};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiment::run_experiment;

#[derive(Debug, Parser)]
#[command(name = "hhcs", version, about = "Compressive sensing with Hadamard-Haar systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fast transform of a CSV signal.
    Transform(TransformArgs),
    /// Local or multilevel coherence of a system.
    Coherence(CoherenceArgs),
    /// Verify the level block structure of the cross-Gram matrix.
    StructureCheck(StructureArgs),
    /// Draw a sampling set.
    Sample(SampleArgs),
    /// Reconstruct a signal from sampled measurements.
    Recover(RecoverArgs),
    /// Monte-Carlo experiment from a JSON config or preset.
    Experiment(ExperimentArgs),
    /// Generate a test signal or image.
    Signal(SignalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SystemArgs {
    /// had_dhw_1d, had2_idhw or had2_adhw.
    #[arg(long, value_parser = parse_from_str::<System>)]
    pub system: System,
    /// log2 of the signal side.
    #[arg(long)]
    pub r: u32,
}

impl SystemArgs {
    fn kind(&self) -> CliResult<SystemKind> {
        let max_r = if self.system.is_2d() { 12 } else { 24 };
        if self.r > max_r {
            return Err(CliError::Usage(format!("--r {} too large (max {max_r})", self.r)));
        }
        Ok(SystemKind::new(self.system, self.r))
    }
}

fn parse_from_str<T: std::str::FromStr<Err = hhcs::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: hhcs::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// hadamard1d, hadamard2d, dhw, adhw or idhw.
    #[arg(long, value_parser = parse_from_str::<Basis>)]
    pub basis: Basis,
    #[arg(long)]
    pub r: u32,
    /// Apply the synthesis (inverse) transform.
    #[arg(long)]
    pub inverse: bool,
    /// CSV whose last column holds the input vector.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoherenceArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// closed or brute.
    #[arg(long, default_value = "closed", value_parser = parse_from_str::<Mode>)]
    pub mode: Mode,
    /// Emit the multilevel coherence grid instead of local coherence.
    #[arg(long)]
    pub multilevel: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StructureArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// uds, vds or mds.
    #[arg(long, value_parser = parse_from_str::<Strategy>)]
    pub strategy: Strategy,
    /// Number of measurements.
    #[arg(long = "M")]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// Per-level sparsities for mds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Sample CSV as written by `sample`.
    #[arg(long)]
    pub sample: PathBuf,
    /// Strategy the sample was drawn with; decides the weighted constraint.
    #[arg(long, value_parser = parse_from_str::<Strategy>)]
    pub strategy: Strategy,
    /// Measurements, one per sample row (last CSV column).
    #[arg(long, conflicts_with = "signal", required_unless_present = "signal")]
    pub y: Option<PathBuf>,
    /// Ground-truth signal to measure noiselessly; also reports SRE.
    #[arg(long)]
    pub signal: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Minimal-energy reconstruction instead of l1 recovery.
    #[arg(long)]
    pub me: bool,
    #[arg(long, default_value_t = 20_000)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON config file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// gaussian or phantom.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory (overrides the config's out_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config's resolution.
    #[arg(long)]
    pub r: Option<u32>,
    /// Print the resolved config and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct SignalArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// gaussian_bump, blocks, bumps, heavisine, doppler, shepp_logan or sparse_haar.
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub i0: Option<f64>,
    /// Number of nonzero coefficients for sparse_haar.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Writes `body` to `dir/name` when an output directory is given, else to `stdout`.
fn emit(out: Option<&Path>, name: &str, body: &[u8], stdout: &mut dyn Write) -> CliResult<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| CliError::io(path, e))
        }
        None => stdout.write_all(body).map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn write_file(dir: &Path, name: &str, body: &[u8]) -> CliResult<()> {
    emit(Some(dir), name, body, &mut std::io::sink())
}

/// Data rows of a CSV file with a header line.
fn read_rows(path: &Path) -> CliResult<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|f| f.trim().to_string()).collect())
        .collect())
}

fn parse_field<T: std::str::FromStr>(path: &Path, row: usize, field: &str) -> CliResult<T> {
    field
        .parse()
        .map_err(|_| CliError::Usage(format!("{}: row {}: cannot parse '{field}'", path.display(), row + 2)))
}

/// Last column of every data row as `f64`.
pub fn read_vector(path: &Path) -> CliResult<Vec<f64>> {
    read_rows(path)?
        .iter()
        .enumerate()
        .map(|(i, row)| parse_field(path, i, row.last().map(String::as_str).unwrap_or("")))
        .collect()
}

/// Reads a `position,index,weight` sample file.
pub fn read_sample(path: &Path, strategy: Strategy) -> CliResult<SampleSet> {
    let mut omega = Vec::new();
    let mut weights = Vec::new();
    for (i, row) in read_rows(path)?.iter().enumerate() {
        if row.len() != 3 {
            return Err(CliError::Usage(format!("{}: row {}: expected 3 columns", path.display(), i + 2)));
        }
        omega.push(parse_field(path, i, &row[1])?);
        weights.push(parse_field(path, i, &row[2])?);
    }
    Ok(SampleSet { strategy, omega, weights, rng: RNG_ID.into(), seed: 0, stream: 0 })
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Transform(a) => transform(a, stdout),
        Command::Coherence(a) => coherence(a, stdout),
        Command::StructureCheck(a) => structure(a, stdout),
        Command::Sample(a) => sample(a, stdout),
        Command::Recover(a) => recover(a, stdout),
        Command::Experiment(a) => experiment(a, stdout),
        Command::Signal(a) => signal(a, stdout),
    }
}

fn transform(a: TransformArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let kind = BasisKind::new(a.basis, a.r);
    let x = read_vector(&a.input)?;
    if x.len() != kind.len() {
        return Err(hhcs::Error::Shape(format!("{} values for {} with r = {}", x.len(), a.basis.name(), a.r)).into());
    }
    let dir = if a.inverse { Direction::Synthesis } else { Direction::Analysis };
    let y = apply(a.basis, dir, &x)?;
    emit(a.out.as_deref(), "transform.csv", column_csv("value", &y).as_bytes(), stdout)
}

fn coherence(a: CoherenceArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let sys = a.system.kind()?;
    let body = if a.multilevel {
        let grid = multilevel_coherence(sys, a.mode)?.values;
        let mut out = String::from("t,l,mu\n");
        for ((t, l), v) in grid.indexed_iter() {
            let _ = writeln!(out, "{},{},{}", t + 1, l + 1, fmt_f64(*v));
        }
        out
    } else {
        column_csv("mu", &local_coherence(sys, a.mode)?.values)
    };
    emit(a.out.as_deref(), "coherence.csv", body.as_bytes(), stdout)
}

fn structure(a: StructureArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let sys = a.system.kind()?;
    let report = structure_check(sys)?;
    let pass = report.passes(a.tol);
    let summary = format!(
        "system,r,worst_off_diagonal,worst_magnitude,worst_pattern,pass\n{},{},{},{},{},{}\n",
        sys.system.name(),
        sys.r,
        fmt_f64(report.worst_off_diagonal),
        fmt_f64(report.worst_magnitude),
        fmt_f64(report.worst_pattern),
        pass as u8
    );
    if let Some(dir) = &a.out {
        let mut blocks = String::from("t,l,rows,cols,max_abs,magnitude_residual,pattern_residual\n");
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for b in &report.blocks {
            let _ = writeln!(
                blocks,
                "{},{},{},{},{},{},{}",
                b.t + 1,
                b.l + 1,
                b.rows,
                b.cols,
                fmt_f64(b.max_abs),
                opt(b.magnitude_residual),
                opt(b.pattern_residual)
            );
        }
        write_file(dir, "blocks.csv", blocks.as_bytes())?;
    }
    emit(a.out.as_deref(), "structure.csv", summary.as_bytes(), stdout)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Check(format!("block structure residual exceeds {}", a.tol)))
    }
}

fn sample(a: SampleArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let sys = a.system.kind()?;
    let plan = match a.strategy {
        Strategy::Uds => uds_pmf(sys.n_total()),
        Strategy::Vds => vds_pmf(sys),
        Strategy::Mds => {
            let k = a.k.ok_or_else(|| CliError::Usage("mds needs --k with one value per level".into()))?;
            mds_allocate(&k, a.m, &sys.partition())?
        }
    };
    let set = draw_sample_stream(&plan, a.m, a.seed, a.stream)?;
    if let Some(dir) = &a.out {
        let (w, h, px) = sampling_mask(sys, &set)?;
        write_file(dir, "mask.pgm", &pgm(w, h, &px))?;
    }
    emit(a.out.as_deref(), "sample.csv", set.to_csv().as_bytes(), stdout)
}

fn recover(a: RecoverArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let sys = a.system.kind()?;
    let set = read_sample(&a.sample, a.strategy)?;
    let truth = a.signal.as_deref().map(read_vector).transpose()?;
    let y = match (&a.y, &truth) {
        (Some(path), _) => read_vector(path)?,
        (None, Some(x)) => measure(sys, &set, x)?,
        (None, None) => unreachable!("clap requires --y or --signal"),
    };
    let (x_hat, mut line) = if a.me {
        (me_reconstruct(sys, &set, &y)?, String::from("method\nme\n"))
    } else {
        let mut problem = RecoveryProblem::new(sys, &set, &y, a.epsilon);
        problem.tolerances = Tolerances { max_iter: a.max_iter, ..Tolerances::default() };
        let report = solve_bpdn(&problem)?;
        let line = format!(
            "method,iterations,feasibility_residual,objective,converged\ncs,{},{},{},{}\n",
            report.iterations,
            fmt_f64(report.feasibility_residual),
            fmt_f64(report.objective),
            report.converged as u8
        );
        (report.x_hat, line)
    };
    if let Some(x) = &truth {
        let err = trial_error(x, &x_hat)?;
        // append the SRE as an extra column
        let mut lines: Vec<String> = line.lines().map(str::to_string).collect();
        lines[0].push_str(",sre_db");
        let _ = write!(lines[1], ",{}", fmt_f64(err.sre_db));
        line = lines.join("\n") + "\n";
    }
    if let Some(dir) = &a.out {
        write_file(dir, "x_hat.csv", column_csv("value", &x_hat).as_bytes())?;
        write_file(dir, "recover.csv", line.as_bytes())?;
        Ok(())
    } else {
        stdout.write_all(line.as_bytes()).map_err(|e| CliError::io("<stdout>", e))
    }
}

fn experiment(a: ExperimentArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let mut config = match (&a.config, &a.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => unreachable!("clap requires --config or --preset"),
    };
    if let Some(t) = a.trials {
        config.trials = t;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(r) = a.r {
        config.r = r;
    }
    if let Some(dir) = &a.out {
        config.out_dir = dir.to_string_lossy().into_owned();
    }
    config.validate()?;
    if a.print_config {
        return stdout.write_all(config.to_json().as_bytes()).map_err(|e| CliError::io("<stdout>", e));
    }
    let report = run_experiment(&config, a.threads)?;
    report.write(Path::new(&config.out_dir))?;
    stdout.write_all(report.summary_csv().as_bytes()).map_err(|e| CliError::io("<stdout>", e))
}

fn signal(a: SignalArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let sys = a.system.kind()?;
    let need = |name: &str, v: Option<f64>| v.ok_or_else(|| CliError::Usage(format!("{} needs --{name}", a.kind)));
    let spec = match a.kind.as_str() {
        "gaussian_bump" => SignalSpec::GaussianBump { sigma: need("sigma", a.sigma)?, i0: a.i0 },
        "blocks" => SignalSpec::Blocks,
        "bumps" => SignalSpec::Bumps,
        "heavisine" => SignalSpec::HeaviSine,
        "doppler" => SignalSpec::Doppler,
        "shepp_logan" => SignalSpec::SheppLogan,
        "sparse_haar" => SignalSpec::SparseHaar {
            k: a.k.ok_or_else(|| CliError::Usage("sparse_haar needs --k".into()))?,
        },
        other => return Err(CliError::Usage(format!("unknown signal kind '{other}'"))),
    };
    let mut rng = hhcs::sampling::trial_rng(a.seed, 0);
    let x = generate(&spec, sys, &mut rng)?;
    if let (Some(dir), true) = (&a.out, sys.system.is_2d()) {
        let n = sys.side();
        write_file(dir, "signal.pgm", &pgm(n, n, &image_to_gray(n, &x)))?;
    }
    emit(a.out.as_deref(), "signal.csv", column_csv("value", &x).as_bytes(), stdout)
}
