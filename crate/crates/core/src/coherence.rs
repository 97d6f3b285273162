//! Local and multilevel coherence of the Hadamard-Haar systems.
//!
//! Every system here is a pair (Hadamard sensing basis, Haar sparsity
//! basis) and `U = Φ^T Ψ` is its cross-Gram matrix. Closed forms come from
//! the level index alone. The brute-force path builds `U` from
//! [`exact_basis`] and scans it; since all entries are signed powers of
//! `2^(-1/2)`, it tracks them as (integer, half-exponent) pairs so the two
//! paths can be compared for exact equality.

use std::str::FromStr;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indexing::{build_levels, dyadic_level_of, index_to_pair, LevelPartition, PartitionKind};
use crate::transforms::{exact_basis, hadamard_matrix, kron, pow2_half, Basis, BasisKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum System {
    #[serde(rename = "had_dhw_1d")]
    HadDhw1d,
    #[serde(rename = "had2_idhw")]
    Had2Idhw,
    #[serde(rename = "had2_adhw")]
    Had2Adhw,
}

impl System {
    pub fn name(self) -> &'static str {
        match self {
            System::HadDhw1d => "had_dhw_1d",
            System::Had2Idhw => "had2_idhw",
            System::Had2Adhw => "had2_adhw",
        }
    }

    pub fn is_2d(self) -> bool {
        !matches!(self, System::HadDhw1d)
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "had_dhw_1d" => Ok(System::HadDhw1d),
            "had2_idhw" => Ok(System::Had2Idhw),
            "had2_adhw" => Ok(System::Had2Adhw),
            other => Err(Error::Invalid(format!("unknown system '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SystemKind {
    pub system: System,
    pub r: u32,
}

impl SystemKind {
    pub fn new(system: System, r: u32) -> Self {
        SystemKind { system, r }
    }

    pub fn side(&self) -> usize {
        1 << self.r
    }

    /// Signal length: `2^r` in 1-D, `4^r` in 2-D.
    pub fn n_total(&self) -> usize {
        if self.system.is_2d() {
            1 << (2 * self.r)
        } else {
            1 << self.r
        }
    }

    pub fn sensing(&self) -> BasisKind {
        let basis = if self.system.is_2d() { Basis::Hadamard2d } else { Basis::Hadamard1d };
        BasisKind::new(basis, self.r)
    }

    pub fn sparsity(&self) -> BasisKind {
        let basis = match self.system {
            System::HadDhw1d => Basis::Dhw,
            System::Had2Idhw => Basis::Idhw,
            System::Had2Adhw => Basis::Adhw,
        };
        BasisKind::new(basis, self.r)
    }

    pub fn partition_kind(&self) -> PartitionKind {
        match self.system {
            System::HadDhw1d => PartitionKind::Dyadic1d,
            System::Had2Idhw => PartitionKind::Iso2d,
            System::Had2Adhw => PartitionKind::Aniso2d,
        }
    }

    /// The natural level partition, used for both sampling and sparsity
    /// levels.
    pub fn partition(&self) -> LevelPartition {
        build_levels(self.partition_kind(), self.r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Closed,
    Brute,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" => Ok(Mode::Closed),
            "brute" => Ok(Mode::Brute),
            other => Err(Error::Invalid(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceProfile {
    pub values: Vec<f64>,
    pub sum_sq: f64,
}

/// Multilevel coherence `μ_{t,l}` with rows indexed by sampling level and
/// columns by sparsity level. Anisotropic levels follow the partition
/// order, i.e. position `t = t1 + (r + 1) * t2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilevelProfile {
    pub values: Array2<f64>,
}

/// `n * 2^(-e/2)` with odd `n` (or `n = 0`), the form every entry of a
/// Hadamard-Haar cross-Gram matrix takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Exact {
    n: i64,
    e: u32,
}

impl Exact {
    const ZERO: Exact = Exact { n: 0, e: 0 };

    fn new(n: i64, e: u32) -> Self {
        if n == 0 {
            return Exact::ZERO;
        }
        let (mut n, mut e) = (n.abs(), e);
        while n % 2 == 0 && e >= 2 {
            n /= 2;
            e -= 2;
        }
        Exact { n, e }
    }

    fn value(self) -> f64 {
        self.n as f64 * pow2_half(self.e)
    }

    fn square(self) -> f64 {
        (self.n * self.n) as f64 * 0.5f64.powi(self.e as i32)
    }

    fn times(self, other: Exact) -> Exact {
        Exact::new(self.n * other.n, self.e + other.e)
    }

    fn max(self, other: Exact) -> Exact {
        if other.value() > self.value() {
            other
        } else {
            self
        }
    }
}

/// Cross-Gram matrix `Φ^T Ψ` in exact form.
struct ExactGram {
    counts: Array2<f64>,
    row_exp: Vec<u32>,
    col_exp: Vec<u32>,
}

impl ExactGram {
    fn build(system: SystemKind) -> Result<Self> {
        let phi = exact_basis(system.sensing())?;
        let psi = exact_basis(system.sparsity())?;
        Ok(ExactGram {
            counts: phi.signs.t().dot(&psi.signs),
            row_exp: phi.col_exp,
            col_exp: psi.col_exp,
        })
    }

    /// Entry at 0-based `(i, j)`.
    fn at(&self, i: usize, j: usize) -> Exact {
        Exact::new(self.counts[[i, j]] as i64, self.row_exp[i] + self.col_exp[j])
    }

    /// Largest magnitude over the given 1-based rows and columns.
    fn max_abs(&self, rows: &[usize], cols: &[usize]) -> Exact {
        let mut best = Exact::ZERO;
        for &i in rows {
            for &j in cols {
                best = best.max(self.at(i - 1, j - 1));
            }
        }
        best
    }

    fn dense(&self) -> Array2<f64> {
        let mut u = self.counts.clone();
        for ((i, j), v) in u.indexed_iter_mut() {
            *v = self.at(i, j).value() * v.signum();
        }
        u
    }
}

/// Half-exponent `e` of the closed-form local coherence `2^(-e/2)` at the
/// 1-based index `l`.
fn local_exponent(system: SystemKind, l: usize) -> Result<u32> {
    let n = system.side();
    let k = |i: usize| dyadic_level_of(i).saturating_sub(1);
    Ok(match system.system {
        System::HadDhw1d => {
            if l == 0 || l > n {
                return Err(Error::Range { index: l, bound: n });
            }
            k(l)
        }
        System::Had2Idhw => {
            let p = index_to_pair(l, n, n)?;
            2 * k(p.l1.max(p.l2))
        }
        System::Had2Adhw => {
            let p = index_to_pair(l, n, n)?;
            k(p.l1) + k(p.l2)
        }
    })
}

/// Closed-form local coherence at one 1-based index.
pub fn local_coherence_at(system: SystemKind, l: usize) -> Result<f64> {
    Ok(pow2_half(local_exponent(system, l)?))
}

/// Squared closed-form local coherences, exact powers of two.
pub fn local_coherence_sq(system: SystemKind) -> Vec<f64> {
    (1..=system.n_total())
        .map(|l| 0.5f64.powi(local_exponent(system, l).expect("in range") as i32))
        .collect()
}

/// `‖μ^loc‖²` from the closed form: `r + 1`, `3r + 1` or `(r + 1)^2`.
pub fn closed_sum_sq(system: SystemKind) -> f64 {
    let r = system.r as f64;
    match system.system {
        System::HadDhw1d => r + 1.0,
        System::Had2Idhw => 3.0 * r + 1.0,
        System::Had2Adhw => (r + 1.0) * (r + 1.0),
    }
}

pub fn local_coherence(system: SystemKind, mode: Mode) -> Result<CoherenceProfile> {
    match mode {
        Mode::Closed => {
            let values = (1..=system.n_total())
                .map(|l| local_coherence_at(system, l))
                .collect::<Result<Vec<_>>>()?;
            let sum_sq = local_coherence_sq(system).iter().sum();
            Ok(CoherenceProfile { values, sum_sq })
        }
        Mode::Brute => {
            let gram = ExactGram::build(system)?;
            let n = system.n_total();
            let cols: Vec<usize> = (1..=n).collect();
            let maxima: Vec<Exact> = (1..=n).map(|i| gram.max_abs(&[i], &cols)).collect();
            Ok(CoherenceProfile {
                values: maxima.iter().map(|m| m.value()).collect(),
                sum_sq: maxima.iter().map(|m| m.square()).sum(),
            })
        }
    }
}

/// Local coherence of an arbitrary dense matrix: row-wise max `|U_{l,j}|`.
pub fn local_coherence_of(u: &Array2<f64>) -> CoherenceProfile {
    let values: Vec<f64> = u
        .rows()
        .into_iter()
        .map(|row| row.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect();
    let sum_sq = values.iter().map(|v| v * v).sum();
    CoherenceProfile { values, sum_sq }
}

/// Half-exponent of the closed-form diagonal multilevel coherence
/// `2^(-e/2)` at level position `t`.
fn multilevel_exponent(system: SystemKind, partition: &LevelPartition, t: usize) -> u32 {
    let plus = |v: u32| v.saturating_sub(1);
    match system.system {
        System::HadDhw1d => 2 * plus(t as u32),
        System::Had2Idhw => 4 * plus(t as u32),
        System::Had2Adhw => {
            let (t1, t2) = partition.aniso_pair(t);
            2 * (plus(t1) + plus(t2))
        }
    }
}

pub fn multilevel_coherence(system: SystemKind, mode: Mode) -> Result<MultilevelProfile> {
    let partition = system.partition();
    let count = partition.len();
    let mut values = Array2::zeros((count, count));
    match mode {
        Mode::Closed => {
            for t in 0..count {
                values[[t, t]] = pow2_half(multilevel_exponent(system, &partition, t));
            }
        }
        Mode::Brute => {
            let gram = ExactGram::build(system)?;
            let all: Vec<usize> = (1..=system.n_total()).collect();
            for (t, rows) in partition.levels.iter().enumerate() {
                let row_mu = gram.max_abs(rows, &all);
                for (l, cols) in partition.levels.iter().enumerate() {
                    values[[t, l]] = row_mu.times(gram.max_abs(rows, cols)).value();
                }
            }
        }
    }
    Ok(MultilevelProfile { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparsityMode {
    Bound,
    Search { trials: usize, seed: u64 },
}

fn check_sparsity(partition: &LevelPartition, k: &[usize]) -> Result<()> {
    if k.len() != partition.len() {
        return Err(Error::Shape(format!(
            "expected {} per-level sparsities, got {}",
            partition.len(),
            k.len()
        )));
    }
    for (l, (&kl, level)) in k.iter().zip(&partition.levels).enumerate() {
        if kl > level.len() {
            return Err(Error::Infeasible(format!(
                "k[{l}] = {kl} exceeds level size {}",
                level.len()
            )));
        }
    }
    Ok(())
}

/// Relative sparsity `K_t` per sampling level.
///
/// `Bound` returns `k_t`, which holds for all three systems because the
/// cross-Gram matrix is block diagonal with orthonormal diagonal blocks.
/// `Search` evaluates `‖P_{W_t} U z‖²` for random `±1` vectors supported on
/// `k_l` random positions of every level and keeps the best value, which
/// is a certified lower bound.
pub fn relative_sparsity(system: SystemKind, k: &[usize], mode: SparsityMode) -> Result<Vec<f64>> {
    let partition = system.partition();
    check_sparsity(&partition, k)?;
    match mode {
        SparsityMode::Bound => Ok(k.iter().map(|&v| v as f64).collect()),
        SparsityMode::Search { trials, seed } => {
            let u = ExactGram::build(system)?.dense();
            let n = system.n_total();
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut best = vec![0.0f64; partition.len()];
            for _ in 0..trials {
                let mut z = vec![0.0; n];
                for (level, &kl) in partition.levels.iter().zip(k) {
                    for pos in sample(&mut rng, level.len(), kl) {
                        z[level[pos] - 1] = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    }
                }
                let uz = u.dot(&ndarray::Array1::from(z));
                for (t, rows) in partition.levels.iter().enumerate() {
                    let energy: f64 = rows.iter().map(|&i| uz[i - 1] * uz[i - 1]).sum();
                    best[t] = best[t].max(energy);
                }
            }
            Ok(best)
        }
    }
}

/// Residuals of one `(t, l)` block of the level-permuted cross-Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub t: usize,
    pub l: usize,
    pub rows: usize,
    pub cols: usize,
    pub max_abs: f64,
    /// For diagonal blocks: the largest deviation of `|entry|` from the
    /// predicted magnitude (over the pattern's nonzero positions), and of
    /// the block from its predicted pattern.
    pub magnitude_residual: Option<f64>,
    pub pattern_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub system: SystemKind,
    pub blocks: Vec<BlockCheck>,
    pub worst_off_diagonal: f64,
    pub worst_magnitude: f64,
    pub worst_pattern: f64,
}

impl StructureReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.worst_off_diagonal <= tol && self.worst_magnitude <= tol && self.worst_pattern <= tol
    }
}

/// Predicted diagonal block at level position `t`: `H_{(t-1)+}` in 1-D,
/// `I_3 ⊗ (H_{t-1} ⊗ H_{t-1})` for the isotropic levels and
/// `H_{(t2-1)+} ⊗ H_{(t1-1)+}` for the anisotropic ones.
fn predicted_block(system: SystemKind, partition: &LevelPartition, t: usize) -> Result<Array2<f64>> {
    let plus = |v: u32| v.saturating_sub(1);
    match system.system {
        System::HadDhw1d => hadamard_matrix(plus(t as u32)),
        System::Had2Idhw => {
            if t == 0 {
                return Ok(Array2::ones((1, 1)));
            }
            let h = hadamard_matrix(t as u32 - 1)?;
            Ok(kron(&Array2::eye(3), &kron(&h, &h)))
        }
        System::Had2Adhw => {
            let (t1, t2) = partition.aniso_pair(t);
            Ok(kron(&hadamard_matrix(plus(t2))?, &hadamard_matrix(plus(t1))?))
        }
    }
}

/// Checks the recursive block structure of `Φ^T Ψ` once rows and columns
/// are grouped by level.
pub fn structure_check(system: SystemKind) -> Result<StructureReport> {
    let partition = system.partition();
    let u = ExactGram::build(system)?.dense();
    let mut blocks = Vec::new();
    let (mut worst_off, mut worst_mag, mut worst_pat) = (0.0f64, 0.0f64, 0.0f64);
    for (t, rows) in partition.levels.iter().enumerate() {
        for (l, cols) in partition.levels.iter().enumerate() {
            let block = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| {
                u[[rows[i] - 1, cols[j] - 1]]
            });
            let max_abs = block.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut check = BlockCheck {
                t,
                l,
                rows: rows.len(),
                cols: cols.len(),
                max_abs,
                magnitude_residual: None,
                pattern_residual: None,
            };
            if t == l {
                let magnitude = pow2_half(multilevel_exponent(system, &partition, t) / 2);
                let predicted = predicted_block(system, &partition, t)?;
                // the isotropic pattern has structural zeros off the I_3 blocks
                let mag = block
                    .iter()
                    .zip(predicted.iter())
                    .filter(|(_, p)| **p != 0.0)
                    .fold(0.0f64, |m, (v, _)| m.max((v.abs() - magnitude).abs()));
                let pat = block
                    .iter()
                    .zip(predicted.iter())
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                worst_mag = worst_mag.max(mag);
                worst_pat = worst_pat.max(pat);
                check.magnitude_residual = Some(mag);
                check.pattern_residual = Some(pat);
            } else {
                worst_off = worst_off.max(max_abs);
            }
            blocks.push(check);
        }
    }
    Ok(StructureReport {
        system,
        blocks,
        worst_off_diagonal: worst_off,
        worst_magnitude: worst_mag,
        worst_pattern: worst_pat,
    })
}
