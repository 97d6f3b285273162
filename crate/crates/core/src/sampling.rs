//! Uniform, variable and multilevel density sampling of Hadamard rows.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::coherence::{closed_sum_sq, local_coherence_sq, SystemKind};
use crate::error::{Error, Result};
use crate::indexing::LevelPartition;
use crate::io::fmt_f64;
use crate::transforms::{apply, Direction};

/// Generator recorded in every [`SampleSet`].
pub const RNG_ID: &str = "chacha12";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uds,
    Vds,
    Mds,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Uds => "uds",
            Strategy::Vds => "vds",
            Strategy::Mds => "mds",
        }
    }

    /// Whether recovery uses the `D`-weighted, `1/sqrt(M)`-scaled data term.
    pub fn is_weighted(self) -> bool {
        !matches!(self, Strategy::Mds)
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uds" => Ok(Strategy::Uds),
            "vds" => Ok(Strategy::Vds),
            "mds" => Ok(Strategy::Mds),
            other => Err(Error::Invalid(format!("unknown strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplingPlan {
    /// i.i.d. draws from a pmf over `[N]` (uds, vds).
    Density { strategy: Strategy, pmf: Vec<f64> },
    /// `m[t]` distinct draws from level `t` (mds).
    Multilevel { m: Vec<usize>, partition: LevelPartition },
}

impl SamplingPlan {
    pub fn strategy(&self) -> Strategy {
        match self {
            SamplingPlan::Density { strategy, .. } => *strategy,
            SamplingPlan::Multilevel { .. } => Strategy::Mds,
        }
    }

    pub fn n_total(&self) -> usize {
        match self {
            SamplingPlan::Density { pmf, .. } => pmf.len(),
            SamplingPlan::Multilevel { partition, .. } => partition.total(),
        }
    }
}

pub fn uds_pmf(n: usize) -> SamplingPlan {
    SamplingPlan::Density { strategy: Strategy::Uds, pmf: vec![1.0 / n as f64; n] }
}

/// `η(l) = (μ^loc_l)^2 / ‖μ^loc‖^2` from the closed-form coherences.
pub fn vds_pmf(system: SystemKind) -> SamplingPlan {
    let norm = closed_sum_sq(system);
    let pmf = local_coherence_sq(system).into_iter().map(|v| v / norm).collect();
    SamplingPlan::Density { strategy: Strategy::Vds, pmf }
}

/// Per-level measurement counts proportional to `k`, `m_t ≈ M k_t / K`.
///
/// Levels whose share reaches their size are filled and removed, and the
/// rest is shared again among the remaining levels with `k_t > 0` until no
/// level overflows. The shares are then rounded down and the leftover goes
/// to the largest fractional parts (lower level first on ties). If every
/// level with `k_t > 0` is full, the remaining measurements go one at a time
/// to the other levels, lowest index first, cycling until placed.
pub fn mds_allocate(k: &[usize], m_total: usize, partition: &LevelPartition) -> Result<SamplingPlan> {
    let sizes = partition.sizes();
    if k.len() != sizes.len() {
        return Err(Error::Shape(format!("expected {} sparsities, got {}", sizes.len(), k.len())));
    }
    for (t, (&kt, &size)) in k.iter().zip(&sizes).enumerate() {
        if kt > size {
            return Err(Error::Infeasible(format!("k[{t}] = {kt} exceeds level size {size}")));
        }
    }
    if k.iter().all(|&v| v == 0) {
        return Err(Error::Degenerate("all level sparsities are zero".into()));
    }
    if m_total > partition.total() {
        return Err(Error::Infeasible(format!(
            "M = {m_total} exceeds N = {}",
            partition.total()
        )));
    }

    let mut m = vec![0usize; sizes.len()];
    let mut open: Vec<usize> = (0..sizes.len()).filter(|&t| k[t] > 0).collect();
    let mut remaining = m_total;
    loop {
        let k_open: usize = open.iter().map(|&t| k[t]).sum();
        let full: Vec<usize> = open
            .iter()
            .copied()
            .filter(|&t| remaining * k[t] >= sizes[t] * k_open)
            .collect();
        if full.is_empty() {
            break;
        }
        for &t in &full {
            m[t] = sizes[t];
            remaining -= sizes[t];
        }
        open.retain(|t| !full.contains(t));
        if open.is_empty() {
            break;
        }
    }

    if !open.is_empty() {
        let k_open: usize = open.iter().map(|&t| k[t]).sum();
        let mut placed = 0;
        for &t in &open {
            m[t] = remaining * k[t] / k_open;
            placed += m[t];
        }
        let mut order = open.clone();
        // stable sort keeps lower levels first among equal remainders
        order.sort_by_key(|&t| std::cmp::Reverse(remaining * k[t] % k_open));
        for &t in order.iter().take(remaining - placed) {
            m[t] += 1;
        }
    } else {
        while remaining > 0 {
            for t in 0..sizes.len() {
                if remaining > 0 && m[t] < sizes[t] {
                    m[t] += 1;
                    remaining -= 1;
                }
            }
        }
    }
    Ok(SamplingPlan::Multilevel { m, partition: partition.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub strategy: Strategy,
    /// 1-based row indices, in draw order.
    pub omega: Vec<usize>,
    pub weights: Vec<f64>,
    pub rng: String,
    pub seed: u64,
    pub stream: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// `position,index,weight` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("position,index,weight\n");
        for (j, (&w, &d)) in self.omega.iter().zip(&self.weights).enumerate() {
            let _ = writeln!(out, "{},{},{}", j + 1, w, fmt_f64(d));
        }
        out
    }

    /// How often each index of `[n]` was drawn.
    pub fn counts(&self, n: usize) -> Result<Vec<usize>> {
        let mut counts = vec![0usize; n];
        for &w in &self.omega {
            if w == 0 || w > n {
                return Err(Error::Range { index: w, bound: n });
            }
            counts[w - 1] += 1;
        }
        Ok(counts)
    }
}

/// Per-trial generator: stream `stream` of the ChaCha generator seeded by
/// `seed`. Streams never overlap, so trials can run in any order.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn draw_sample(plan: &SamplingPlan, m_total: usize, seed: u64) -> Result<SampleSet> {
    draw_sample_stream(plan, m_total, seed, 0)
}

pub fn draw_sample_stream(plan: &SamplingPlan, m_total: usize, seed: u64, stream: u64) -> Result<SampleSet> {
    let mut rng = trial_rng(seed, stream);
    let (omega, weights) = match plan {
        SamplingPlan::Density { pmf, .. } => draw_density(pmf, m_total, &mut rng)?,
        SamplingPlan::Multilevel { m, partition } => draw_levels(m, partition, m_total, &mut rng)?,
    };
    Ok(SampleSet { strategy: plan.strategy(), omega, weights, rng: RNG_ID.into(), seed, stream })
}

fn draw_density(pmf: &[f64], m_total: usize, rng: &mut impl Rng) -> Result<(Vec<usize>, Vec<f64>)> {
    if pmf.is_empty() || pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Invalid("pmf must be non-empty, finite and non-negative".into()));
    }
    let mut cdf = Vec::with_capacity(pmf.len());
    let mut acc = 0.0;
    for p in pmf {
        acc += p;
        cdf.push(acc);
    }
    if acc <= 0.0 {
        return Err(Error::Degenerate("pmf has zero mass".into()));
    }
    let mut omega = Vec::with_capacity(m_total);
    let mut weights = Vec::with_capacity(m_total);
    for _ in 0..m_total {
        let u = rng.random::<f64>() * acc;
        let i = cdf.partition_point(|&c| c <= u).min(pmf.len() - 1);
        omega.push(i + 1);
        weights.push(1.0 / pmf[i].sqrt());
    }
    Ok((omega, weights))
}

fn draw_levels(
    m: &[usize],
    partition: &LevelPartition,
    m_total: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if m.len() != partition.len() {
        return Err(Error::Shape(format!("expected {} level counts, got {}", partition.len(), m.len())));
    }
    let sum: usize = m.iter().sum();
    if sum != m_total {
        return Err(Error::Invalid(format!("level counts sum to {sum}, not M = {m_total}")));
    }
    let mut omega = Vec::with_capacity(m_total);
    for (t, (&mt, level)) in m.iter().zip(&partition.levels).enumerate() {
        if mt > level.len() {
            return Err(Error::Infeasible(format!("m[{t}] = {mt} exceeds level size {}", level.len())));
        }
        let mut pool = level.clone();
        for i in 0..mt {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        omega.extend_from_slice(&pool[..mt]);
    }
    Ok((omega, vec![1.0; m_total]))
}

fn check_sample(system: SystemKind, sample: &SampleSet) -> Result<()> {
    let n = system.n_total();
    match sample.omega.iter().find(|&&w| w == 0 || w > n) {
        Some(&w) => Err(Error::Range { index: w, bound: n }),
        None => Ok(()),
    }
}

/// `y = P_Ω Φ^T x`: one fast transform, then a gather.
pub fn measure(system: SystemKind, sample: &SampleSet, x: &[f64]) -> Result<Vec<f64>> {
    check_sample(system, sample)?;
    if x.len() != system.n_total() {
        return Err(Error::Shape(format!("signal length {} != {}", x.len(), system.n_total())));
    }
    let full = apply(system.sensing().basis, Direction::Analysis, x)?;
    Ok(sample.omega.iter().map(|&w| full[w - 1]).collect())
}

/// `Φ P_Ω^T y`, the adjoint of [`measure`]; repeated rows accumulate.
pub fn measure_adjoint(system: SystemKind, sample: &SampleSet, y: &[f64]) -> Result<Vec<f64>> {
    check_sample(system, sample)?;
    if y.len() != sample.len() {
        return Err(Error::Shape(format!("{} measurements for {} samples", y.len(), sample.len())));
    }
    let mut full = vec![0.0; system.n_total()];
    for (&w, &v) in sample.omega.iter().zip(y) {
        full[w - 1] += v;
    }
    apply(system.sensing().basis, Direction::Synthesis, &full)
}

/// Sampling mask: 255 at drawn rows, 0 elsewhere, laid out as an image
/// (`side x side` for 2-D systems, one row for 1-D), row-major.
pub fn sampling_mask(system: SystemKind, sample: &SampleSet) -> Result<(usize, usize, Vec<u8>)> {
    let counts = sample.counts(system.n_total())?;
    if system.system.is_2d() {
        let n = system.side();
        let mut pixels = vec![0u8; n * n];
        for (l, &c) in counts.iter().enumerate() {
            if c > 0 {
                // flat index l = l1 + n (l2 - 1): l1 is the row, l2 the column
                pixels[(l % n) * n + l / n] = 255;
            }
        }
        Ok((n, n, pixels))
    } else {
        Ok((counts.len(), 1, counts.iter().map(|&c| if c > 0 { 255 } else { 0 }).collect()))
    }
}
