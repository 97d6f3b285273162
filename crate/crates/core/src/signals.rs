//! Test signals, measurement noise, effective sparsity and error metrics.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coherence::SystemKind;
use crate::error::{Error, Result};
use crate::indexing::LevelPartition;
use crate::transforms::{apply, Direction};

/// Largest per-trial SRE reported, in dB. Exact reconstructions are
/// clamped here and flagged.
pub const SRE_CAP_DB: f64 = 300.0;
/// `10^(SRE_CAP_DB / 20)`.
pub const RATIO_CAP: f64 = 1e15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSpec {
    /// `i0 = None` draws the center uniformly from `[sigma, N - sigma]`.
    GaussianBump {
        sigma: f64,
        #[serde(default)]
        i0: Option<f64>,
    },
    Blocks,
    Bumps,
    HeaviSine,
    Doppler,
    SheppLogan,
    /// `k` random `±1` coefficients in the system's Haar basis.
    SparseHaar { k: usize },
}

impl SignalSpec {
    pub fn is_2d_only(&self) -> bool {
        matches!(self, SignalSpec::SheppLogan)
    }

    pub fn is_1d_only(&self) -> bool {
        !matches!(self, SignalSpec::SheppLogan | SignalSpec::SparseHaar { .. })
    }

    /// Whether generation consumes randomness.
    pub fn is_random(&self) -> bool {
        matches!(self, SignalSpec::GaussianBump { i0: None, .. } | SignalSpec::SparseHaar { .. })
    }
}

pub fn generate(spec: &SignalSpec, system: SystemKind, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let is_2d = system.system.is_2d();
    if is_2d && spec.is_1d_only() {
        return Err(Error::Invalid(format!("{spec:?} is a 1-D signal")));
    }
    if !is_2d && spec.is_2d_only() {
        return Err(Error::Invalid(format!("{spec:?} is a 2-D image")));
    }
    let n = system.n_total();
    match *spec {
        SignalSpec::GaussianBump { sigma, i0 } => {
            if sigma <= 0.0 || !sigma.is_finite() {
                return Err(Error::Invalid(format!("sigma must be positive, got {sigma}")));
            }
            let i0 = match i0 {
                Some(c) => c,
                None => {
                    let hi = n as f64 - sigma;
                    if hi < sigma {
                        return Err(Error::Invalid(format!("sigma = {sigma} too wide for N = {n}")));
                    }
                    rng.random_range(sigma..=hi)
                }
            };
            Ok(gaussian_bump(n, sigma, i0))
        }
        SignalSpec::Blocks => Ok(blocks(n)),
        SignalSpec::Bumps => Ok(bumps(n)),
        SignalSpec::HeaviSine => Ok(heavisine(n)),
        SignalSpec::Doppler => Ok(doppler(n)),
        SignalSpec::SheppLogan => Ok(shepp_logan(system.side())),
        SignalSpec::SparseHaar { k } => {
            if k > n {
                return Err(Error::Infeasible(format!("k = {k} exceeds N = {n}")));
            }
            let mut s = vec![0.0; n];
            for i in sample(rng, n, k) {
                s[i] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
            apply(system.sparsity().basis, Direction::Synthesis, &s)
        }
    }
}

/// `x_i = exp(-(i - i0)^2 / (2 sigma^2)) / (sigma sqrt(2 pi))`, `i = 1..=n`.
pub fn gaussian_bump(n: usize, sigma: f64, i0: f64) -> Vec<f64> {
    let scale = 1.0 / (sigma * (2.0 * PI).sqrt());
    (1..=n)
        .map(|i| {
            let d = i as f64 - i0;
            scale * (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

// Reference tables of the classic Donoho-Johnstone test signals.
const DJ_POS: [f64; 11] = [0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81];
const BLOCKS_HGT: [f64; 11] = [4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2];
const BUMPS_HGT: [f64; 11] = [4.0, 5.0, 3.0, 4.0, 5.0, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2];
const BUMPS_WTH: [f64; 11] =
    [0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005];

/// Three-valued sign, `sign(0) = 0`.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn grid(n: usize) -> impl Iterator<Item = f64> {
    (1..=n).map(move |i| i as f64 / n as f64)
}

pub fn blocks(n: usize) -> Vec<f64> {
    grid(n)
        .map(|t| DJ_POS.iter().zip(BLOCKS_HGT).map(|(p, h)| h * (1.0 + sign(t - p)) / 2.0).sum())
        .collect()
}

pub fn bumps(n: usize) -> Vec<f64> {
    grid(n)
        .map(|t| {
            DJ_POS
                .iter()
                .zip(BUMPS_HGT)
                .zip(BUMPS_WTH)
                .map(|((p, h), w)| h / (1.0 + ((t - p) / w).abs()).powi(4))
                .sum()
        })
        .collect()
}

pub fn heavisine(n: usize) -> Vec<f64> {
    grid(n).map(|t| 4.0 * (4.0 * PI * t).sin() - sign(t - 0.3) - sign(0.72 - t)).collect()
}

pub fn doppler(n: usize) -> Vec<f64> {
    grid(n).map(|t| (t * (1.0 - t)).sqrt() * (2.0 * PI * 1.05 / (t + 0.05)).sin()).collect()
}

/// `(x0, y0, a, b, angle in degrees, intensity)` of the original phantom.
const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [0.0, 0.0, 0.69, 0.92, 0.0, 2.0],
    [0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98],
    [0.22, 0.0, 0.11, 0.31, -18.0, -0.02],
    [-0.22, 0.0, 0.16, 0.41, 18.0, -0.02],
    [0.0, 0.35, 0.21, 0.25, 0.0, 0.01],
    [0.0, 0.1, 0.046, 0.046, 0.0, 0.01],
    [0.0, -0.1, 0.046, 0.046, 0.0, 0.01],
    [-0.08, -0.605, 0.046, 0.023, 0.0, 0.01],
    [0.0, -0.605, 0.023, 0.023, 0.0, 0.01],
    [0.06, -0.605, 0.023, 0.046, 0.0, 0.01],
];

/// `n x n` phantom, column-major. Pixel centers cover `[-1, 1]^2`; the
/// first row is the top (`y` near 1) and the first column the left edge.
pub fn shepp_logan(n: usize) -> Vec<f64> {
    let mut img = vec![0.0; n * n];
    let coord = |k: usize| -1.0 + (2 * k + 1) as f64 / n as f64;
    for col in 0..n {
        let x = coord(col);
        for row in 0..n {
            let y = -coord(row);
            let mut v = 0.0;
            for [x0, y0, a, b, phi, intensity] in SHEPP_LOGAN {
                let (s, c) = phi.to_radians().sin_cos();
                let (dx, dy) = (x - x0, y - y0);
                let u = (dx * c + dy * s) / a;
                let w = (-dx * s + dy * c) / b;
                if u * u + w * w <= 1.0 {
                    v += intensity;
                }
            }
            img[row + n * col] = v;
        }
    }
    img
}

#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub values: Vec<f64>,
    pub sigma: f64,
}

impl Noise {
    pub fn norm(&self) -> f64 {
        l2(&self.values)
    }

    /// `‖D n‖ / sqrt(M)`.
    pub fn weighted_norm(&self, weights: &[f64]) -> f64 {
        let sq: f64 = self.values.iter().zip(weights).map(|(n, d)| (n * d) * (n * d)).sum();
        if self.values.is_empty() {
            0.0
        } else {
            (sq / self.values.len() as f64).sqrt()
        }
    }
}

/// `sigma = ‖x‖ / (sqrt(len) 10^(snr/20))`, so that `E‖n‖^2 = ‖x‖^2 / 10^(snr/10)`.
/// `None` or an infinite SNR gives the zero vector.
pub fn noise_sigma(x: &[f64], len: usize, snr_db: Option<f64>) -> f64 {
    match snr_db {
        Some(snr) if snr.is_finite() && len > 0 => {
            l2(x) / ((len as f64).sqrt() * 10f64.powf(snr / 20.0))
        }
        _ => 0.0,
    }
}

pub fn make_noise(x: &[f64], len: usize, snr_db: Option<f64>, rng: &mut impl Rng) -> Noise {
    let sigma = noise_sigma(x, len, snr_db);
    let values = if sigma == 0.0 {
        vec![0.0; len]
    } else {
        (0..len).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    Noise { values, sigma }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveSparsity {
    pub rho: f64,
    pub k_total: usize,
    /// Count of retained entries per level.
    pub k: Vec<usize>,
    /// Retained 1-based indices, largest magnitude first.
    pub support: Vec<usize>,
}

/// 0-based indices sorted by decreasing magnitude, ties by lower index.
fn magnitude_order(s: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].abs().total_cmp(&s[a].abs()).then(a.cmp(&b)));
    order
}

/// `H_K`: keep the `K` largest-magnitude entries, zero the rest.
pub fn hard_threshold(s: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; s.len()];
    for &i in magnitude_order(s).iter().take(k) {
        out[i] = s[i];
    }
    out
}

/// `σ_K(u)_1 = ‖u - H_K u‖_1`.
pub fn sigma_k(u: &[f64], k: usize) -> f64 {
    magnitude_order(u).iter().skip(k).map(|&i| u[i].abs()).sum()
}

/// Smallest `K` with `‖H_K s‖ / ‖s‖ ≥ ρ`, and how the kept entries spread
/// over the levels of `partition`.
pub fn effective_sparsity(s: &[f64], rho: f64, partition: &LevelPartition) -> Result<EffectiveSparsity> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Invalid(format!("rho must lie in (0, 1], got {rho}")));
    }
    if s.len() != partition.total() {
        return Err(Error::Shape(format!("{} coefficients for N = {}", s.len(), partition.total())));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("coefficient vector".into()));
    }
    let order = magnitude_order(s);
    let mut cumulative = Vec::with_capacity(order.len());
    let mut acc = 0.0;
    for &i in &order {
        acc += s[i] * s[i];
        cumulative.push(acc);
    }
    if acc == 0.0 {
        return Err(Error::Degenerate("coefficient vector is zero".into()));
    }
    let total = acc.sqrt();
    let k_total = cumulative.iter().position(|&c| c.sqrt() / total >= rho).unwrap_or(order.len()) + 1;
    let support: Vec<usize> = order[..k_total].iter().map(|&i| i + 1).collect();
    let lookup = partition.level_lookup();
    let mut k = vec![0; partition.len()];
    for &i in &support {
        k[lookup[i]] += 1;
    }
    Ok(EffectiveSparsity { rho, k_total, k, support })
}

pub fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Reconstruction quality of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialError {
    /// `‖x‖ / ‖x - x̂‖`, clamped to [`RATIO_CAP`].
    pub ratio: f64,
    pub sre_db: f64,
    pub exact: bool,
}

pub fn trial_error(x: &[f64], x_hat: &[f64]) -> Result<TrialError> {
    if x.len() != x_hat.len() {
        return Err(Error::Shape(format!("lengths {} and {} differ", x.len(), x_hat.len())));
    }
    let norm = l2(x);
    if norm == 0.0 {
        return Err(Error::Degenerate("reference signal is zero".into()));
    }
    let err: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if !err.is_finite() {
        return Err(Error::NonFinite("reconstruction".into()));
    }
    let exact = err == 0.0 || norm / err >= RATIO_CAP;
    let ratio = if exact { RATIO_CAP } else { norm / err };
    Ok(TrialError { ratio, sre_db: 20.0 * ratio.log10(), exact })
}

/// `20 log10(mean_e ‖x‖ / ‖x - x̂_e‖)` over clamped per-trial ratios.
pub fn mean_sre_db(ratios: &[f64]) -> f64 {
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    20.0 * mean.log10()
}
