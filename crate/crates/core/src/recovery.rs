//! l1 recovery (basis pursuit denoise) and minimal-energy reconstruction.
//!
//! The program `min ‖Ψ^T u‖_1` subject to a data ball is solved over the
//! Haar coefficients `s = Ψ^T u`. Repeated rows of the sample set are merged
//! first: for each distinct row `ω` the terms `d_j^2 (y_j - a_ω)^2` add up to
//! `c_ω (a_ω - ȳ_ω)^2` plus a constant, with `c_ω = Σ d_j^2` and `ȳ_ω` the
//! `d^2`-weighted mean. The merged operator has orthonormal rows, so the
//! feasible set is an elliptic cylinder whose projection reduces to a
//! one-dimensional root search. Douglas-Rachford splitting alternates that
//! projection with soft thresholding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coherence::SystemKind;
use crate::error::{Error, Result};
use crate::sampling::SampleSet;
use crate::signals::l2;
use crate::transforms::{apply, Direction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { tol_feas: 1e-6, tol_gap: 1e-6, max_iter: 20_000 }
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryProblem<'a> {
    pub system: SystemKind,
    pub sample: &'a SampleSet,
    pub y: &'a [f64],
    /// Radius of the data ball. In weighted mode the constraint reads
    /// `‖D (y - P_Ω Φ^T u)‖ / sqrt(M) ≤ ε`, otherwise `‖y - P_Ω Φ^T u‖ ≤ ε`.
    pub epsilon: f64,
    pub weighted: bool,
    pub tolerances: Tolerances,
}

impl<'a> RecoveryProblem<'a> {
    /// Weighted mode follows the sampling strategy (uds/vds weighted, mds not).
    pub fn new(system: SystemKind, sample: &'a SampleSet, y: &'a [f64], epsilon: f64) -> Self {
        RecoveryProblem {
            system,
            sample,
            y,
            epsilon,
            weighted: sample.strategy.is_weighted(),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub x_hat: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Left-hand side of the data constraint at `x_hat`.
    pub feasibility_residual: f64,
    /// `‖Ψ^T x_hat‖_1`.
    pub objective: f64,
    pub converged: bool,
}

/// Merged data term `Σ_i g_i^2 (a_i - ȳ_i)^2 ≤ radius^2` over distinct rows.
struct DataBall {
    system: SystemKind,
    rows: Vec<usize>,
    g2: Vec<f64>,
    y_bar: Vec<f64>,
    radius: f64,
}

impl DataBall {
    fn new(problem: &RecoveryProblem) -> Result<Self> {
        let m = problem.sample.len();
        let scale = if problem.weighted { 1.0 / m as f64 } else { 1.0 };
        // row -> (Σ d^2, Σ d^2 y)
        let mut groups: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for j in 0..m {
            let d2 = if problem.weighted {
                let d = problem.sample.weights[j];
                d * d
            } else {
                1.0
            };
            let e = groups.entry(problem.sample.omega[j]).or_insert((0.0, 0.0));
            e.0 += d2;
            e.1 += d2 * problem.y[j];
        }
        let rows: Vec<usize> = groups.keys().map(|&w| w - 1).collect();
        let g2: Vec<f64> = groups.values().map(|(c, _)| c * scale).collect();
        let y_bar: Vec<f64> = groups.values().map(|(c, s)| s / c).collect();

        let (mut spread, mut energy) = (0.0, 0.0);
        for j in 0..m {
            let i = rows.binary_search(&(problem.sample.omega[j] - 1)).expect("grouped");
            let d2 = if problem.weighted { problem.sample.weights[j].powi(2) } else { 1.0 };
            spread += d2 * (problem.y[j] - y_bar[i]).powi(2);
            energy += d2 * problem.y[j] * problem.y[j];
        }
        spread *= scale;
        energy *= scale;
        let eps2 = problem.epsilon * problem.epsilon;
        let slack = eps2 - spread;
        // rounding in the group means must not make equal repeats look inconsistent
        if slack < -1e-12 * (eps2 + energy) {
            return Err(Error::Infeasible(format!(
                "repeated measurements disagree by more than epsilon = {}",
                problem.epsilon
            )));
        }
        Ok(DataBall { system: problem.system, rows, g2, y_bar, radius: slack.max(0.0).sqrt() })
    }

    /// `Ã s`: synthesis, sensing analysis, gather.
    fn forward(&self, s: &[f64]) -> Vec<f64> {
        let x = apply(self.system.sparsity().basis, Direction::Synthesis, s).expect("valid length");
        let full = apply(self.system.sensing().basis, Direction::Analysis, &x).expect("valid length");
        self.rows.iter().map(|&i| full[i]).collect()
    }

    /// `Ã^T v`.
    fn adjoint(&self, v: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.system.n_total()];
        for (&i, &vi) in self.rows.iter().zip(v) {
            full[i] = vi;
        }
        let x = apply(self.system.sensing().basis, Direction::Synthesis, &full).expect("valid length");
        apply(self.system.sparsity().basis, Direction::Analysis, &x).expect("valid length")
    }

    /// Projection onto `{a : Σ g_i^2 (a_i - ȳ_i)^2 ≤ radius^2}`.
    fn project_ellipsoid(&self, v: &[f64]) -> Vec<f64> {
        let w2: Vec<f64> = v.iter().zip(&self.y_bar).map(|(a, b)| (a - b) * (a - b)).collect();
        let value = |lambda: f64| -> (f64, f64) {
            // f(λ) = Σ g² w² / (1 + λ g²)², f'(λ) = -2 Σ g⁴ w² / (1 + λ g²)³
            let mut f = 0.0;
            let mut df = 0.0;
            for (g2, w2) in self.g2.iter().zip(&w2) {
                let q = 1.0 + lambda * g2;
                f += g2 * w2 / (q * q);
                df -= 2.0 * g2 * g2 * w2 / (q * q * q);
            }
            (f, df)
        };
        let (f0, _) = value(0.0);
        if f0 <= self.radius * self.radius {
            return v.to_vec();
        }
        if self.radius == 0.0 {
            return self.y_bar.clone();
        }
        // Newton on 1/sqrt(f) - 1/radius, which is concave and increasing,
        // so the iterates climb monotonically to the root.
        let mut lambda = 0.0;
        for _ in 0..100 {
            let (f, df) = value(lambda);
            let phi = 1.0 / f.sqrt() - 1.0 / self.radius;
            if phi.abs() <= 1e-15 / self.radius {
                break;
            }
            let dphi = -0.5 * df / (f * f.sqrt());
            let step = -phi / dphi;
            lambda += step;
            if step.abs() <= 1e-15 * lambda {
                break;
            }
        }
        v.iter()
            .zip(&self.y_bar)
            .zip(&self.g2)
            .map(|((a, b), g2)| b + (a - b) / (1.0 + lambda * g2))
            .collect()
    }

    fn project(&self, s: &[f64]) -> Vec<f64> {
        let a = self.forward(s);
        let p = self.project_ellipsoid(&a);
        let diff: Vec<f64> = p.iter().zip(&a).map(|(p, a)| p - a).collect();
        let back = self.adjoint(&diff);
        s.iter().zip(&back).map(|(s, b)| s + b).collect()
    }
}

fn validate(problem: &RecoveryProblem) -> Result<()> {
    let m = problem.sample.len();
    if problem.y.len() != m || problem.sample.weights.len() != m {
        return Err(Error::Shape(format!(
            "{} measurements and {} weights for {} samples",
            problem.y.len(),
            problem.sample.weights.len(),
            m
        )));
    }
    if m == 0 {
        return Err(Error::Infeasible("no measurements".into()));
    }
    if problem.y.iter().chain(&problem.sample.weights).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("measurements or weights".into()));
    }
    if !problem.epsilon.is_finite() || problem.epsilon < 0.0 {
        return Err(Error::Invalid(format!("epsilon must be finite and >= 0, got {}", problem.epsilon)));
    }
    let n = problem.system.n_total();
    if let Some(&w) = problem.sample.omega.iter().find(|&&w| w == 0 || w > n) {
        return Err(Error::Range { index: w, bound: n });
    }
    Ok(())
}

/// Data-constraint value of `x` as the problem states it.
pub fn constraint_value(problem: &RecoveryProblem, x: &[f64]) -> Result<f64> {
    let full = apply(problem.system.sensing().basis, Direction::Analysis, x)?;
    let m = problem.sample.len();
    let mut sq = 0.0;
    for j in 0..m {
        let r = problem.y[j] - full[problem.sample.omega[j] - 1];
        let d = if problem.weighted { problem.sample.weights[j] } else { 1.0 };
        sq += (d * r) * (d * r);
    }
    if problem.weighted {
        sq /= m as f64;
    }
    Ok(sq.sqrt())
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn solve_bpdn(problem: &RecoveryProblem) -> Result<RecoveryReport> {
    validate(problem)?;
    let ball = DataBall::new(problem)?;
    let tol = problem.tolerances;

    // minimal-energy start; the threshold is tied to its scale so that the
    // iteration behaves the same for any signal amplitude
    let mut z = ball.adjoint(&ball.y_bar);
    let scale = l2(&z) / (z.len() as f64).sqrt();
    let gamma = if scale > 0.0 { 0.1 * scale } else { 1.0 };

    let mut s = ball.project(&z);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < tol.max_iter {
        iterations += 1;
        let w: Vec<f64> = s.iter().zip(&z).map(|(s, z)| soft(2.0 * s - z, gamma)).collect();
        let mut gap = 0.0;
        for ((zi, wi), si) in z.iter_mut().zip(&w).zip(&s) {
            *zi += wi - si;
            gap += (wi - si) * (wi - si);
        }
        let done = gap.sqrt() <= tol.tol_gap * l2(&s).max(1.0);
        s = ball.project(&z);
        if done {
            converged = true;
            break;
        }
    }

    let x_hat = apply(problem.system.sparsity().basis, Direction::Synthesis, &s)?;
    let feasibility_residual = constraint_value(problem, &x_hat)?;
    let feasible = feasibility_residual <= problem.epsilon + tol.tol_feas * l2(problem.y).max(1.0);
    Ok(RecoveryReport {
        objective: s.iter().map(|v| v.abs()).sum(),
        coefficients: s,
        x_hat,
        iterations,
        feasibility_residual,
        converged: converged && feasible,
    })
}

/// Minimal-energy reconstruction: repeated rows are averaged, then the
/// right pseudo-inverse `Φ P^T` of the distinct-row operator is applied.
pub fn me_reconstruct(system: SystemKind, sample: &SampleSet, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != sample.len() {
        return Err(Error::Shape(format!("{} measurements for {} samples", y.len(), sample.len())));
    }
    let n = system.n_total();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (&w, &v) in sample.omega.iter().zip(y) {
        if w == 0 || w > n {
            return Err(Error::Range { index: w, bound: n });
        }
        sum[w - 1] += v;
        count[w - 1] += 1;
    }
    for (s, &c) in sum.iter_mut().zip(&count) {
        if c > 1 {
            *s /= c as f64;
        }
    }
    apply(system.sensing().basis, Direction::Synthesis, &sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::System;
    use crate::sampling::{measure, Strategy, RNG_ID};

    fn sample(omega: Vec<usize>, strategy: Strategy) -> SampleSet {
        let m = omega.len();
        SampleSet { strategy, omega, weights: vec![1.0; m], rng: RNG_ID.into(), seed: 0, stream: 0 }
    }

    #[test]
    fn me_single_row() {
        let sys = SystemKind::new(System::HadDhw1d, 2);
        let x = me_reconstruct(sys, &sample(vec![1], Strategy::Mds), &[2.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn me_averages_duplicates() {
        let sys = SystemKind::new(System::HadDhw1d, 2);
        let a = me_reconstruct(sys, &sample(vec![1, 1], Strategy::Uds), &[1.0, 3.0]).unwrap();
        let b = me_reconstruct(sys, &sample(vec![1], Strategy::Uds), &[2.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_sampling_is_exact() {
        let sys = SystemKind::new(System::HadDhw1d, 4);
        let x: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let s = sample((1..=16).collect(), Strategy::Mds);
        let y = measure(sys, &s, &x).unwrap();
        let report = solve_bpdn(&RecoveryProblem::new(sys, &s, &y, 0.0)).unwrap();
        let err: f64 = x.iter().zip(&report.x_hat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8 * l2(&x), "{err}");
        assert!(report.converged);
    }

    #[test]
    fn ellipsoid_projection_lands_on_boundary() {
        let sys = SystemKind::new(System::HadDhw1d, 2);
        let ball = DataBall {
            system: sys,
            rows: vec![0, 1, 2],
            g2: vec![1.0, 4.0, 0.25],
            y_bar: vec![0.0, 1.0, -1.0],
            radius: 0.5,
        };
        let p = ball.project_ellipsoid(&[3.0, -2.0, 4.0]);
        let f: f64 = p.iter().zip(&ball.y_bar).zip(&ball.g2).map(|((a, b), g)| g * (a - b).powi(2)).sum();
        assert!((f.sqrt() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let sys = SystemKind::new(System::HadDhw1d, 2);
        let s = sample(vec![], Strategy::Mds);
        assert_eq!(solve_bpdn(&RecoveryProblem::new(sys, &s, &[], 0.0)).unwrap_err().category(), "infeasible");
        let s = sample(vec![1], Strategy::Mds);
        let p = RecoveryProblem::new(sys, &s, &[f64::NAN], 0.0);
        assert_eq!(solve_bpdn(&p).unwrap_err().category(), "non-finite");
        let s = sample(vec![1, 1], Strategy::Mds);
        let p = RecoveryProblem::new(sys, &s, &[0.0, 1.0], 0.0);
        assert_eq!(solve_bpdn(&p).unwrap_err().category(), "infeasible");
    }
}
