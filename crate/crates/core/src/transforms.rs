//! Paley-ordered Hadamard and Haar wavelet transforms.
//!
//! 1-D signals have length `2^r`. 2-D signals are square `2^r x 2^r`
//! images stored column-major (`x[i + n * j]` is row `i`, column `j`), so a
//! Kronecker operator `A ⊗ B` acts as `B X A^T`.
//!
//! The fast kernels work in place on a scratch buffer. The dense builders
//! follow the defining recursions literally and are meant as test oracles.

use std::f64::consts::FRAC_1_SQRT_2;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indexing::{dyadic_below, dyadic_level, dyadic_level_of, flatten_cartesian, index_to_pair};

pub const DENSE_CAP_1D: u32 = 10;
pub const DENSE_CAP_2D: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Hadamard1d,
    Hadamard2d,
    Dhw,
    Adhw,
    Idhw,
}

impl Basis {
    pub fn is_2d(self) -> bool {
        matches!(self, Basis::Hadamard2d | Basis::Adhw | Basis::Idhw)
    }

    pub fn is_haar(self) -> bool {
        matches!(self, Basis::Dhw | Basis::Adhw | Basis::Idhw)
    }

    pub fn name(self) -> &'static str {
        match self {
            Basis::Hadamard1d => "hadamard1d",
            Basis::Hadamard2d => "hadamard2d",
            Basis::Dhw => "dhw",
            Basis::Adhw => "adhw",
            Basis::Idhw => "idhw",
        }
    }
}

impl std::str::FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hadamard1d" => Ok(Basis::Hadamard1d),
            "hadamard2d" => Ok(Basis::Hadamard2d),
            "dhw" => Ok(Basis::Dhw),
            "adhw" => Ok(Basis::Adhw),
            "idhw" => Ok(Basis::Idhw),
            other => Err(Error::Invalid(format!("unknown basis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisKind {
    pub basis: Basis,
    pub r: u32,
}

impl BasisKind {
    pub fn new(basis: Basis, r: u32) -> Self {
        BasisKind { basis, r }
    }

    /// Side length `2^r`.
    pub fn side(&self) -> usize {
        1 << self.r
    }

    /// Number of entries of a signal in this basis.
    pub fn len(&self) -> usize {
        if self.basis.is_2d() {
            1 << (2 * self.r)
        } else {
            1 << self.r
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Analysis,
    Synthesis,
}

// --- shape helpers ---------------------------------------------------------

fn log2_exact(n: usize) -> Result<u32> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Shape(format!("length {n} is not a power of two")));
    }
    Ok(n.trailing_zeros())
}

/// Side of a square image with `len` entries, when that side is a power of two.
pub fn square_side(len: usize) -> Result<usize> {
    let bits = log2_exact(len)
        .map_err(|_| Error::Shape(format!("image length {len} is not a power-of-two square")))?;
    if bits % 2 != 0 {
        return Err(Error::Shape(format!("image length {len} is not a power-of-two square")));
    }
    Ok(1 << (bits / 2))
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("signal contains NaN or infinity".into()))
    }
}

// --- 1-D kernels -------------------------------------------------------------

/// One Haar split of `buf`: pair sums to the front half, pair differences to
/// the back half, both scaled by `1/sqrt(2)`.
#[inline]
fn split_step(buf: &mut [f64], scratch: &mut [f64]) {
    let half = buf.len() / 2;
    for j in 0..half {
        let a = buf[2 * j];
        let b = buf[2 * j + 1];
        scratch[j] = (a + b) * FRAC_1_SQRT_2;
        scratch[half + j] = (a - b) * FRAC_1_SQRT_2;
    }
    buf.copy_from_slice(&scratch[..buf.len()]);
}

/// Inverse of [`split_step`].
#[inline]
fn merge_step(buf: &mut [f64], scratch: &mut [f64]) {
    let half = buf.len() / 2;
    for j in 0..half {
        let a = buf[j];
        let d = buf[half + j];
        scratch[2 * j] = (a + d) * FRAC_1_SQRT_2;
        scratch[2 * j + 1] = (a - d) * FRAC_1_SQRT_2;
    }
    buf.copy_from_slice(&scratch[..buf.len()]);
}

fn fwht_inplace(buf: &mut [f64], scratch: &mut [f64]) {
    let n = buf.len();
    let mut block = n;
    while block >= 2 {
        for chunk in buf.chunks_exact_mut(block) {
            split_step(chunk, scratch);
        }
        block /= 2;
    }
}

fn dhw_analysis_inplace(buf: &mut [f64], scratch: &mut [f64]) {
    let mut block = buf.len();
    while block >= 2 {
        split_step(&mut buf[..block], scratch);
        block /= 2;
    }
}

fn dhw_synthesis_inplace(buf: &mut [f64], scratch: &mut [f64]) {
    let n = buf.len();
    let mut block = 2;
    while block <= n {
        merge_step(&mut buf[..block], scratch);
        block *= 2;
    }
}

// --- 2-D helpers ---------------------------------------------------------------

/// Apply `op` to the first `extent` entries of each of the first `extent`
/// columns of a column-major `side x side` image.
fn along_columns<F>(img: &mut [f64], side: usize, extent: usize, scratch: &mut [f64], op: F)
where
    F: Fn(&mut [f64], &mut [f64]),
{
    for j in 0..extent {
        let col = &mut img[j * side..j * side + extent];
        op(col, scratch);
    }
}

/// Same as [`along_columns`] but over rows.
fn along_rows<F>(img: &mut [f64], side: usize, extent: usize, scratch: &mut [f64], op: F)
where
    F: Fn(&mut [f64], &mut [f64]),
{
    let mut line = vec![0.0; extent];
    for i in 0..extent {
        for j in 0..extent {
            line[j] = img[i + j * side];
        }
        op(&mut line, scratch);
        for j in 0..extent {
            img[i + j * side] = line[j];
        }
    }
}

// --- public transforms ---------------------------------------------------------

/// `H_r^T x` for a 1-D signal in `O(N log N)`. The Paley Hadamard matrix is
/// symmetric and orthonormal, so this is also its own inverse.
pub fn fwht(x: &[f64]) -> Result<Vec<f64>> {
    log2_exact(x.len())?;
    let mut out = x.to_vec();
    let mut scratch = vec![0.0; x.len()];
    fwht_inplace(&mut out, &mut scratch);
    Ok(out)
}

/// `H^T X H` for a column-major square image.
pub fn fwht_2d(x: &[f64]) -> Result<Vec<f64>> {
    let side = square_side(x.len())?;
    let mut out = x.to_vec();
    let mut scratch = vec![0.0; side];
    along_columns(&mut out, side, side, &mut scratch, fwht_inplace);
    along_rows(&mut out, side, side, &mut scratch, fwht_inplace);
    Ok(out)
}

/// Haar analysis (`Ψ^T x`) or synthesis (`Ψ s`) for `dhw`, `adhw` or `idhw`.
pub fn haar_transform(basis: Basis, direction: Direction, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    match basis {
        Basis::Dhw => {
            log2_exact(x.len())?;
            let mut scratch = vec![0.0; x.len()];
            match direction {
                Direction::Analysis => dhw_analysis_inplace(&mut out, &mut scratch),
                Direction::Synthesis => dhw_synthesis_inplace(&mut out, &mut scratch),
            }
        }
        Basis::Adhw => {
            let side = square_side(x.len())?;
            let mut scratch = vec![0.0; side];
            let op = match direction {
                Direction::Analysis => dhw_analysis_inplace,
                Direction::Synthesis => dhw_synthesis_inplace,
            };
            along_columns(&mut out, side, side, &mut scratch, op);
            along_rows(&mut out, side, side, &mut scratch, op);
        }
        Basis::Idhw => {
            let side = square_side(x.len())?;
            let mut scratch = vec![0.0; side];
            match direction {
                Direction::Analysis => {
                    let mut extent = side;
                    while extent >= 2 {
                        along_columns(&mut out, side, extent, &mut scratch, split_step);
                        along_rows(&mut out, side, extent, &mut scratch, split_step);
                        extent /= 2;
                    }
                }
                Direction::Synthesis => {
                    let mut extent = 2;
                    while extent <= side {
                        along_rows(&mut out, side, extent, &mut scratch, merge_step);
                        along_columns(&mut out, side, extent, &mut scratch, merge_step);
                        extent *= 2;
                    }
                }
            }
        }
        Basis::Hadamard1d | Basis::Hadamard2d => {
            return Err(Error::Invalid(format!("{} is not a Haar basis", basis.name())))
        }
    }
    Ok(out)
}

/// Apply any basis in the given direction. Hadamard kinds ignore `direction`.
pub fn apply(basis: Basis, direction: Direction, x: &[f64]) -> Result<Vec<f64>> {
    check_finite(x)?;
    match basis {
        Basis::Hadamard1d => fwht(x),
        Basis::Hadamard2d => fwht_2d(x),
        _ => haar_transform(basis, direction, x),
    }
}

// --- coefficient layout ----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subband {
    S00,
    S01,
    S11,
    S10,
    None,
}

impl Subband {
    pub fn tag(self) -> &'static str {
        match self {
            Subband::S00 => "00",
            Subband::S01 => "01",
            Subband::S11 => "11",
            Subband::S10 => "10",
            Subband::None => "none",
        }
    }
}

/// Level and subband of every coefficient (entry `i` describes index `i + 1`).
///
/// Levels follow the natural partition of the basis: dyadic for 1-D kinds,
/// isotropic for `idhw`, and anisotropic positions for `adhw`/`hadamard2d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientLayout {
    pub basis: BasisKind,
    pub entries: Vec<(usize, Subband)>,
}

impl CoefficientLayout {
    pub fn subband_of(&self, index: usize) -> Result<(usize, Subband)> {
        self.entries
            .get(index.wrapping_sub(1))
            .copied()
            .ok_or(Error::Range { index, bound: self.entries.len() })
    }
}

pub fn coefficient_layout(kind: BasisKind) -> CoefficientLayout {
    let n = kind.side();
    let entries = (1..=kind.len())
        .map(|i| match kind.basis {
            Basis::Hadamard1d | Basis::Dhw => (dyadic_level_of(i) as usize, Subband::None),
            Basis::Hadamard2d | Basis::Adhw => {
                let p = index_to_pair(i, n, n).expect("in range");
                let (t1, t2) = (dyadic_level_of(p.l1), dyadic_level_of(p.l2));
                ((t1 + (kind.r + 1) * t2) as usize, Subband::None)
            }
            Basis::Idhw => {
                let p = index_to_pair(i, n, n).expect("in range");
                let (t1, t2) = (dyadic_level_of(p.l1), dyadic_level_of(p.l2));
                let band = match t1.cmp(&t2) {
                    _ if i == 1 => Subband::S00,
                    std::cmp::Ordering::Greater => Subband::S01,
                    std::cmp::Ordering::Equal => Subband::S11,
                    std::cmp::Ordering::Less => Subband::S10,
                };
                (t1.max(t2) as usize, band)
            }
        })
        .collect();
    CoefficientLayout { basis: kind, entries }
}

// --- dense builders ----------------------------------------------------------------

/// `2^(-e/2)`, correctly rounded, so that closed-form coherence values and
/// dense products agree bit for bit.
pub fn pow2_half(e: u32) -> f64 {
    let even = 0.5f64.powi((e / 2) as i32);
    if e % 2 == 1 {
        even * FRAC_1_SQRT_2
    } else {
        even
    }
}

/// A dense basis matrix kept in exact form: every column is a `{-1, 0, 1}`
/// pattern times `2^(-e/2)` for a per-column exponent `e`.
///
/// All bases here have this shape, which lets products of two of them be
/// formed in integer arithmetic and scaled once at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDense {
    pub signs: Array2<f64>,
    pub col_exp: Vec<u32>,
}

impl ExactDense {
    fn identity(n: usize) -> Self {
        ExactDense { signs: Array2::eye(n), col_exp: vec![0; n] }
    }

    pub fn to_matrix(&self) -> Array2<f64> {
        let mut m = self.signs.clone();
        for (j, mut col) in m.columns_mut().into_iter().enumerate() {
            let scale = pow2_half(self.col_exp[j]);
            col.mapv_inplace(|v| v * scale);
        }
        m
    }

    pub fn kron(&self, other: &ExactDense) -> ExactDense {
        let mut col_exp = Vec::with_capacity(self.col_exp.len() * other.col_exp.len());
        for &a in &self.col_exp {
            for &b in &other.col_exp {
                col_exp.push(a + b);
            }
        }
        ExactDense { signs: kron(&self.signs, &other.signs), col_exp }
    }

    fn select(&self, cols: &[usize]) -> ExactDense {
        let mut signs = Array2::zeros((self.signs.nrows(), cols.len()));
        for (k, &c) in cols.iter().enumerate() {
            signs.column_mut(k).assign(&self.signs.column(c - 1));
        }
        ExactDense { signs, col_exp: cols.iter().map(|&c| self.col_exp[c - 1]).collect() }
    }

    /// `self^T other`, exact up to one rounding per entry.
    pub fn transpose_times(&self, other: &ExactDense) -> Array2<f64> {
        let mut prod = self.signs.t().dot(&other.signs);
        for ((i, j), v) in prod.indexed_iter_mut() {
            if *v != 0.0 {
                *v *= pow2_half(self.col_exp[i] + other.col_exp[j]);
            }
        }
        prod
    }
}

pub fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == 0.0 {
                continue;
            }
            let mut block = out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.zip_mut_with(b, |o, &v| *o = aij * v);
        }
    }
    out
}

fn column(v: [f64; 2]) -> Array2<f64> {
    Array2::from_shape_vec((2, 1), v.to_vec()).expect("2x1")
}

/// Shared shape of the three 1-D recursions:
/// `M_r = [M_{r-1} ⊗ [1;1], R_{r-1} ⊗ tail] / sqrt(2)` with `M_0 = [1]`,
/// where `R_{r-1}` is either `M_{r-1}` itself or the identity.
fn haar_like_recursion(r: u32, right_is_self: bool, tail: [f64; 2]) -> ExactDense {
    let mut m = ExactDense::identity(1);
    for level in 1..=r {
        let n = 1usize << level;
        let right = if right_is_self { m.clone() } else { ExactDense::identity(n / 2) };
        let mut signs = Array2::zeros((n, n));
        signs.slice_mut(s![.., ..n / 2]).assign(&kron(&m.signs, &column([1.0, 1.0])));
        signs.slice_mut(s![.., n / 2..]).assign(&kron(&right.signs, &column(tail)));
        let col_exp = m.col_exp.iter().chain(&right.col_exp).map(|e| e + 1).collect();
        m = ExactDense { signs, col_exp };
    }
    m
}

fn check_cap(kind: BasisKind) -> Result<()> {
    let cap = if kind.basis.is_2d() { DENSE_CAP_2D } else { DENSE_CAP_1D };
    if kind.r > cap {
        return Err(Error::Size(format!(
            "{} with r = {} exceeds the dense cap r <= {}",
            kind.basis.name(),
            kind.r,
            cap
        )));
    }
    Ok(())
}

fn hadamard_exact(r: u32) -> ExactDense {
    haar_like_recursion(r, true, [1.0, -1.0])
}

fn haar_exact(r: u32) -> ExactDense {
    haar_like_recursion(r, false, [1.0, -1.0])
}

fn window_exact(r: u32) -> ExactDense {
    haar_like_recursion(r, false, [1.0, 1.0])
}

/// Paley Hadamard matrix `H_r`.
pub fn hadamard_matrix(r: u32) -> Result<Array2<f64>> {
    check_cap(BasisKind::new(Basis::Hadamard1d, r))?;
    Ok(hadamard_exact(r).to_matrix())
}

/// 1-D Haar matrix `W^(1)_r`.
pub fn haar_matrix(r: u32) -> Result<Array2<f64>> {
    check_cap(BasisKind::new(Basis::Dhw, r))?;
    Ok(haar_exact(r).to_matrix())
}

/// Window matrix `W^(0)_r`: scaling function in the first column and the
/// non-oscillating window functions elsewhere. Not orthonormal.
pub fn window_matrix(r: u32) -> Result<Array2<f64>> {
    check_cap(BasisKind::new(Basis::Dhw, r))?;
    Ok(window_exact(r).to_matrix())
}

/// Isotropic 2-D Haar matrix assembled subband by subband from Kronecker
/// products of `W^(a)` column blocks.
fn isotropic_exact(r: u32) -> ExactDense {
    let n = 1usize << r;
    let w = [window_exact(r), haar_exact(r)];
    let mut out = ExactDense { signs: Array2::zeros((n * n, n * n)), col_exp: vec![0; n * n] };
    let mut place = |block: &ExactDense, idx: &[usize]| {
        for (k, &i) in idx.iter().enumerate() {
            out.signs.column_mut(i - 1).assign(&block.signs.column(k));
            out.col_exp[i - 1] = block.col_exp[k];
        }
    };
    place(&w[0].select(&[1]).kron(&w[0].select(&[1])), &[1]);
    for l in 1..=r {
        let tl = dyadic_level(l);
        let below = dyadic_below(l);
        // (a, b, first-index set, second-index set)
        let bands: [(usize, usize, &[usize], &[usize]); 3] =
            [(0, 1, &tl, &below), (1, 1, &tl, &tl), (1, 0, &below, &tl)];
        for (a, b, s1, s2) in bands {
            let block = w[a].select(&tl).kron(&w[b].select(&tl));
            let idx = flatten_cartesian(s1, s2, n, n).expect("levels are in range");
            place(&block, &idx);
        }
    }
    out
}

/// Dense basis in exact form, built directly from its defining recursion.
pub fn exact_basis(kind: BasisKind) -> Result<ExactDense> {
    check_cap(kind)?;
    let r = kind.r;
    Ok(match kind.basis {
        Basis::Hadamard1d => hadamard_exact(r),
        Basis::Dhw => haar_exact(r),
        Basis::Hadamard2d => hadamard_exact(r).kron(&hadamard_exact(r)),
        Basis::Adhw => haar_exact(r).kron(&haar_exact(r)),
        Basis::Idhw => isotropic_exact(r),
    })
}

/// Dense orthonormal matrix of a basis.
pub fn dense_basis(kind: BasisKind) -> Result<Array2<f64>> {
    Ok(exact_basis(kind)?.to_matrix())
}
