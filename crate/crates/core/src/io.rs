//! Plain-text output helpers shared by the library and the CLI.

use std::fmt::Write as _;

/// Full double precision in scientific notation (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// One-column CSV with a header, e.g. a 1-D signal.
pub fn column_csv(header: &str, values: &[f64]) -> String {
    let mut out = format!("index,{header}\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, fmt_f64(*v));
    }
    out
}

/// Binary PGM (P5) with 8-bit samples, `pixels` row-major.
pub fn pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Linear map of a column-major `n x n` image onto 0..=255, row-major.
pub fn image_to_gray(n: usize, x: &[f64]) -> Vec<u8> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = vec![0u8; n * n];
    for row in 0..n {
        for col in 0..n {
            let v = (x[row + n * col] - lo) / span;
            out[row * n + col] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}
