//! Definitional O(N^2) transform matrices.
//!
//! These are evaluated straight from the basis formulas and never touch the
//! FFT path, so they serve as the independent route in property checks.

use std::f64::consts::PI;

use num_complex::Complex64;

/// Row-major orthonormal DCT-II matrix: `M[k][n] = s_k cos(pi (2n+1) k / 2N)`.
pub fn dct2_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let s = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for j in 0..n {
            m[k * n + j] = s * (PI * (2 * j + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

/// Row-major unitary DFT matrix: `M[k][n] = exp(-2 pi i k n / N) / sqrt(N)`.
pub fn dft_matrix(n: usize) -> Vec<Complex64> {
    let norm = 1.0 / (n as f64).sqrt();
    let mut m = vec![Complex64::default(); n * n];
    for k in 0..n {
        for j in 0..n {
            // reduce k*j mod n first so the angle stays small
            let phase = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
            m[k * n + j] = Complex64::from_polar(norm, phase);
        }
    }
    m
}

pub fn matvec_real(m: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    m.chunks_exact(n)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn matvec_complex(m: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    m.chunks_exact(n)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// DCT-II of a `rows x cols` grid by the direct double sum over both axes.
pub fn dct2_2d_direct(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mr = dct2_matrix(rows);
    let mc = dct2_matrix(cols);
    let mut out = vec![0.0; rows * cols];
    for k in 0..rows {
        for l in 0..cols {
            let mut acc = 0.0;
            for r in 0..rows {
                for c in 0..cols {
                    acc += mr[k * rows + r] * mc[l * cols + c] * x[r * cols + c];
                }
            }
            out[k * cols + l] = acc;
        }
    }
    out
}

/// Unitary DFT of a `rows x cols` grid by the direct double sum.
pub fn dft_2d_direct(x: &[f64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mr = dft_matrix(rows);
    let mc = dft_matrix(cols);
    let mut out = vec![Complex64::default(); rows * cols];
    for k in 0..rows {
        for l in 0..cols {
            let mut acc = Complex64::default();
            for r in 0..rows {
                for c in 0..cols {
                    acc += mr[k * rows + r] * mc[l * cols + c] * x[r * cols + c];
                }
            }
            out[k * cols + l] = acc;
        }
    }
    out
}
