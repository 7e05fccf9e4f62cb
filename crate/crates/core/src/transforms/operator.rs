//! FFT-backed orthonormal transforms over a fixed grid.
//!
//! The DCT-II of each line uses the permuted length-N embedding: even
//! samples are placed in order, odd samples in reverse, one complex FFT of
//! length N is taken, and each bin is rotated by `exp(-i pi k / 2N)`. The
//! inverse undoes the rotation using `X_k - i X_{N-k}` and one inverse FFT.
//! This works for every N, not just powers of two.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::signal::{Shape, TransformKind};
use crate::error::Result;
use crate::scalar::Coef;

struct Axis {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// `exp(-i pi k / 2n)`, DCT only.
    twiddle: Vec<Complex64>,
    /// Orthonormal DCT scale `s_k`.
    scale: Vec<f64>,
}

impl Axis {
    fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        let twiddle = (0..n)
            .map(|k| Complex64::from_polar(1.0, -PI * k as f64 / (2 * n) as f64))
            .collect();
        let scale = (0..n)
            .map(|k| {
                if k == 0 {
                    (1.0 / n as f64).sqrt()
                } else {
                    (2.0 / n as f64).sqrt()
                }
            })
            .collect();
        Axis {
            n,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            twiddle,
            scale,
        }
    }

    /// Orthonormal DCT-II of every contiguous line of length `n` in `data`.
    fn dct_lines(&self, data: &mut [f64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        buf.resize(data.len(), Complex64::default());
        for (line, v) in data.chunks_exact(n).zip(buf.chunks_exact_mut(n)) {
            for i in 0..n.div_ceil(2) {
                v[i] = Complex64::new(line[2 * i], 0.0);
            }
            for i in 0..n / 2 {
                v[n - 1 - i] = Complex64::new(line[2 * i + 1], 0.0);
            }
        }
        self.fft.process(buf);
        for (line, v) in data.chunks_exact_mut(n).zip(buf.chunks_exact(n)) {
            for k in 0..n {
                line[k] = self.scale[k] * (self.twiddle[k] * v[k]).re;
            }
        }
    }

    /// Inverse of [`Axis::dct_lines`] (orthonormal DCT-III).
    fn idct_lines(&self, data: &mut [f64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        buf.resize(data.len(), Complex64::default());
        for (line, v) in data.chunks_exact(n).zip(buf.chunks_exact_mut(n)) {
            for k in 0..n {
                let re = line[k] / self.scale[k];
                let im = if k == 0 {
                    0.0
                } else {
                    -line[n - k] / self.scale[n - k]
                };
                v[k] = self.twiddle[k].conj() * Complex64::new(re, im);
            }
        }
        self.ifft.process(buf);
        let inv_n = 1.0 / n as f64;
        for (line, v) in data.chunks_exact_mut(n).zip(buf.chunks_exact(n)) {
            for i in 0..n.div_ceil(2) {
                line[2 * i] = v[i].re * inv_n;
            }
            for i in 0..n / 2 {
                line[2 * i + 1] = v[n - 1 - i].re * inv_n;
            }
        }
    }
}

fn transpose<T: Copy>(src: &[T], rows: usize, cols: usize, dst: &mut Vec<T>) {
    dst.clear();
    dst.reserve(src.len());
    for c in 0..cols {
        for r in 0..rows {
            dst.push(src[r * cols + c]);
        }
    }
}

/// Counts of transform passes executed by an operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TransformCounts {
    pub forward: usize,
    pub inverse: usize,
}

/// Orthonormal DCT-II or DFT on a fixed grid, applied separably along each axis.
///
/// Plans are built once; the operator is `Send + Sync` and every method
/// takes `&self`. The pass counters are atomics used only for instrumentation.
pub struct TransformOperator {
    kind: TransformKind,
    shape: Shape,
    rows: Axis,
    cols: Axis,
    forward_passes: AtomicUsize,
    inverse_passes: AtomicUsize,
}

impl Clone for TransformOperator {
    fn clone(&self) -> Self {
        TransformOperator {
            kind: self.kind,
            shape: self.shape,
            rows: Axis {
                n: self.rows.n,
                fft: self.rows.fft.clone(),
                ifft: self.rows.ifft.clone(),
                twiddle: self.rows.twiddle.clone(),
                scale: self.rows.scale.clone(),
            },
            cols: Axis {
                n: self.cols.n,
                fft: self.cols.fft.clone(),
                ifft: self.cols.ifft.clone(),
                twiddle: self.cols.twiddle.clone(),
                scale: self.cols.scale.clone(),
            },
            forward_passes: AtomicUsize::new(0),
            inverse_passes: AtomicUsize::new(0),
        }
    }
}

impl std::fmt::Debug for TransformOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformOperator")
            .field("kind", &self.kind)
            .field("shape", &self.shape)
            .finish()
    }
}

impl TransformOperator {
    pub fn new(kind: TransformKind, shape: Shape) -> Result<Self> {
        shape.validate()?;
        let mut planner = FftPlanner::new();
        Ok(TransformOperator {
            kind,
            shape,
            rows: Axis::new(&mut planner, shape.rows),
            cols: Axis::new(&mut planner, shape.cols),
            forward_passes: AtomicUsize::new(0),
            inverse_passes: AtomicUsize::new(0),
        })
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn counts(&self) -> TransformCounts {
        TransformCounts {
            forward: self.forward_passes.load(Ordering::Relaxed),
            inverse: self.inverse_passes.load(Ordering::Relaxed),
        }
    }

    pub fn reset_counts(&self) {
        self.forward_passes.store(0, Ordering::Relaxed);
        self.inverse_passes.store(0, Ordering::Relaxed);
    }

    /// Forward transform of every channel in `x` (channels laid out back to
    /// back). Counts as one forward pass.
    pub fn analyze<C: Coef>(&self, x: &[f64]) -> Vec<C> {
        assert_eq!(
            C::KIND,
            self.kind,
            "coefficient type does not match operator"
        );
        let n = self.shape.len();
        assert_eq!(x.len() % n, 0);
        self.forward_passes.fetch_add(1, Ordering::Relaxed);
        let mut out = vec![C::zero(); x.len()];
        for (src, dst) in x.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            C::analyze(self, src, dst);
        }
        out
    }

    /// Inverse transform of every channel in `spec`, keeping the real part.
    /// Counts as one inverse pass.
    pub fn synthesize<C: Coef>(&self, spec: &[C]) -> Vec<f64> {
        assert_eq!(
            C::KIND,
            self.kind,
            "coefficient type does not match operator"
        );
        let n = self.shape.len();
        assert_eq!(spec.len() % n, 0);
        self.inverse_passes.fetch_add(1, Ordering::Relaxed);
        let mut out = vec![0.0; spec.len()];
        for (src, dst) in spec.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            C::synthesize(self, src, dst);
        }
        out
    }

    pub fn dct_forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.shape.len());
        out.copy_from_slice(x);
        self.separable_real(out, Axis::dct_lines);
    }

    pub fn dct_inverse(&self, spec: &[f64], out: &mut [f64]) {
        debug_assert_eq!(spec.len(), self.shape.len());
        out.copy_from_slice(spec);
        self.separable_real(out, Axis::idct_lines);
    }

    pub fn dft_forward_real(&self, x: &[f64], out: &mut [Complex64]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = Complex64::new(v, 0.0);
        }
        self.dft_forward(out);
    }

    /// In-place unitary DFT.
    pub fn dft_forward(&self, data: &mut [Complex64]) {
        self.separable_complex(data, false);
    }

    /// In-place unitary inverse DFT.
    pub fn dft_inverse(&self, data: &mut [Complex64]) {
        self.separable_complex(data, true);
    }

    fn separable_real(&self, data: &mut [f64], lines: fn(&Axis, &mut [f64], &mut Vec<Complex64>)) {
        let (r, c) = (self.shape.rows, self.shape.cols);
        let mut buf = Vec::new();
        lines(&self.cols, data, &mut buf);
        if r > 1 {
            let mut t = Vec::new();
            transpose(data, r, c, &mut t);
            lines(&self.rows, &mut t, &mut buf);
            let mut back = Vec::new();
            transpose(&t, c, r, &mut back);
            data.copy_from_slice(&back);
        }
    }

    fn separable_complex(&self, data: &mut [Complex64], inverse: bool) {
        let (r, c) = (self.shape.rows, self.shape.cols);
        debug_assert_eq!(data.len(), r * c);
        let pick = |axis: &Axis| {
            if inverse {
                axis.ifft.clone()
            } else {
                axis.fft.clone()
            }
        };
        pick(&self.cols).process(data);
        if r > 1 {
            let mut t = Vec::new();
            transpose(data, r, c, &mut t);
            pick(&self.rows).process(&mut t);
            let mut back = Vec::new();
            transpose(&t, c, r, &mut back);
            data.copy_from_slice(&back);
        }
        let norm = 1.0 / ((r * c) as f64).sqrt();
        for v in data.iter_mut() {
            *v *= norm;
        }
    }
}
