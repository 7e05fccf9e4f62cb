//! Orthonormal DCT-II and DFT in one and two dimensions.

mod operator;
pub mod reference;
mod signal;

use num_complex::Complex64;

pub use operator::{TransformCounts, TransformOperator};
pub use signal::{Coeffs, Shape, Signal, Spectrum, TransformKind};

use crate::error::{Error, Result};

/// Orthonormal DCT-II of a 1D or 2D signal (separable along both axes).
pub fn dct2_forward(x: &Signal) -> Result<Spectrum> {
    let op = TransformOperator::new(TransformKind::Dct2, x.shape())?;
    let mut out = vec![0.0; x.shape().len()];
    op.dct_forward(x.values(), &mut out);
    Spectrum::new(TransformKind::Dct2, x.shape(), Coeffs::Real(out))
}

pub fn dct2_inverse(spec: &Spectrum) -> Result<Signal> {
    let coeffs = spec.real().ok_or(Error::KindMismatch {
        expected: TransformKind::Dct2,
        got: spec.kind(),
    })?;
    let op = TransformOperator::new(TransformKind::Dct2, spec.shape())?;
    let mut out = vec![0.0; coeffs.len()];
    op.dct_inverse(coeffs, &mut out);
    Signal::new(spec.shape(), out)
}

/// Unitary DFT, `X_k = N^{-1/2} sum_n x_n exp(-2 pi i k n / N)`.
pub fn dft_forward(x: &Signal) -> Result<Spectrum> {
    let op = TransformOperator::new(TransformKind::Dft, x.shape())?;
    let mut out = vec![Complex64::default(); x.shape().len()];
    op.dft_forward_real(x.values(), &mut out);
    Spectrum::new(TransformKind::Dft, x.shape(), Coeffs::Complex(out))
}

/// Inverse unitary DFT, returning the full complex result.
pub fn dft_inverse_complex(spec: &Spectrum) -> Result<Vec<Complex64>> {
    let coeffs = spec.complex().ok_or(Error::KindMismatch {
        expected: TransformKind::Dft,
        got: spec.kind(),
    })?;
    let op = TransformOperator::new(TransformKind::Dft, spec.shape())?;
    let mut out = coeffs.to_vec();
    op.dft_inverse(&mut out);
    Ok(out)
}

/// Inverse unitary DFT keeping the real part. For the spectrum of a real
/// signal the discarded imaginary part is rounding noise.
pub fn dft_inverse(spec: &Spectrum) -> Result<Signal> {
    let out = dft_inverse_complex(spec)?;
    Signal::new(spec.shape(), out.into_iter().map(|z| z.re).collect())
}

/// Forward transform of either kind; for 2D grids the 1D transform runs along each axis.
pub fn transform_2d(x: &Signal, kind: TransformKind) -> Result<Spectrum> {
    match kind {
        TransformKind::Dct2 => dct2_forward(x),
        TransformKind::Dft => dft_forward(x),
    }
}

pub fn inverse(spec: &Spectrum) -> Result<Signal> {
    match spec.kind() {
        TransformKind::Dct2 => dct2_inverse(spec),
        TransformKind::Dft => dft_inverse(spec),
    }
}
