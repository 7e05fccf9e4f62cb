//! Coefficient field abstraction: real for DCT-II models, complex for DFT models.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::rng::Stream;
use crate::transforms::{Coeffs, TransformKind, TransformOperator};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GeLU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// `d/dx gelu(x) = Phi(x) + x phi(x)`.
pub fn gelu_derivative(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
        + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Scalar type of k-space coefficients and weights.
///
/// Gradients of complex quantities follow the `dL/dRe + i dL/dIm`
/// convention, so for `z = w x` the weight gradient is `g conj(x)` and the
/// input gradient is `conj(w) g`; with `conj` the identity the same
/// formulas hold for reals.
pub trait Coef:
    Copy
    + Send
    + Sync
    + Default
    + Debug
    + PartialEq
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    const KIND: TransformKind;
    /// Number of real parameters per coefficient.
    const PARTS: usize;

    fn zero() -> Self {
        Self::default()
    }
    fn from_re(re: f64) -> Self;
    fn re(self) -> f64;
    fn conj(self) -> Self;
    fn scale(self, s: f64) -> Self;
    fn norm_sqr(self) -> f64;
    fn abs(self) -> f64 {
        self.norm_sqr().sqrt()
    }
    fn is_finite(self) -> bool;
    /// Drops the imaginary part (identity for reals).
    fn real_part(self) -> Self;
    /// GeLU, applied to real and imaginary parts separately.
    fn gelu(self) -> Self;
    /// Upstream gradient `g` pulled back through [`Coef::gelu`] at `self`.
    fn gelu_backward(self, g: Self) -> Self;
    fn push_parts(self, out: &mut Vec<f64>);
    fn from_parts(parts: &[f64]) -> Self;
    /// Draws each real part i.i.d. `N(0, var_per_part)`.
    fn gaussian(rng: &mut Stream, var_per_part: f64) -> Self;
    /// Forward transform of one channel.
    fn analyze(op: &TransformOperator, x: &[f64], out: &mut [Self]);
    /// Inverse transform of one channel, real part.
    fn synthesize(op: &TransformOperator, spec: &[Self], out: &mut [f64]);
    fn into_coeffs(v: Vec<Self>) -> Coeffs;
    fn from_coeffs(c: &Coeffs) -> Option<&[Self]>;
}

impl Coef for f64 {
    const KIND: TransformKind = TransformKind::Dct2;
    const PARTS: usize = 1;

    fn into_coeffs(v: Vec<Self>) -> Coeffs {
        Coeffs::Real(v)
    }
    fn from_coeffs(c: &Coeffs) -> Option<&[Self]> {
        match c {
            Coeffs::Real(v) => Some(v),
            Coeffs::Complex(_) => None,
        }
    }

    fn from_re(re: f64) -> Self {
        re
    }
    fn re(self) -> f64 {
        self
    }
    fn conj(self) -> Self {
        self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn real_part(self) -> Self {
        self
    }
    fn gelu(self) -> Self {
        gelu(self)
    }
    fn gelu_backward(self, g: Self) -> Self {
        g * gelu_derivative(self)
    }
    fn push_parts(self, out: &mut Vec<f64>) {
        out.push(self);
    }
    fn from_parts(parts: &[f64]) -> Self {
        parts[0]
    }
    fn gaussian(rng: &mut Stream, var_per_part: f64) -> Self {
        rng.normal(var_per_part.sqrt())
    }
    fn analyze(op: &TransformOperator, x: &[f64], out: &mut [Self]) {
        op.dct_forward(x, out);
    }
    fn synthesize(op: &TransformOperator, spec: &[Self], out: &mut [f64]) {
        op.dct_inverse(spec, out);
    }
}

impl Coef for Complex64 {
    const KIND: TransformKind = TransformKind::Dft;
    const PARTS: usize = 2;

    fn into_coeffs(v: Vec<Self>) -> Coeffs {
        Coeffs::Complex(v)
    }
    fn from_coeffs(c: &Coeffs) -> Option<&[Self]> {
        match c {
            Coeffs::Complex(v) => Some(v),
            Coeffs::Real(_) => None,
        }
    }

    fn from_re(re: f64) -> Self {
        Complex64::new(re, 0.0)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn real_part(self) -> Self {
        Complex64::new(self.re, 0.0)
    }
    fn gelu(self) -> Self {
        Complex64::new(gelu(self.re), gelu(self.im))
    }
    fn gelu_backward(self, g: Self) -> Self {
        Complex64::new(
            g.re * gelu_derivative(self.re),
            g.im * gelu_derivative(self.im),
        )
    }
    fn push_parts(self, out: &mut Vec<f64>) {
        out.push(self.re);
        out.push(self.im);
    }
    fn from_parts(parts: &[f64]) -> Self {
        Complex64::new(parts[0], parts[1])
    }
    fn gaussian(rng: &mut Stream, var_per_part: f64) -> Self {
        let sd = var_per_part.sqrt();
        let re = rng.normal(sd);
        let im = rng.normal(sd);
        Complex64::new(re, im)
    }
    fn analyze(op: &TransformOperator, x: &[f64], out: &mut [Self]) {
        op.dft_forward_real(x, out);
    }
    fn synthesize(op: &TransformOperator, spec: &[Self], out: &mut [f64]) {
        let mut buf = spec.to_vec();
        op.dft_inverse(&mut buf);
        for (o, z) in out.iter_mut().zip(buf) {
            *o = z.re;
        }
    }
}
