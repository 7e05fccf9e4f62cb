use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, shape_err, Error, Result};

/// Which orthonormal transform maps n-space to k-space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    /// Type-II DCT with `s_0 = sqrt(1/N)`, `s_k = sqrt(2/N)`.
    Dct2,
    /// DFT with the unitary `1/sqrt(N)` factor.
    Dft,
}

impl TransformKind {
    pub fn tag(self) -> u32 {
        match self {
            TransformKind::Dct2 => 0,
            TransformKind::Dft => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(TransformKind::Dct2),
            1 => Ok(TransformKind::Dft),
            t => Err(Error::Format(format!("unknown transform tag {t}"))),
        }
    }
}

/// Grid extent. One-dimensional signals are stored as a single row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn d1(n: usize) -> Self {
        Shape { rows: 1, cols: n }
    }

    pub fn d2(rows: usize, cols: usize) -> Self {
        Shape { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_1d(&self) -> bool {
        self.rows == 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return shape_err("positive extents", format!("{}x{}", self.rows, self.cols));
        }
        Ok(())
    }

    /// Index of the frequency `(-r, -c)` modulo the grid, i.e. the entry
    /// a real signal's DFT holds as the conjugate of entry `flat`.
    pub fn mirror(&self, flat: usize) -> usize {
        let (r, c) = (flat / self.cols, flat % self.cols);
        let mr = (self.rows - r) % self.rows;
        let mc = (self.cols - c) % self.cols;
        mr * self.cols + mc
    }

    /// Signed integer wavenumbers `(k_row, k_col)` of entry `flat` under the DFT layout.
    pub fn wavenumbers(&self, flat: usize) -> (i64, i64) {
        let signed = |j: usize, n: usize| -> i64 {
            if 2 * j <= n {
                j as i64
            } else {
                j as i64 - n as i64
            }
        };
        (
            signed(flat / self.cols, self.rows),
            signed(flat % self.cols, self.cols),
        )
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_1d() {
            write!(f, "{}", self.cols)
        } else {
            write!(f, "{}x{}", self.rows, self.cols)
        }
    }
}

/// Real-valued n-space grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    shape: Shape,
    values: Vec<f64>,
}

impl Signal {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if values.len() != shape.len() {
            return shape_err(shape.len(), values.len());
        }
        check_finite(&values)?;
        Ok(Signal { shape, values })
    }

    pub fn d1(values: Vec<f64>) -> Result<Self> {
        Signal::new(Shape::d1(values.len()), values)
    }

    /// Builds a 2D signal from rows; ragged input is rejected.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return shape_err(
                format!("rows of length {width}"),
                format!("row of length {}", bad.len()),
            );
        }
        Signal::new(Shape::d2(rows.len(), width), rows.concat())
    }

    pub fn zeros(shape: Shape) -> Self {
        Signal {
            shape,
            values: vec![0.0; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Coeffs {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl Coeffs {
    pub fn len(&self) -> usize {
        match self {
            Coeffs::Real(v) => v.len(),
            Coeffs::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn abs(&self) -> Vec<f64> {
        match self {
            Coeffs::Real(v) => v.iter().map(|x| x.abs()).collect(),
            Coeffs::Complex(v) => v.iter().map(|x| x.norm()).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            Coeffs::Real(v) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Coeffs::Complex(v) => v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt(),
        }
    }
}

/// k-space coefficients of a [`Signal`] under a given transform.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    kind: TransformKind,
    shape: Shape,
    coeffs: Coeffs,
}

impl Spectrum {
    pub fn new(kind: TransformKind, shape: Shape, coeffs: Coeffs) -> Result<Self> {
        shape.validate()?;
        if coeffs.len() != shape.len() {
            return shape_err(shape.len(), coeffs.len());
        }
        match (&coeffs, kind) {
            (Coeffs::Real(_), TransformKind::Dct2) | (Coeffs::Complex(_), TransformKind::Dft) => {}
            _ => {
                return Err(Error::Invalid(format!(
                    "{kind:?} spectrum with mismatched coefficient type"
                )))
            }
        }
        Ok(Spectrum {
            kind,
            shape,
            coeffs,
        })
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn coeffs(&self) -> &Coeffs {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Coeffs {
        self.coeffs
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn real(&self) -> Option<&[f64]> {
        match &self.coeffs {
            Coeffs::Real(v) => Some(v),
            Coeffs::Complex(_) => None,
        }
    }

    pub fn complex(&self) -> Option<&[Complex64]> {
        match &self.coeffs {
            Coeffs::Complex(v) => Some(v),
            Coeffs::Real(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_rows_rejected() {
        let err = Signal::from_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn non_finite_rejected() {
        let err = Signal::d1(vec![0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
    }

    #[test]
    fn mirror_and_wavenumbers() {
        let s = Shape::d2(4, 6);
        assert_eq!(s.mirror(0), 0);
        assert_eq!(s.mirror(1), 5);
        assert_eq!(s.mirror(6 + 1), 3 * 6 + 5);
        assert_eq!(s.mirror(2 * 6 + 3), 2 * 6 + 3);
        assert_eq!(s.wavenumbers(3 * 6 + 4), (-1, -2));
        assert_eq!(s.wavenumbers(2 * 6 + 3), (2, 3));
        let s = Shape::d1(8);
        assert_eq!(s.mirror(3), 5);
        assert_eq!(s.wavenumbers(5), (0, -3));
    }
}
