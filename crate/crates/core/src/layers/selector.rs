use std::collections::HashSet;

use crate::error::{invalid, Error, Result};
use crate::scalar::Coef;
use crate::transforms::{Coeffs, Shape, Spectrum, TransformKind};

/// Ordered set of retained k-space indices (`S_m`); `S_m^T` scatters back.
///
/// Indices are flat row-major positions in the spectrum grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeSelector {
    shape: Shape,
    indices: Vec<usize>,
    /// For each retained mode, the position of its conjugate partner in
    /// the full grid, or `None` when the mode is its own partner.
    mirrors: Vec<Option<usize>>,
}

impl ModeSelector {
    pub fn new(shape: Shape, indices: Vec<usize>) -> Result<Self> {
        shape.validate()?;
        let n = shape.len();
        if indices.is_empty() {
            return invalid("selector must retain at least one mode");
        }
        let mut seen = HashSet::with_capacity(indices.len());
        for &i in &indices {
            if i >= n {
                return invalid(format!("mode index {i} out of range for {n} coefficients"));
            }
            if !seen.insert(i) {
                return invalid(format!("duplicate mode index {i}"));
            }
        }
        let mirrors = indices
            .iter()
            .map(|&i| {
                let j = shape.mirror(i);
                (j != i).then_some(j)
            })
            .collect();
        Ok(ModeSelector {
            shape,
            indices,
            mirrors,
        })
    }

    pub fn from_pairs(shape: Shape, pairs: &[(usize, usize)]) -> Result<Self> {
        if let Some(&(r, c)) = pairs
            .iter()
            .find(|&&(r, c)| r >= shape.rows || c >= shape.cols)
        {
            return invalid(format!("mode ({r}, {c}) out of range for {shape}"));
        }
        ModeSelector::new(
            shape,
            pairs.iter().map(|&(r, c)| r * shape.cols + c).collect(),
        )
    }

    /// Keeps every coefficient, in order.
    pub fn identity(shape: Shape) -> Self {
        ModeSelector::new(shape, (0..shape.len()).collect()).expect("valid shape")
    }

    /// One representative of each conjugate pair of a real signal's DFT:
    /// the full information content of the spectrum.
    pub fn hermitian_full(shape: Shape) -> Self {
        let indices = (0..shape.len()).filter(|&i| shape.mirror(i) >= i).collect();
        ModeSelector::new(shape, indices).expect("valid shape")
    }

    /// The selector covering the whole spectrum for models of `kind`.
    pub fn full(kind: TransformKind, shape: Shape) -> Self {
        match kind {
            TransformKind::Dct2 => ModeSelector::identity(shape),
            TransformKind::Dft => ModeSelector::hermitian_full(shape),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn n(&self) -> usize {
        self.shape.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.indices
            .iter()
            .map(|&i| (i / self.shape.cols, i % self.shape.cols))
            .collect()
    }

    /// True when no retained mode has its conjugate partner also retained,
    /// so that mirroring on embed is well defined.
    pub fn is_hermitian_valid(&self) -> bool {
        let set: HashSet<usize> = self.indices.iter().copied().collect();
        self.mirrors
            .iter()
            .all(|m| m.is_none_or(|j| !set.contains(&j)))
    }

    /// Which full-grid coefficients survive `S_m^T S_m`; for DFT this
    /// includes the mirrored partners filled in on embed.
    pub fn kept_mask(&self, kind: TransformKind) -> Vec<bool> {
        let mut mask = vec![false; self.n()];
        for (&i, mirror) in self.indices.iter().zip(&self.mirrors) {
            mask[i] = true;
            if let (TransformKind::Dft, Some(j)) = (kind, mirror) {
                mask[*j] = true;
            }
        }
        mask
    }

    pub fn check_for(&self, kind: TransformKind) -> Result<()> {
        if kind == TransformKind::Dft && !self.is_hermitian_valid() {
            return invalid("DFT selectors must not retain both members of a conjugate pair");
        }
        Ok(())
    }

    /// `S_m x` on one channel.
    pub fn gather<C: Copy>(&self, spec: &[C]) -> Vec<C> {
        debug_assert_eq!(spec.len(), self.n());
        self.indices.iter().map(|&i| spec[i]).collect()
    }

    /// Plain scatter into a zero spectrum (no mirroring).
    pub fn scatter<C: Coef>(&self, reduced: &[C]) -> Vec<C> {
        debug_assert_eq!(reduced.len(), self.m());
        let mut out = vec![C::zero(); self.n()];
        for (&i, &v) in self.indices.iter().zip(reduced) {
            out[i] = v;
        }
        out
    }

    /// `S_m^T` for models of coefficient type `C`. For DFT coefficients the
    /// conjugate partner of each mode is filled in and self-conjugate modes
    /// keep only their real part, so the inverse transform is real.
    pub fn embed_coeffs<C: Coef>(&self, reduced: &[C]) -> Vec<C> {
        debug_assert_eq!(reduced.len(), self.m());
        if C::KIND == TransformKind::Dct2 {
            return self.scatter(reduced);
        }
        let mut out = vec![C::zero(); self.n()];
        for ((&i, mirror), &v) in self.indices.iter().zip(&self.mirrors).zip(reduced) {
            match mirror {
                Some(j) => {
                    out[i] = v;
                    out[*j] = v.conj();
                }
                None => out[i] = v.real_part(),
            }
        }
        out
    }

    /// Adjoint of [`ModeSelector::embed_coeffs`] under the real inner product.
    pub fn embed_adjoint<C: Coef>(&self, grad: &[C]) -> Vec<C> {
        debug_assert_eq!(grad.len(), self.n());
        if C::KIND == TransformKind::Dct2 {
            return self.gather(grad);
        }
        self.indices
            .iter()
            .zip(&self.mirrors)
            .map(|(&i, mirror)| match mirror {
                Some(j) => grad[i] + grad[*j].conj(),
                None => grad[i].real_part(),
            })
            .collect()
    }
}

/// Coefficients of `x` at the selected indices, in selector order.
pub fn truncate(x: &Spectrum, s: &ModeSelector) -> Result<Coeffs> {
    if x.shape() != s.shape() {
        return Err(Error::Shape {
            expected: s.shape().to_string(),
            got: x.shape().to_string(),
        });
    }
    Ok(match x.coeffs() {
        Coeffs::Real(v) => Coeffs::Real(s.gather(v)),
        Coeffs::Complex(v) => Coeffs::Complex(s.gather(v)),
    })
}

/// Scatters reduced coefficients into a zero spectrum (`S_m^T`). Real
/// coefficients give a DCT-II spectrum; complex ones a DFT spectrum with
/// conjugate partners filled in.
pub fn embed(reduced: &Coeffs, s: &ModeSelector) -> Result<Spectrum> {
    if reduced.len() != s.m() {
        return Err(Error::Shape {
            expected: s.m().to_string(),
            got: reduced.len().to_string(),
        });
    }
    match reduced {
        Coeffs::Real(v) => Spectrum::new(
            TransformKind::Dct2,
            s.shape(),
            Coeffs::Real(s.embed_coeffs(v)),
        ),
        Coeffs::Complex(v) => {
            s.check_for(TransformKind::Dft)?;
            Spectrum::new(
                TransformKind::Dft,
                s.shape(),
                Coeffs::Complex(s.embed_coeffs(v)),
            )
        }
    }
}
