//! Mode selection, loss decomposition into reachable and irreducible parts,
//! and the discarded-mode gradient diagnostic.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Error, Result};
use crate::layers::{embed, ModeSelector, SpectralModel, Wiring};
use crate::scalar::Coef;
use crate::transforms::{self, Coeffs, Shape, Signal, Spectrum, TransformKind};

/// Per-mode statistic a top-k selection ranks by.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatMeasure {
    /// Mean `|Y_k|`; top-k under it minimizes the L1 irreducible loss.
    MeanAbs,
    /// Mean `|Y_k|^2`; top-k under it minimizes the squared-L2 one.
    MeanSquare,
}

/// Per-mode dataset statistic over a spectrum grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumStats {
    shape: Shape,
    values: Vec<f64>,
    sample_count: usize,
    measure: StatMeasure,
}

impl SpectrumStats {
    pub fn new(
        shape: Shape,
        values: Vec<f64>,
        sample_count: usize,
        measure: StatMeasure,
    ) -> Result<Self> {
        if values.len() != shape.len() {
            return shape_err(shape.len(), values.len());
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return invalid(format!(
                "mode statistic {i} must be finite and nonnegative, got {}",
                values[i]
            ));
        }
        if sample_count == 0 {
            return invalid("statistics need at least one sample");
        }
        Ok(SpectrumStats {
            shape,
            values,
            sample_count,
            measure,
        })
    }

    /// Aggregates spectra, which must share kind and shape.
    pub fn from_spectra(spectra: &[Spectrum], measure: StatMeasure) -> Result<Self> {
        let first = spectra
            .first()
            .ok_or_else(|| Error::Invalid("empty dataset".into()))?;
        let shape = first.shape();
        let mut acc = vec![0.0; shape.len()];
        for s in spectra {
            check_like(first, s)?;
            for (a, v) in acc.iter_mut().zip(s.coeffs().abs()) {
                *a += match measure {
                    StatMeasure::MeanAbs => v,
                    StatMeasure::MeanSquare => v * v,
                };
            }
        }
        let count = spectra.len() as f64;
        acc.iter_mut().for_each(|a| *a /= count);
        SpectrumStats::new(shape, acc, spectra.len(), measure)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn sample_count(&self) -> usize {
        self.sample_count
    }
    pub fn measure(&self) -> StatMeasure {
        self.measure
    }
}

fn check_like(a: &Spectrum, b: &Spectrum) -> Result<()> {
    if a.kind() != b.kind() {
        return Err(Error::KindMismatch {
            expected: a.kind(),
            got: b.kind(),
        });
    }
    if a.shape() != b.shape() {
        return shape_err(a.shape(), b.shape());
    }
    Ok(())
}

/// Transforms every signal with the same operator.
pub fn spectra(signals: &[Signal], kind: TransformKind) -> Result<Vec<Spectrum>> {
    signals
        .par_iter()
        .map(|s| transforms::transform_2d(s, kind))
        .collect()
}

/// Lowest `m` modes: `0..m` on a 1D grid, the `m x m` corner block on a 2D
/// grid, in row-major order.
pub fn lowpass_selector(m: usize, shape: Shape) -> Result<ModeSelector> {
    if shape.is_1d() {
        if m == 0 || m > shape.cols {
            return invalid(format!("lowpass needs 1 <= m <= {}", shape.cols));
        }
        return ModeSelector::new(shape, (0..m).collect());
    }
    if m == 0 || m > shape.rows || m > shape.cols {
        return invalid(format!(
            "square lowpass needs 1 <= m <= min({}, {})",
            shape.rows, shape.cols
        ));
    }
    ModeSelector::new(
        shape,
        (0..m)
            .flat_map(|r| (0..m).map(move |c| r * shape.cols + c))
            .collect(),
    )
}

/// Lowpass for the given transform. For the DFT the block covers signed
/// frequencies `|k| < m` on each axis, keeping the first member (row-major)
/// of every conjugate pair.
pub fn lowpass_selector_for(kind: TransformKind, m: usize, shape: Shape) -> Result<ModeSelector> {
    match kind {
        TransformKind::Dct2 => lowpass_selector(m, shape),
        TransformKind::Dft => {
            if m == 0 || m > shape.cols / 2 + 1 || (!shape.is_1d() && m > shape.rows / 2 + 1) {
                return invalid(format!(
                    "DFT lowpass on {shape} needs 1 <= m <= N/2 + 1 per axis"
                ));
            }
            let candidates = (0..shape.len()).filter(|&i| {
                let (kr, kc) = shape.wavenumbers(i);
                kr.unsigned_abs() < m as u64 && kc.unsigned_abs() < m as u64
            });
            ModeSelector::new(shape, conjugate_representatives(shape, candidates))
        }
    }
}

fn conjugate_representatives(shape: Shape, candidates: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut kept = HashSet::new();
    let mut out = Vec::new();
    for i in candidates {
        if !kept.contains(&shape.mirror(i)) {
            kept.insert(i);
            out.push(i);
        }
    }
    out
}

fn ranked(stats: &SpectrumStats) -> Vec<usize> {
    ranked_by(&stats.values)
}

fn ranked_by(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // stable sort keeps lower indices first among equal values
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

/// The `m` modes with the largest statistic, ties to the lower index,
/// returned in ascending index order.
pub fn topk_selector(stats: &SpectrumStats, m: usize) -> Result<ModeSelector> {
    if m == 0 || m > stats.values.len() {
        return invalid(format!("top-k needs 1 <= m <= {}", stats.values.len()));
    }
    let mut idx: Vec<usize> = ranked(stats).into_iter().take(m).collect();
    idx.sort_unstable();
    ModeSelector::new(stats.shape, idx)
}

/// Top-k for the given transform. For the DFT, keeping one member of a
/// conjugate pair keeps both, so modes rank by statistic times multiplicity
/// and a mode whose partner is already taken is skipped.
pub fn topk_selector_for(
    kind: TransformKind,
    stats: &SpectrumStats,
    m: usize,
) -> Result<ModeSelector> {
    match kind {
        TransformKind::Dct2 => topk_selector(stats, m),
        TransformKind::Dft => {
            let shape = stats.shape;
            let mass: Vec<f64> = (0..stats.values.len())
                .map(|i| {
                    let mult = if shape.mirror(i) == i { 1.0 } else { 2.0 };
                    mult * stats.values[i]
                })
                .collect();
            let mut idx: Vec<usize> =
                conjugate_representatives(shape, ranked_by(&mass).into_iter())
                    .into_iter()
                    .take(m)
                    .collect();
            if idx.len() < m || m == 0 {
                return invalid(format!(
                    "DFT top-k on {} has at most {} distinct modes",
                    stats.shape,
                    idx.len()
                ));
            }
            idx.sort_unstable();
            ModeSelector::new(stats.shape, idx)
        }
    }
}

/// Norm used by the loss decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNorm {
    /// `sum |e_k|`.
    L1,
    /// `sum |e_k|^2`; additive over disjoint modes like the training loss's
    /// squared numerator.
    L2Squared,
}

impl LossNorm {
    fn term(self, a: f64) -> f64 {
        match self {
            LossNorm::L1 => a,
            LossNorm::L2Squared => a * a,
        }
    }
}

/// `L = J + R_o` averaged over a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossDecomposition {
    /// Error on retained modes.
    pub j: f64,
    /// Target mass on discarded modes.
    pub r_o: f64,
    pub l: f64,
}

/// Mean over `targets` of the norm of their coefficients outside `s`
/// (conjugate partners of retained DFT modes count as retained).
pub fn irreducible_loss(targets: &[Spectrum], s: &ModeSelector, norm: LossNorm) -> Result<f64> {
    if targets.is_empty() {
        return invalid("empty dataset");
    }
    let kind = targets[0].kind();
    let kept = s.kept_mask(kind);
    let mut total = 0.0;
    for t in targets {
        check_like(&targets[0], t)?;
        if t.shape() != s.shape() {
            return shape_err(s.shape(), t.shape());
        }
        total += t
            .coeffs()
            .abs()
            .iter()
            .zip(&kept)
            .filter(|(_, &k)| !k)
            .map(|(&a, _)| norm.term(a))
            .sum::<f64>();
    }
    Ok(total / targets.len() as f64)
}

/// Splits `||Y - S_m^T Y_hat||` over a dataset, `preds` being reduced
/// predictions in selector order.
pub fn decompose_predictions(
    preds: &[Coeffs],
    targets: &[Spectrum],
    s: &ModeSelector,
    norm: LossNorm,
) -> Result<LossDecomposition> {
    if preds.len() != targets.len() {
        return shape_err(format!("{} predictions", targets.len()), preds.len());
    }
    let r_o = irreducible_loss(targets, s, norm)?;
    let kind = targets[0].kind();
    let kept = s.kept_mask(kind);
    let mut j = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        let full = embed(p, s)?;
        check_like(t, &full)?;
        let err = diff_abs(t.coeffs(), full.coeffs());
        j += err
            .iter()
            .zip(&kept)
            .filter(|(_, &k)| k)
            .map(|(&a, _)| norm.term(a))
            .sum::<f64>();
    }
    let j = j / targets.len() as f64;
    Ok(LossDecomposition { j, r_o, l: j + r_o })
}

fn diff_abs(a: &Coeffs, b: &Coeffs) -> Vec<f64> {
    match (a, b) {
        (Coeffs::Real(a), Coeffs::Real(b)) => a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect(),
        (Coeffs::Complex(a), Coeffs::Complex(b)) => {
            a.iter().zip(b).map(|(x, y)| (x - y).norm()).collect()
        }
        _ => unreachable!("kinds checked by caller"),
    }
}

/// Decomposition of a single-channel T1 model's loss over `(input, target)` signal pairs.
pub fn decompose_loss<C: Coef>(
    model: &SpectralModel<C>,
    pairs: &[(Signal, Signal)],
    norm: LossNorm,
) -> Result<LossDecomposition> {
    if model.wiring() != Wiring::T1 {
        return invalid("the loss decomposition needs a T1 model");
    }
    if pairs.is_empty() {
        return invalid("empty dataset");
    }
    let preds = pairs
        .iter()
        .map(|(x, _)| crate::layers::t1_forward(x, model).map(C::into_coeffs))
        .collect::<Result<Vec<_>>>()?;
    let targets = pairs
        .iter()
        .map(|(_, y)| transforms::transform_2d(y, C::KIND))
        .collect::<Result<Vec<_>>>()?;
    decompose_predictions(&preds, &targets, model.selector(), norm)
}

/// How a reconstruction curve chooses its selectors.
#[derive(Clone, Debug)]
pub enum SelectorFamily {
    Lowpass,
    /// Top-k with the same number of modes as the lowpass selector at each `m`.
    TopK(SpectrumStats),
}

impl SelectorFamily {
    pub fn name(&self) -> &'static str {
        match self {
            SelectorFamily::Lowpass => "lowpass",
            SelectorFamily::TopK(_) => "topk",
        }
    }

    pub fn selector(&self, kind: TransformKind, m: usize, shape: Shape) -> Result<ModeSelector> {
        let low = lowpass_selector_for(kind, m, shape)?;
        match self {
            SelectorFamily::Lowpass => Ok(low),
            SelectorFamily::TopK(stats) => topk_selector_for(kind, stats, low.m()),
        }
    }
}

/// Mean `||y_hat - y||^2 / ||y||^2` of truncate-embed-invert reconstructions.
pub fn reconstruction_nmse(
    signals: &[Signal],
    kind: TransformKind,
    s: &ModeSelector,
) -> Result<f64> {
    if signals.is_empty() {
        return invalid("empty dataset");
    }
    let errs = signals
        .par_iter()
        .map(|y| {
            let spec = transforms::transform_2d(y, kind)?;
            let back = transforms::inverse(&embed(&crate::layers::truncate(&spec, s)?, s)?)?;
            let den: f64 = y.values().iter().map(|v| v * v).sum();
            if den == 0.0 {
                return invalid("zero-norm target");
            }
            let num: f64 = back
                .values()
                .iter()
                .zip(y.values())
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            Ok(num / den)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// One point of a reconstruction curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub m: usize,
    pub modes: usize,
    pub selector_family: &'static str,
    pub nspace_nmse: f64,
    pub r_o_l1: f64,
    pub r_o_l2: f64,
}

pub fn reconstruction_curve(
    signals: &[Signal],
    kind: TransformKind,
    family: &SelectorFamily,
    m_values: &[usize],
) -> Result<Vec<CurvePoint>> {
    let shape = signals
        .first()
        .ok_or_else(|| Error::Invalid("empty dataset".into()))?
        .shape();
    let targets = spectra(signals, kind)?;
    m_values
        .iter()
        .map(|&m| {
            let s = family.selector(kind, m, shape)?;
            Ok(CurvePoint {
                m,
                modes: s.m(),
                selector_family: family.name(),
                nspace_nmse: reconstruction_nmse(signals, kind, &s)?,
                r_o_l1: irreducible_loss(&targets, &s, LossNorm::L1)?,
                r_o_l2: irreducible_loss(&targets, &s, LossNorm::L2Squared)?,
            })
        })
        .collect()
}

/// For each retained mode `k`, `sum_{j not in s} |d psi_k / d X_j|` where
/// `psi = T o phi o T^-1` under the DCT-II, by central differences with
/// step `1e-5 * max(1, |X_j|)`.
pub fn gradient_dependency_mass(
    phi: impl Fn(&Signal) -> Result<Signal>,
    s: &ModeSelector,
    probe: &Signal,
) -> Result<Vec<f64>> {
    if probe.shape() != s.shape() {
        return shape_err(s.shape(), probe.shape());
    }
    let x0 = transforms::dct2_forward(probe)?;
    let base = x0.real().expect("DCT spectrum").to_vec();
    let kept = s.kept_mask(TransformKind::Dct2);
    let psi = |coeffs: Vec<f64>| -> Result<Vec<f64>> {
        let spec = Spectrum::new(TransformKind::Dct2, s.shape(), Coeffs::Real(coeffs))?;
        let y = phi(&transforms::dct2_inverse(&spec)?)?;
        if y.shape() != s.shape() {
            return shape_err(s.shape(), y.shape());
        }
        let out = transforms::dct2_forward(&y).map_err(|e| match e {
            Error::NonFinite { .. } => {
                Error::Numerical(format!("phi produced a non-finite output: {e}"))
            }
            other => other,
        })?;
        Ok(s.gather(out.real().expect("DCT spectrum")))
    };
    let mut mass = vec![0.0; s.m()];
    for j in (0..base.len()).filter(|&j| !kept[j]) {
        let h = 1e-5 * base[j].abs().max(1.0);
        let mut plus = base.clone();
        plus[j] += h;
        let mut minus = base.clone();
        minus[j] -= h;
        let (p, q) = (psi(plus)?, psi(minus)?);
        for (acc, (a, b)) in mass.iter_mut().zip(p.iter().zip(&q)) {
            *acc += ((a - b) / (2.0 * h)).abs();
        }
    }
    Ok(mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Activation, KSpaceLayer, Mixing};
    use crate::rng::Stream;

    fn real_spec(v: Vec<f64>) -> Spectrum {
        Spectrum::new(TransformKind::Dct2, Shape::d1(v.len()), Coeffs::Real(v)).unwrap()
    }

    fn stats(v: Vec<f64>) -> SpectrumStats {
        SpectrumStats::new(Shape::d1(v.len()), v, 1, StatMeasure::MeanAbs).unwrap()
    }

    #[test]
    fn lowpass_examples() {
        assert_eq!(
            lowpass_selector(3, Shape::d1(8)).unwrap().indices(),
            &[0, 1, 2]
        );
        let s = lowpass_selector(2, Shape::d2(8, 8)).unwrap();
        assert_eq!(s.pairs(), vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(
            lowpass_selector(8, Shape::d1(8)).unwrap(),
            ModeSelector::identity(Shape::d1(8))
        );
        assert!(lowpass_selector(9, Shape::d1(8)).is_err());
        assert!(lowpass_selector(0, Shape::d1(8)).is_err());
    }

    #[test]
    fn dft_lowpass_is_hermitian_and_symmetric_in_rows() {
        let shape = Shape::d2(16, 16);
        let s = lowpass_selector_for(TransformKind::Dft, 4, shape).unwrap();
        assert!(s.is_hermitian_valid());
        let mask = s.kept_mask(TransformKind::Dft);
        for (i, &kept) in mask.iter().enumerate() {
            let (kr, kc) = shape.wavenumbers(i);
            assert_eq!(kept, kr.abs() < 4 && kc.abs() < 4, "{kr},{kc}");
        }
        // 7 rows x 4 columns, minus the 3 duplicated conjugates in column 0
        assert_eq!(s.m(), 7 * 4 - 3);
        let one = lowpass_selector_for(TransformKind::Dft, 5, Shape::d1(8)).unwrap();
        assert_eq!(one.indices(), &[0, 1, 2, 3, 4]);
        assert!(lowpass_selector_for(TransformKind::Dft, 6, Shape::d1(8)).is_err());
    }

    #[test]
    fn topk_breaks_ties_to_lower_index() {
        let s = topk_selector(&stats(vec![1.0, 5.0, 3.0, 5.0]), 2).unwrap();
        assert_eq!(s.indices(), &[1, 3]);
        let s = topk_selector(&stats(vec![2.0, 2.0, 2.0, 2.0]), 3).unwrap();
        assert_eq!(s.indices(), &[0, 1, 2]);
    }

    #[test]
    fn topk_of_decreasing_stats_is_lowpass() {
        let v: Vec<f64> = (0..20).map(|k| 1.0 / (1.0 + k as f64)).collect();
        for m in 1..=20 {
            assert_eq!(
                topk_selector(&stats(v.clone()), m).unwrap(),
                lowpass_selector(m, Shape::d1(20)).unwrap()
            );
        }
    }

    #[test]
    fn dft_topk_weighs_conjugate_pairs_twice() {
        // a real Nyquist coefficient of 3 loses to a pair of 2s (mass 4)
        let shape = Shape::d1(8);
        let mut v = vec![0.0; 8];
        v[4] = 3.0;
        v[1] = 2.0;
        v[7] = 2.0;
        let s = topk_selector_for(TransformKind::Dft, &stats(v), 1).unwrap();
        assert_eq!(s.indices(), &[1]);

        // and is optimal over every choice of representatives on random data
        let signals: Vec<Signal> = (0..6u64)
            .map(|i| {
                let mut x = vec![0.0; 8];
                Stream::new(i, 9).fill_normal(&mut x, 1.0);
                Signal::new(shape, x).unwrap()
            })
            .collect();
        let specs = spectra(&signals, TransformKind::Dft).unwrap();
        for (measure, norm) in [
            (StatMeasure::MeanAbs, LossNorm::L1),
            (StatMeasure::MeanSquare, LossNorm::L2Squared),
        ] {
            let st = SpectrumStats::from_spectra(&specs, measure).unwrap();
            for m in 1..=5 {
                let top = topk_selector_for(TransformKind::Dft, &st, m).unwrap();
                let ours = irreducible_loss(&specs, &top, norm).unwrap();
                let best = (0u32..32)
                    .filter(|b| b.count_ones() as usize == m)
                    .map(|b| {
                        let idx = (0..5).filter(|i| b >> i & 1 == 1).collect();
                        let sel = ModeSelector::new(shape, idx).unwrap();
                        irreducible_loss(&specs, &sel, norm).unwrap()
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!(ours <= best + 1e-12, "{measure:?} m={m}: {ours} > {best}");
            }
        }
    }

    #[test]
    fn irreducible_loss_examples() {
        let y = real_spec(vec![3.0, 1.0, 2.0, 0.0]);
        let s = ModeSelector::new(Shape::d1(4), vec![0, 2]).unwrap();
        assert_eq!(
            irreducible_loss(std::slice::from_ref(&y), &s, LossNorm::L1).unwrap(),
            1.0
        );
        let full = ModeSelector::identity(Shape::d1(4));
        assert_eq!(
            irreducible_loss(std::slice::from_ref(&y), &full, LossNorm::L2Squared).unwrap(),
            0.0
        );
        let inside = real_spec(vec![3.0, 0.0, 2.0, 0.0]);
        assert_eq!(irreducible_loss(&[inside], &s, LossNorm::L1).unwrap(), 0.0);
        assert!(irreducible_loss(&[], &s, LossNorm::L1).is_err());
    }

    #[test]
    fn decomposition_branches() {
        let y = real_spec(vec![3.0, -1.0, 2.0, 0.5]);
        let s = ModeSelector::new(Shape::d1(4), vec![0, 2]).unwrap();
        let perfect = decompose_predictions(
            &[Coeffs::Real(vec![3.0, 2.0])],
            std::slice::from_ref(&y),
            &s,
            LossNorm::L1,
        )
        .unwrap();
        assert_eq!(perfect.j, 0.0);
        assert_eq!(perfect.l, perfect.r_o);
        let zero =
            decompose_predictions(&[Coeffs::Real(vec![0.0, 0.0])], &[y], &s, LossNorm::L1).unwrap();
        assert_eq!(zero.j, 5.0);
        assert_eq!(zero.l, 6.5);
    }

    #[test]
    fn decomposition_matches_direct_loss() {
        let mut rng = Stream::new(1, 0);
        for case in 0..50 {
            let n = 4 + case % 9;
            let shape = Shape::d1(n);
            let x = Signal::new(shape, (0..n).map(|_| rng.standard_normal()).collect()).unwrap();
            let y = Signal::new(shape, (0..n).map(|_| rng.standard_normal()).collect()).unwrap();
            let m = 1 + rng.below(n as u64) as usize;
            let s = lowpass_selector(m, shape).unwrap();
            let w: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
            let layer =
                KSpaceLayer::new(Mixing::PerMode, 1, 1, m, w, None, Activation::None).unwrap();
            let model = SpectralModel::new(Wiring::T1, s.clone(), vec![layer], vec![]).unwrap();
            for norm in [LossNorm::L1, LossNorm::L2Squared] {
                let d = decompose_loss(&model, &[(x.clone(), y.clone())], norm).unwrap();
                assert_eq!(d.l, d.j + d.r_o);
                let pred = crate::layers::t1_predict_signal(&x, &model).unwrap();
                let e = transforms::dct2_forward(
                    &Signal::new(
                        shape,
                        pred.values()
                            .iter()
                            .zip(y.values())
                            .map(|(a, b)| a - b)
                            .collect(),
                    )
                    .unwrap(),
                )
                .unwrap();
                let direct: f64 = e.real().unwrap().iter().map(|&v| norm.term(v.abs())).sum();
                assert!(
                    (d.l - direct).abs() <= 1e-9 * direct.max(1.0),
                    "{} vs {direct}",
                    d.l
                );
            }
        }
    }

    #[test]
    fn dft_decomposition_counts_conjugate_partners() {
        let shape = Shape::d1(8);
        let mut rng = Stream::new(2, 0);
        let y = Signal::new(shape, (0..8).map(|_| rng.standard_normal()).collect()).unwrap();
        let spec = transforms::dft_forward(&y).unwrap();
        let s = lowpass_selector_for(TransformKind::Dft, 3, shape).unwrap();
        let d = decompose_predictions(
            &[Coeffs::Complex(vec![Default::default(); 3])],
            std::slice::from_ref(&spec),
            &s,
            LossNorm::L2Squared,
        )
        .unwrap();
        assert!((d.l - y.norm().powi(2)).abs() < 1e-12);
        let r = reconstruction_nmse(std::slice::from_ref(&y), TransformKind::Dft, &s).unwrap();
        assert!((r - d.r_o / y.norm().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn full_reconstruction_is_exact() {
        let mut rng = Stream::new(3, 0);
        let shape = Shape::d2(8, 8);
        let signals: Vec<Signal> = (0..5)
            .map(|_| Signal::new(shape, (0..64).map(|_| rng.standard_normal()).collect()).unwrap())
            .collect();
        for kind in [TransformKind::Dct2, TransformKind::Dft] {
            let full = ModeSelector::full(kind, shape);
            assert!(reconstruction_nmse(&signals, kind, &full).unwrap() < 1e-10);
        }
    }

    #[test]
    fn gradient_mass_of_diagonal_maps_is_zero() {
        let shape = Shape::d1(12);
        let probe = Signal::new(shape, (0..12).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let s = lowpass_selector(4, shape).unwrap();
        let id = gradient_dependency_mass(|x| Ok(x.clone()), &s, &probe).unwrap();
        assert!(id.iter().all(|&v| v < 1e-9));
        let diag: Vec<f64> = (0..12).map(|k| 1.0 + k as f64).collect();
        let phi = |x: &Signal| {
            let spec = transforms::dct2_forward(x)?;
            let v = spec
                .real()
                .unwrap()
                .iter()
                .zip(&diag)
                .map(|(a, b)| a * b)
                .collect();
            transforms::dct2_inverse(&Spectrum::new(TransformKind::Dct2, shape, Coeffs::Real(v))?)
        };
        let mass = gradient_dependency_mass(phi, &s, &probe).unwrap();
        assert!(mass.iter().all(|&v| v < 1e-8), "{mass:?}");
    }

    #[test]
    fn gradient_mass_rejects_non_finite_outputs() {
        let shape = Shape::d1(4);
        let probe = Signal::new(shape, vec![1.0; 4]).unwrap();
        let s = lowpass_selector(2, shape).unwrap();
        let bad = |_: &Signal| {
            Ok(Signal::zeros(shape)).and_then(|z: Signal| {
                let mut v = z.into_values();
                v[0] = f64::NAN;
                Signal::new(shape, v)
            })
        };
        assert!(gradient_dependency_mass(bad, &s, &probe).is_err());
    }
}
