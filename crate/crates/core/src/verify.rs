//! The mathematical property suite behind `sfdm verify`.
//!
//! Every check is seeded, so a report is a pure function of the fault it was
//! run with. A [`Fault`] deliberately breaks one ingredient to show that the
//! corresponding check notices.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::bench::paired_models;
use crate::data::{
    burgers_dt_bound, decode_dataset, encode_dataset, generate_dataset, heat_solution,
    GeneratorConfig, GeneratorKind,
};
use crate::error::Result;
use crate::init::{
    layer_moments, probe_with, sample_vp_dense_dct, total_variance, InitFamily, InitScheme,
    KSpaceWeights, WeightLayout,
};
use crate::layers::{
    fdm_layer_forward, write_checkpoint, Activation, AnyModel, Architecture, InitPolicy,
    KSpaceLayer, Mixing, ModeSelector, SpectralModel, Wiring,
};
use crate::modes::{
    decompose_predictions, irreducible_loss, lowpass_selector, lowpass_selector_for,
    reconstruction_nmse, topk_selector, LossNorm, SpectrumStats, StatMeasure,
};
use crate::rng::{streams, Stream};
use crate::scalar::Coef;
use crate::training::{
    evaluate_nspace, loss, loss_and_grad, make_samples, relative_l2_loss, train, Sample,
    TrainConfig,
};
use crate::transforms::reference::{dct2_matrix, dft_matrix, matvec_complex, matvec_real};
use crate::transforms::{Coeffs, Shape, Signal, Spectrum, TransformKind, TransformOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    None,
    /// vp dense weights drawn with variance `N/m` instead of `N/m^2`.
    VpVarianceNOverM,
    /// Forward DFT without its `1/sqrt(N)` factor.
    UnnormalizedDft,
}

impl std::str::FromStr for Fault {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Fault::None),
            "vp-variance-n-over-m" => Ok(Fault::VpVarianceNOverM),
            "unnormalized-dft" => Ok(Fault::UnnormalizedDft),
            _ => Err(format!(
                "unknown fault {s:?} (none, vp-variance-n-over-m, unnormalized-dft)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub fault: Fault,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

type CheckFn = fn(Fault) -> Result<(bool, String)>;

/// Every check in the suite, in report order.
pub const CHECKS: &[(&str, CheckFn)] = &[
    ("transforms.roundtrip", transforms_roundtrip),
    ("transforms.parseval", transforms_parseval),
    ("transforms.linearity", transforms_linearity),
    ("transforms.matrix_agreement", transforms_matrix_agreement),
    ("transforms.cosine_series", cosine_series),
    ("transforms.normalization_probe", normalization_probe),
    (
        "initialization.total_variance_under_transform",
        total_variance_under_transform,
    ),
    ("initialization.discarded_modes_zero", discarded_modes_zero),
    (
        "initialization.retained_mode_variance",
        retained_mode_variance,
    ),
    ("initialization.determinism", init_determinism),
    ("initialization.collapse", collapse),
    ("layers.transform_counts", transform_counts),
    ("layers.dense_oracle", dense_oracle),
    ("layers.truncation_idempotence", truncation_idempotence),
    ("layers.hermitian_residue", hermitian_residue),
    ("mode_selection.topk_optimal", topk_optimal),
    ("mode_selection.monotone_lowpass", monotone_lowpass),
    ("mode_selection.decomposition", decomposition),
    ("mode_selection.full_reconstruction", full_reconstruction),
    ("training.parseval_equivalence", parseval_equivalence),
    ("training.gradients", gradients),
    ("training.determinism", training_determinism),
    ("training.loss_lower_bound", loss_lower_bound),
    ("data.heat_oracle", heat_oracle),
    ("data.burgers_dissipation", burgers_dissipation),
    ("data.file_roundtrip", file_roundtrip),
    ("bench.depth1_equivalence", depth1_equivalence),
];

/// Runs the suite; `on_check` sees each result as it completes.
pub fn run_suite(fault: Fault, mut on_check: impl FnMut(&Check)) -> VerifyReport {
    let checks: Vec<Check> = CHECKS
        .iter()
        .map(|&(name, f)| {
            let (passed, detail) = match f(fault) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            let c = Check {
                name,
                passed,
                detail,
            };
            on_check(&c);
            c
        })
        .collect();
    VerifyReport {
        fault,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

fn normals(rng: &mut Stream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.standard_normal()).collect()
}

fn kinds() -> [TransformKind; 2] {
    [TransformKind::Dct2, TransformKind::Dft]
}

/// 1D lengths 2..=1024 and a spread of 2D grids.
fn roundtrip_shapes() -> Vec<Shape> {
    let mut shapes: Vec<Shape> = (2..=1024).map(Shape::d1).collect();
    for (r, c) in [
        (2, 2),
        (3, 5),
        (8, 8),
        (7, 16),
        (32, 32),
        (64, 48),
        (128, 128),
    ] {
        shapes.push(Shape::d2(r, c));
    }
    shapes
}

/// Real vector of spectrum `x` in the chosen kind, with the fault applied.
fn forward(op: &TransformOperator, x: &[f64], fault: Fault) -> Vec<f64> {
    match op.kind() {
        TransformKind::Dct2 => op.analyze::<f64>(x),
        TransformKind::Dft => {
            let scale = match fault {
                Fault::UnnormalizedDft => (x.len() as f64).sqrt(),
                _ => 1.0,
            };
            op.analyze::<Complex64>(x)
                .into_iter()
                .flat_map(|c| [c.re * scale, c.im * scale])
                .collect()
        }
    }
}

fn inverse(op: &TransformOperator, spec: &[f64]) -> Vec<f64> {
    match op.kind() {
        TransformKind::Dct2 => op.synthesize(spec),
        TransformKind::Dft => {
            let c: Vec<Complex64> = spec
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect();
            op.synthesize(&c)
        }
    }
}

fn transforms_roundtrip(fault: Fault) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for kind in kinds() {
        for shape in roundtrip_shapes() {
            let op = TransformOperator::new(kind, shape)?;
            let x = normals(
                &mut Stream::new(shape.len() as u64, streams::MISC),
                shape.len(),
            );
            worst = worst.max(rel(&inverse(&op, &forward(&op, &x, fault)), &x));
        }
    }
    Ok((worst < 1e-10, format!("max relative error {worst:.3e}")))
}

fn transforms_parseval(fault: Fault) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for kind in kinds() {
        for shape in roundtrip_shapes() {
            let op = TransformOperator::new(kind, shape)?;
            let x = normals(
                &mut Stream::new(shape.len() as u64, streams::MISC + 1),
                shape.len(),
            );
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ns = forward(&op, &x, fault)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            worst = worst.max((ns - nx).abs() / nx);
        }
    }
    Ok((worst < 1e-10, format!("max relative norm gap {worst:.3e}")))
}

fn transforms_linearity(fault: Fault) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut rng = Stream::new(3, streams::MISC);
    for kind in kinds() {
        for shape in [
            Shape::d1(17),
            Shape::d1(256),
            Shape::d2(12, 10),
            Shape::d2(32, 32),
        ] {
            let op = TransformOperator::new(kind, shape)?;
            let (x, y) = (
                normals(&mut rng, shape.len()),
                normals(&mut rng, shape.len()),
            );
            let (a, b) = (rng.normal(2.0), rng.normal(2.0));
            let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let (tx, ty) = (forward(&op, &x, fault), forward(&op, &y, fault));
            let want: Vec<f64> = tx.iter().zip(&ty).map(|(u, v)| a * u + b * v).collect();
            worst = worst.max(rel(&forward(&op, &mix, fault), &want));
        }
    }
    Ok((worst < 1e-10, format!("max relative error {worst:.3e}")))
}

fn transforms_matrix_agreement(fault: Fault) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for n in 1..=64 {
        let x = normals(&mut Stream::new(n as u64, streams::MISC + 2), n);
        let dct = TransformOperator::new(TransformKind::Dct2, Shape::d1(n))?;
        worst = worst.max(rel(
            &forward(&dct, &x, fault),
            &matvec_real(&dct2_matrix(n), &x),
        ));
        let dft = TransformOperator::new(TransformKind::Dft, Shape::d1(n))?;
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let want: Vec<f64> = matvec_complex(&dft_matrix(n), &xc)
            .into_iter()
            .flat_map(|c| [c.re, c.im])
            .collect();
        worst = worst.max(rel(&forward(&dft, &x, fault), &want));
    }
    Ok((worst < 1e-9, format!("max relative error {worst:.3e}")))
}

fn cosine_series(_: Fault) -> Result<(bool, String)> {
    let (mut sum_err, mut sq_err): (f64, f64) = (0.0, 0.0);
    for n in 2..=64usize {
        for k in 1..n {
            let c = |t: usize| (2.0 * PI * (k * t) as f64 / n as f64).cos();
            let s: f64 = (0..n).map(c).sum();
            let s2: f64 = (0..n).map(|t| c(t).powi(2)).sum();
            sum_err = sum_err.max(s.abs());
            // where 2k = N every term is 1 and the squared sum is N
            let want = if 2 * k == n { n as f64 } else { n as f64 / 2.0 };
            sq_err = sq_err.max((s2 - want).abs());
        }
    }
    Ok((
        sum_err < 1e-9 && sq_err < 1e-9,
        format!("sum {sum_err:.3e}, squared {sq_err:.3e}"),
    ))
}

/// Variance of `T x` coefficients under forward scales `1/N`, `1`, `1/sqrt(N)`.
fn normalization_probe(_: Fault) -> Result<(bool, String)> {
    let n = 256;
    let samples = 4000;
    let op = TransformOperator::new(TransformKind::Dft, Shape::d1(n))?;
    let mut rng = Stream::new(5, streams::MISC);
    let mut power = 0.0;
    for _ in 0..samples {
        let x = normals(&mut rng, n);
        power += op
            .analyze::<Complex64>(&x)
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>();
    }
    // per-coefficient variance with the unitary convention
    let unitary = power / (samples * n) as f64;
    let nf = n as f64;
    let cases = [(1.0 / nf, 1.0 / nf), (1.0, nf), (1.0 / nf.sqrt(), 1.0)];
    let mut ok = true;
    let mut detail = Vec::new();
    for (factor, want) in cases {
        // scaling the unitary transform by factor * sqrt(N)
        let got = unitary * (factor * nf.sqrt()).powi(2);
        ok &= (got / want - 1.0).abs() < 0.1;
        detail.push(format!("{got:.4e}/{want:.4e}"));
    }
    Ok((ok, format!("variance / expected: {}", detail.join(", "))))
}

fn total_variance_under_transform(_: Fault) -> Result<(bool, String)> {
    let n = 256;
    let sigma = 1.5;
    let mut worst: f64 = 0.0;
    for kind in kinds() {
        let op = TransformOperator::new(kind, Shape::d1(n))?;
        let mut rng = Stream::new(7, streams::MISC);
        let xs: Vec<Vec<f64>> = (0..100_000)
            .map(|_| (0..n).map(|_| rng.normal(sigma)).collect())
            .collect();
        let vx = total_variance(&xs);
        let vt = match kind {
            TransformKind::Dct2 => {
                total_variance(&xs.iter().map(|x| op.analyze::<f64>(x)).collect::<Vec<_>>())
            }
            TransformKind::Dft => total_variance(
                &xs.iter()
                    .map(|x| op.analyze::<Complex64>(x))
                    .collect::<Vec<_>>(),
            ),
        };
        worst = worst.max((vt / vx - 1.0).abs());
    }
    Ok((worst < 0.05, format!("max |ratio - 1| {worst:.3e}")))
}

fn discarded_modes_zero(_: Fault) -> Result<(bool, String)> {
    let (n, m) = (64, 8);
    let real = layer_moments::<f64>(n, m, 1.0, 1.0, 2000, 1)?;
    let cplx = layer_moments::<Complex64>(n, m, 1.0, 0.5, 2000, 1)?;
    let nonzero = real[m..]
        .iter()
        .chain(&cplx[m..])
        .filter(|&&(mean, var)| mean != 0.0 || var != 0.0)
        .count();
    Ok((
        nonzero == 0,
        format!("{nonzero} discarded modes with nonzero moments"),
    ))
}

/// Mean over retained modes of `Var[X_hat_k]` against `m sigma^2 sigma_A^2`
/// (twice that for complex weights with `sigma_A^2` per part).
fn retained_mode_variance(_: Fault) -> Result<(bool, String)> {
    let (n, m, sigma, var_a, samples) = (64, 8, 1.3, 0.7, 40_000);
    let avg = |v: &[(f64, f64)]| v[..m].iter().map(|p| p.1).sum::<f64>() / m as f64;
    let real = avg(&layer_moments::<f64>(n, m, sigma, var_a, samples, 2)?);
    let cplx = avg(&layer_moments::<Complex64>(n, m, sigma, var_a, samples, 2)?);
    let want_real = m as f64 * sigma * sigma * var_a;
    let want_cplx = 2.0 * want_real;
    let (er, ec) = (
        (real / want_real - 1.0).abs(),
        (cplx / want_cplx - 1.0).abs(),
    );
    Ok((
        er < 0.05 && ec < 0.05,
        format!("real {real:.4} vs {want_real:.4}, complex {cplx:.4} vs {want_cplx:.4}"),
    ))
}

fn init_determinism(_: Fault) -> Result<(bool, String)> {
    let a = sample_vp_dense_dct(256, 16, 9)?;
    let b = sample_vp_dense_dct(256, 16, 9)?;
    let arch = Architecture {
        wiring: Wiring::FnoStyle,
        transform: TransformKind::Dft,
        depth: 3,
        width: 4,
        in_channels: 1,
        out_channels: 1,
        mixing: Mixing::PerMode,
        activation: Activation::Gelu,
        bias: true,
        residual: true,
    };
    let sel = lowpass_selector_for(TransformKind::Dft, 4, Shape::d1(32))?;
    let m1 = AnyModel::build(&arch, sel.clone(), InitPolicy::Vp, 4)?;
    let m2 = AnyModel::build(&arch, sel, InitPolicy::Vp, 4)?;
    let same = a == b
        && m1
            .flat_params()
            .iter()
            .zip(m2.flat_params())
            .all(|(x, y)| x.to_bits() == y.to_bits());
    Ok((same, "identical seeds give bit-identical weights".into()))
}

fn vp_dense_variance(n: usize, m: usize, fault: Fault) -> f64 {
    let (n, m) = (n as f64, m as f64);
    match fault {
        Fault::VpVarianceNOverM => n / m,
        _ => n / (m * m),
    }
}

/// Xavier ratio strictly decreasing in `N` with `m = 24` and below 0.1 at
/// `N = 1024`, while vp stays in [0.9, 1.1]; also the DFT and diagonal vp
/// variants at `N = 1024`.
fn collapse(fault: Fault) -> Result<(bool, String)> {
    let (m, batch, draws) = (24, 2000, 20);
    let mut ok = true;
    let mut xavier = Vec::new();
    let mut vp = Vec::new();
    for n in [128, 256, 512, 1024] {
        let var = vp_dense_variance(n, m, fault);
        let r = probe_with::<f64>(n, m, batch, draws, 11, |w| {
            KSpaceWeights::sample(
                m,
                WeightLayout::Dense,
                var,
                &mut Stream::new(11, streams::PROBE_WEIGHTS + w as u64),
            )
        })?;
        let x = probe_with::<f64>(n, m, batch, draws, 11, |w| {
            KSpaceWeights::sample(
                m,
                WeightLayout::Dense,
                1.0 / m as f64,
                &mut Stream::new(11, streams::PROBE_WEIGHTS + w as u64),
            )
        })?;
        ok &= (0.9..=1.1).contains(&r.mean_ratio);
        vp.push(r.mean_ratio);
        xavier.push(x.mean_ratio);
    }
    ok &= xavier.windows(2).all(|w| w[1] < w[0]) && xavier[3] < 0.1;
    let n = 1024;
    let var = vp_dense_variance(n, m, fault) / 2.0;
    let dft = probe_with::<Complex64>(n, m, batch, draws, 12, |w| {
        KSpaceWeights::sample(
            m,
            WeightLayout::Dense,
            var,
            &mut Stream::new(12, streams::PROBE_WEIGHTS + w as u64),
        )
    })?;
    let scheme = InitScheme {
        family: InitFamily::VpDiagonal,
        transform_kind: TransformKind::Dct2,
        n,
        m,
        seed: 13,
    };
    let diag = crate::init::variance_probe(&scheme, batch, draws)?;
    ok &= (0.9..=1.1).contains(&dft.mean_ratio) && (0.9..=1.1).contains(&diag.mean_ratio);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|r| format!("{r:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    Ok((
        ok,
        format!(
            "vp {}, xavier {}, vp dft {:.4}, vp diagonal {:.4}",
            fmt(&vp),
            fmt(&xavier),
            dft.mean_ratio,
            diag.mean_ratio
        ),
    ))
}

fn transform_counts(_: Fault) -> Result<(bool, String)> {
    let mut ok = true;
    for kind in kinds() {
        for depth in 1..=8 {
            let (t1, fno) = paired_models(kind, Shape::d2(8, 8), depth, 2, 2, 0)?;
            ok &= t1.count_transforms(false)? == (1, 0);
            ok &= t1.count_transforms(true)? == (1, 1);
            ok &= fno.count_transforms(true)? == (depth, depth);
        }
    }
    Ok((
        ok,
        "T1 (1, 0) in k-space and (1, 1) in n-space, FNO (d, d) for d in 1..=8".into(),
    ))
}

fn dense_oracle(_: Fault) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for n in [4, 8, 13, 16] {
        let mut rng = Stream::new(n as u64, streams::MISC + 3);
        let shape = Shape::d1(n);
        let x = normals(&mut rng, n);
        let sig = Signal::new(shape, x.clone())?;
        let g = 0.3;

        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        idx.truncate(n / 2);
        let m = idx.len();
        let a = normals(&mut rng, m * m);
        let layer = KSpaceLayer::new(Mixing::Dense, 1, 1, m, a.clone(), None, Activation::None)?;
        let got = fdm_layer_forward(
            &sig,
            &layer,
            &ModeSelector::new(shape, idx.clone())?,
            Some(g),
        )?;
        let w = dct2_matrix(n);
        let z: Vec<f64> = idx.iter().map(|&i| matvec_real(&w, &x)[i]).collect();
        let mut full = vec![0.0; n];
        for (r, &i) in idx.iter().enumerate() {
            full[i] = (0..m).map(|c| a[r * m + c] * z[c]).sum();
        }
        let want: Vec<f64> = (0..n)
            .map(|t| (0..n).map(|k| w[k * n + t] * full[k]).sum::<f64>() + g * x[t])
            .collect();
        worst = worst.max(rel(got.values(), &want));

        let idx: Vec<usize> = (0..=n / 2).collect();
        let m = idx.len();
        let a: Vec<Complex64> = (0..m * m)
            .map(|_| Complex64::new(rng.standard_normal(), rng.standard_normal()))
            .collect();
        let layer = KSpaceLayer::new(Mixing::Dense, 1, 1, m, a.clone(), None, Activation::None)?;
        let got = fdm_layer_forward(&sig, &layer, &ModeSelector::new(shape, idx.clone())?, None)?;
        let w = dft_matrix(n);
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let spec = matvec_complex(&w, &xc);
        let mut full = vec![Complex64::default(); n];
        for (r, &i) in idx.iter().enumerate() {
            let u: Complex64 = (0..m).map(|c| a[r * m + c] * spec[idx[c]]).sum();
            let mirror = (n - i) % n;
            if mirror == i {
                full[i] = Complex64::new(u.re, 0.0);
            } else {
                full[i] = u;
                full[mirror] = u.conj();
            }
        }
        let want: Vec<f64> = (0..n)
            .map(|t| {
                (0..n)
                    .map(|k| w[k * n + t].conj() * full[k])
                    .sum::<Complex64>()
                    .re
            })
            .collect();
        worst = worst.max(rel(got.values(), &want));
    }
    Ok((worst < 1e-9, format!("max relative error {worst:.3e}")))
}

fn truncation_idempotence(_: Fault) -> Result<(bool, String)> {
    let shape = Shape::d2(8, 8);
    let mut rng = Stream::new(1, streams::MISC);
    let spec: Vec<f64> = normals(&mut rng, 64);
    let mut idx: Vec<usize> = (0..64).collect();
    rng.shuffle(&mut idx);
    idx.truncate(20);
    let s = ModeSelector::new(shape, idx)?;
    let once = s.scatter(&s.gather(&spec));
    let twice = s.scatter(&s.gather(&once));
    Ok((once == twice, "S^T S applied twice equals once".into()))
}

fn hermitian_residue(_: Fault) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut rng = Stream::new(2, streams::MISC);
    for shape in [
        Shape::d1(16),
        Shape::d1(15),
        Shape::d2(8, 6),
        Shape::d2(7, 9),
    ] {
        let s = lowpass_selector_for(TransformKind::Dft, 3, shape)?;
        let reduced: Vec<Complex64> = (0..s.m())
            .map(|_| Complex64::new(rng.standard_normal(), rng.standard_normal()))
            .collect();
        let mut full = s.embed_coeffs(&reduced);
        let op = TransformOperator::new(TransformKind::Dft, shape)?;
        op.dft_inverse(&mut full);
        worst = worst.max(full.iter().map(|c| c.im.abs()).fold(0.0, f64::max));
    }
    Ok((worst < 1e-9, format!("max imaginary residue {worst:.3e}")))
}

fn topk_optimal(_: Fault) -> Result<(bool, String)> {
    let mut violations = 0;
    let mut cases = 0;
    for n in 1..=12usize {
        for m in 1..=4.min(n) {
            for trial in 0..20 {
                let mut rng = Stream::new((n * 100 + m) as u64, streams::MISC + trial);
                let values: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
                let stats =
                    SpectrumStats::new(Shape::d1(n), values.clone(), 1, StatMeasure::MeanAbs)?;
                let chosen = topk_selector(&stats, m)?;
                let r = |idx: &[usize]| {
                    values.iter().sum::<f64>() - idx.iter().map(|&i| values[i]).sum::<f64>()
                };
                let best = subsets(n, m).map(|s| r(&s)).fold(f64::INFINITY, f64::min);
                cases += 1;
                if r(chosen.indices()) > best + 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    Ok((
        violations == 0,
        format!("{violations} of {cases} cases not minimal"),
    ))
}

/// All `m`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, m: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut cur: Option<Vec<usize>> = (m <= n).then(|| (0..m).collect());
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let c = cur.as_mut().unwrap();
        match (0..m).rev().find(|&i| c[i] < n - m + i) {
            Some(i) => {
                c[i] += 1;
                for j in i + 1..m {
                    c[j] = c[j - 1] + 1;
                }
            }
            None => cur = None,
        }
        Some(out)
    })
}

fn monotone_lowpass(_: Fault) -> Result<(bool, String)> {
    let mut ok = true;
    for n in [8, 16, 33] {
        let values: Vec<f64> = (0..n).map(|k| 1.0 / (1.0 + k as f64)).collect();
        let stats = SpectrumStats::new(Shape::d1(n), values, 1, StatMeasure::MeanAbs)?;
        for m in 1..=n {
            ok &= topk_selector(&stats, m)? == lowpass_selector(m, Shape::d1(n))?;
        }
    }
    Ok((
        ok,
        "strictly decreasing statistics select the lowpass set".into(),
    ))
}

fn decomposition(_: Fault) -> Result<(bool, String)> {
    let shape = Shape::d1(32);
    let mut rng = Stream::new(3, streams::MISC);
    let mut gap: f64 = 0.0;
    let mut direct_gap: f64 = 0.0;
    for kind in kinds() {
        let s = lowpass_selector_for(kind, 6, shape)?;
        let targets: Vec<Spectrum> = (0..10)
            .map(|_| {
                crate::transforms::transform_2d(&Signal::new(shape, normals(&mut rng, 32))?, kind)
            })
            .collect::<Result<_>>()?;
        let preds: Vec<Coeffs> = (0..10)
            .map(|_| match kind {
                TransformKind::Dct2 => Coeffs::Real(normals(&mut rng, s.m())),
                TransformKind::Dft => Coeffs::Complex(
                    (0..s.m())
                        .map(|_| Complex64::new(rng.standard_normal(), rng.standard_normal()))
                        .collect(),
                ),
            })
            .collect();
        for norm in [LossNorm::L1, LossNorm::L2Squared] {
            let d = decompose_predictions(&preds, &targets, &s, norm)?;
            gap = gap.max((d.l - d.j - d.r_o).abs());
            direct_gap = direct_gap.max((d.r_o - irreducible_loss(&targets, &s, norm)?).abs());
            if norm == LossNorm::L2Squared {
                // direct: embed the prediction and sum squared errors on the full grid
                let mut total = 0.0;
                for (p, t) in preds.iter().zip(&targets) {
                    let full = crate::layers::embed(p, &s)?;
                    let diff: f64 = match (full.coeffs(), t.coeffs()) {
                        (Coeffs::Real(a), Coeffs::Real(b)) => {
                            a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
                        }
                        (Coeffs::Complex(a), Coeffs::Complex(b)) => {
                            a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
                        }
                        _ => unreachable!("same kind"),
                    };
                    total += diff;
                }
                direct_gap = direct_gap.max((total / preds.len() as f64 - d.l).abs() / d.l);
            }
        }
    }
    Ok((
        gap < 1e-12 && direct_gap < 1e-9,
        format!("|L - J - R_o| {gap:.3e}, direct gap {direct_gap:.3e}"),
    ))
}

fn full_reconstruction(_: Fault) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut rng = Stream::new(4, streams::MISC);
    for shape in [Shape::d1(31), Shape::d2(8, 12)] {
        let signals: Vec<Signal> = (0..5)
            .map(|_| Signal::new(shape, normals(&mut rng, shape.len())))
            .collect::<Result<_>>()?;
        for kind in kinds() {
            let s = ModeSelector::full(kind, shape);
            worst = worst.max(reconstruction_nmse(&signals, kind, &s)?);
        }
    }
    Ok((worst < 1e-10, format!("max N-MSE {worst:.3e}")))
}

fn random_samples(rng: &mut Stream, count: usize, shape: Shape, c_in: usize) -> Vec<Sample> {
    (0..count)
        .map(|_| Sample {
            input: normals(rng, c_in * shape.len()),
            target: normals(rng, shape.len()),
        })
        .collect()
}

fn parseval_equivalence(_: Fault) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut rng = Stream::new(5, streams::MISC);
    for shape in [Shape::d1(16), Shape::d2(6, 6), Shape::d2(5, 8)] {
        let samples = random_samples(&mut rng, 4, shape, 1);
        for kind in kinds() {
            let arch = Architecture {
                wiring: Wiring::T1,
                transform: kind,
                depth: 2,
                width: 3,
                in_channels: 1,
                out_channels: 1,
                mixing: Mixing::PerMode,
                activation: Activation::Gelu,
                bias: true,
                residual: false,
            };
            let model = AnyModel::build(&arch, ModeSelector::full(kind, shape), InitPolicy::Vp, 6)?;
            let k = match &model {
                AnyModel::Dct(m) => loss(m, &samples)?,
                AnyModel::Dft(m) => loss(m, &samples)?,
            };
            let mut n = 0.0;
            for s in &samples {
                n += relative_l2_loss(&model.predict(&s.input)?, &s.target)?;
            }
            n /= samples.len() as f64;
            worst = worst.max((k - n).abs() / n);
        }
    }
    Ok((worst < 1e-10, format!("max relative gap {worst:.3e}")))
}

/// Largest `|g - fd| / max(|g|, |fd|, 1e-3)` over all parameters, with
/// central differences of step `1e-6`.
pub fn max_gradient_error<C: Coef>(model: &SpectralModel<C>, samples: &[Sample]) -> Result<f64> {
    let (_, g) = loss_and_grad(model, samples)?;
    let analytic = g.flatten();
    let mut params = model.params();
    let flat = params.flatten();
    let mut probe = model.clone();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut at = |delta: f64| -> Result<f64> {
            let mut f = flat.clone();
            f[i] += delta;
            params.load_flat(&f)?;
            probe.set_params(&params)?;
            loss(&probe, samples)
        };
        let fd = (at(h)? - at(-h)?) / (2.0 * h);
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-3));
    }
    Ok(worst)
}

/// The twenty small models of the gradient check: both wirings, both
/// transforms, with and without GeLU, varied shapes and mixing.
pub fn gradient_models() -> Result<Vec<(AnyModel, Vec<Sample>)>> {
    let mut out = Vec::new();
    let shapes = [
        Shape::d1(8),
        Shape::d2(4, 4),
        Shape::d1(11),
        Shape::d2(3, 6),
        Shape::d1(6),
    ];
    let mut rng = Stream::new(6, streams::MISC);
    let mut i = 0;
    for wiring in [Wiring::T1, Wiring::FnoStyle] {
        for kind in kinds() {
            for activation in [Activation::None, Activation::Gelu] {
                // 4 combinations get three variants and 4 get two: 20 models
                let variants = if i < 4 { 3 } else { 2 };
                for variant in 0..variants {
                    let shape = shapes[(i + variant) % shapes.len()];
                    let dense = variant == 1;
                    let arch = Architecture {
                        wiring,
                        transform: kind,
                        depth: 1 + (i + variant) % 3,
                        width: 2,
                        in_channels: 1 + variant % 2,
                        out_channels: 1,
                        mixing: if dense {
                            Mixing::Dense
                        } else {
                            Mixing::PerMode
                        },
                        activation,
                        bias: true,
                        residual: wiring == Wiring::FnoStyle,
                    };
                    let modes = match kind {
                        TransformKind::Dct2 => 3,
                        TransformKind::Dft => 2,
                    };
                    let sel = lowpass_selector_for(kind, modes, shape)?;
                    let model = AnyModel::build(&arch, sel, InitPolicy::Xavier, i as u64)?;
                    let samples = random_samples(&mut rng, 2, shape, arch.in_channels);
                    out.push((model, samples));
                }
                i += 1;
            }
        }
    }
    Ok(out)
}

fn gradients(_: Fault) -> Result<(bool, String)> {
    let models = gradient_models()?;
    let mut worst: f64 = 0.0;
    for (model, samples) in &models {
        let e = match model {
            AnyModel::Dct(m) => max_gradient_error(m, samples)?,
            AnyModel::Dft(m) => max_gradient_error(m, samples)?,
        };
        worst = worst.max(e);
    }
    Ok((
        worst < 1e-5,
        format!("{} models, max relative error {worst:.3e}", models.len()),
    ))
}

fn small_heat() -> Result<(crate::data::Dataset, TrainConfig)> {
    let ds = generate_dataset(&GeneratorConfig::new(
        GeneratorKind::Heat2d,
        8,
        0.05,
        1.0,
        16,
        3,
    ))?;
    Ok((ds, TrainConfig::new(5, 4, 1e-2, 8)))
}

fn training_determinism(_: Fault) -> Result<(bool, String)> {
    let (ds, cfg) = small_heat()?;
    let samples = make_samples(&ds, 0..16, &cfg)?;
    let arch = Architecture {
        wiring: Wiring::FnoStyle,
        transform: TransformKind::Dct2,
        depth: 2,
        width: 3,
        in_channels: 1,
        out_channels: 1,
        mixing: Mixing::PerMode,
        activation: Activation::Gelu,
        bias: true,
        residual: true,
    };
    let run = || -> Result<Vec<u8>> {
        let sel = lowpass_selector(4, ds.shape())?;
        let mut m = SpectralModel::<f64>::build(&arch, sel, InitPolicy::Vp, 2)?;
        train(&mut m, &samples, &[], &cfg, |_| {})?;
        let mut bytes = Vec::new();
        write_checkpoint(&AnyModel::Dct(m), &mut bytes)?;
        Ok(bytes)
    };
    Ok((
        run()? == run()?,
        "two runs give identical checkpoint bytes".into(),
    ))
}

fn loss_lower_bound(_: Fault) -> Result<(bool, String)> {
    let (ds, cfg) = small_heat()?;
    let samples = make_samples(&ds, 0..16, &cfg)?;
    let sel = lowpass_selector_for(TransformKind::Dft, 2, ds.shape())?;
    let arch = Architecture {
        wiring: Wiring::T1,
        transform: TransformKind::Dft,
        depth: 1,
        width: 1,
        in_channels: 1,
        out_channels: 1,
        mixing: Mixing::PerMode,
        activation: Activation::None,
        bias: false,
        residual: false,
    };
    let mut model = SpectralModel::<Complex64>::build(&arch, sel.clone(), InitPolicy::Vp, 3)?;
    train(
        &mut model,
        &samples,
        &[],
        &TrainConfig { epochs: 50, ..cfg },
        |_| {},
    )?;
    let trained = evaluate_nspace(&model, &samples)?;
    let targets: Vec<Signal> = samples
        .iter()
        .map(|s| Signal::new(ds.shape(), s.target.clone()))
        .collect::<Result<_>>()?;
    // per-sample N-MSE of the truncation roundtrip, same averaging as evaluate
    let mut bound = 0.0;
    for t in &targets {
        bound += reconstruction_nmse(std::slice::from_ref(t), TransformKind::Dft, &sel)?;
    }
    bound /= targets.len() as f64;
    Ok((
        trained >= bound * (1.0 - 1e-12),
        format!("trained N-MSE {trained:.6e} >= bound {bound:.6e}"),
    ))
}

/// Heat propagator against RK4 on each Fourier mode.
fn heat_oracle(_: Fault) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (nu, t) in [(0.01, 1.0), (0.1, 10.0), (0.05, 3.0)] {
        let cfg = GeneratorConfig::new(GeneratorKind::Heat2d, 16, nu, t, 1, 1);
        let x0 = crate::data::sample_initial_condition(&cfg, 0)?;
        let got = heat_solution(&x0, nu, t)?;
        let shape = x0.shape();
        let op = TransformOperator::new(TransformKind::Dft, shape)?;
        let mut spec = op.analyze::<Complex64>(x0.values());
        let steps = 2000;
        let h = t / steps as f64;
        for (i, c) in spec.iter_mut().enumerate() {
            let (kr, kc) = shape.wavenumbers(i);
            let z = -nu * ((kr * kr + kc * kc) as f64) * h;
            let step = 1.0 + z + z * z / 2.0 + z.powi(3) / 6.0 + z.powi(4) / 24.0;
            *c *= step.powi(steps);
        }
        let want = op.synthesize(&spec);
        worst = worst.max(rel(got.values(), &want));
    }
    Ok((worst < 1e-8, format!("max relative error {worst:.3e}")))
}

fn burgers_dissipation(_: Fault) -> Result<(bool, String)> {
    let cfg = GeneratorConfig {
        frames: 3,
        ..GeneratorConfig::new(GeneratorKind::Burgers1d, 64, 0.05, 0.5, 8, 4)
    };
    let ds = generate_dataset(&cfg)?;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut ok = true;
    for i in 0..ds.count() {
        for f in 1..ds.frames() {
            ok &= norm(ds.frame(i, f)) <= norm(ds.frame(i, f - 1)) * (1.0 + 1e-12);
        }
        ok &= burgers_dt_bound(&ds.signal(i, 0), cfg.viscosity) > 0.0;
    }
    Ok((
        ok,
        format!("{} samples, nonincreasing energy per frame", ds.count()),
    ))
}

fn file_roundtrip(_: Fault) -> Result<(bool, String)> {
    let (ds, _) = small_heat()?;
    let back = decode_dataset(&encode_dataset(&ds))?;
    let same = back.shape() == ds.shape()
        && back.frames() == ds.frames()
        && back
            .values()
            .iter()
            .zip(ds.values())
            .all(|(a, b)| a.to_bits() == b.to_bits());
    Ok((same, "encode then decode is bit-exact".into()))
}

fn depth1_equivalence(_: Fault) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut rng = Stream::new(8, streams::MISC);
    for kind in kinds() {
        let shape = Shape::d2(8, 8);
        let full = match kind {
            TransformKind::Dct2 => 8,
            TransformKind::Dft => 5,
        };
        let (t1, fno) = paired_models(kind, shape, 1, 3, full, 1)?;
        let x = normals(&mut rng, 3 * shape.len());
        worst = worst.max(rel(&t1.predict(&x)?, &fno.predict(&x)?));
    }
    Ok((worst < 1e-10, format!("max relative gap {worst:.3e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_enumerates_binomial_count() {
        assert_eq!(subsets(5, 2).count(), 10);
        assert_eq!(subsets(12, 4).count(), 495);
        assert_eq!(subsets(3, 3).collect::<Vec<_>>(), vec![vec![0, 1, 2]]);
        assert_eq!(subsets(2, 3).count(), 0);
    }

    #[test]
    fn gradient_models_cover_every_combination() {
        let models = gradient_models().unwrap();
        assert_eq!(models.len(), 20);
        for wiring in [Wiring::T1, Wiring::FnoStyle] {
            for kind in kinds() {
                assert!(models
                    .iter()
                    .any(|(m, _)| m.wiring() == wiring && m.kind() == kind));
            }
        }
    }

    #[test]
    fn faults_trip_their_checks() {
        let (ok, _) = transforms_parseval(Fault::UnnormalizedDft).unwrap();
        assert!(!ok);
        let (ok, _) = collapse(Fault::VpVarianceNOverM).unwrap();
        assert!(!ok);
        assert!("bogus".parse::<Fault>().is_err());
    }

    #[test]
    fn cheap_checks_pass() {
        for check in [
            cosine_series,
            truncation_idempotence,
            hermitian_residue,
            monotone_lowpass,
            file_roundtrip,
        ] {
            let (ok, detail) = check(Fault::None).unwrap();
            assert!(ok, "{detail}");
        }
    }
}
