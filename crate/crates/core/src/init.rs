//! Variance-preserving initialization for reduced-order k-space layers.
//!
//! For a layer `x_hat = T^-1 S_m^T A S_m T x` with `T` orthonormal and
//! white input, the total output variance is `sigma^2 E||A||_F^2`, so the
//! weights must carry a total Frobenius energy of `N` in expectation:
//!
//! | layout   | real (DCT-II)   | complex (DFT), per part |
//! |----------|-----------------|-------------------------|
//! | dense    | `N / m^2`       | `N / (2 m^2)`           |
//! | diagonal | `N / m`         | `N / (2 m)`             |
//!
//! The Xavier baseline draws `N(0, 1/c)` with `c` the fan-in and ignores
//! truncation, which shrinks the output variance by roughly `m / N`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{streams, Stream};
use crate::scalar::{gelu, Coef};
use crate::transforms::{Shape, TransformKind, TransformOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitFamily {
    VpDense,
    VpDiagonal,
    Xavier,
}

impl std::fmt::Display for InitFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            InitFamily::VpDense => "vp_dense",
            InitFamily::VpDiagonal => "vp_diagonal",
            InitFamily::Xavier => "xavier",
        };
        f.write_str(s)
    }
}

/// A layer-level initialization request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitScheme {
    pub family: InitFamily,
    pub transform_kind: TransformKind,
    /// Full spectrum size.
    pub n: usize,
    /// Retained modes.
    pub m: usize,
    pub seed: u64,
}

impl InitScheme {
    pub fn validate(&self) -> Result<()> {
        check_modes(self.n, self.m)?;
        let v = self.variance_per_part();
        if !(v > 0.0 && v.is_finite()) {
            return invalid(format!("sampling variance must be positive, got {v}"));
        }
        Ok(())
    }

    pub fn layout(&self) -> WeightLayout {
        match self.family {
            InitFamily::VpDiagonal => WeightLayout::Diagonal,
            InitFamily::VpDense | InitFamily::Xavier => WeightLayout::Dense,
        }
    }

    /// Variance of each real part of a weight entry. Xavier uses the dense
    /// layer's fan-in `m`.
    pub fn variance_per_part(&self) -> f64 {
        let parts = match self.transform_kind {
            TransformKind::Dct2 => 1.0,
            TransformKind::Dft => 2.0,
        };
        let (n, m) = (self.n as f64, self.m as f64);
        match self.family {
            InitFamily::VpDense => n / (m * m) / parts,
            InitFamily::VpDiagonal => n / m / parts,
            InitFamily::Xavier => 1.0 / m / parts,
        }
    }
}

fn check_modes(n: usize, m: usize) -> Result<()> {
    if m == 0 || m > n {
        return invalid(format!(
            "retained modes must satisfy 1 <= m <= N, got m={m}, N={n}"
        ));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightLayout {
    /// `m x m` matrix mixing all retained modes.
    Dense,
    /// One weight per retained mode.
    Diagonal,
}

/// Single-channel k-space weights `A`, either `m x m` (row-major) or a length-`m` diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceWeights<C> {
    m: usize,
    layout: WeightLayout,
    values: Vec<C>,
}

impl<C: Coef> KSpaceWeights<C> {
    pub fn new(m: usize, layout: WeightLayout, values: Vec<C>) -> Result<Self> {
        let want = match layout {
            WeightLayout::Dense => m * m,
            WeightLayout::Diagonal => m,
        };
        if values.len() != want {
            return invalid(format!(
                "{layout:?} weights for m={m} need {want} entries, got {}",
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("weights must be finite");
        }
        Ok(KSpaceWeights { m, layout, values })
    }

    pub fn identity(m: usize, layout: WeightLayout) -> Self {
        let values = match layout {
            WeightLayout::Diagonal => vec![C::from_re(1.0); m],
            WeightLayout::Dense => {
                let mut v = vec![C::zero(); m * m];
                for i in 0..m {
                    v[i * m + i] = C::from_re(1.0);
                }
                v
            }
        };
        KSpaceWeights { m, layout, values }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn layout(&self) -> WeightLayout {
        self.layout
    }

    pub fn values(&self) -> &[C] {
        &self.values
    }

    pub fn apply(&self, x: &[C]) -> Vec<C> {
        debug_assert_eq!(x.len(), self.m);
        match self.layout {
            WeightLayout::Diagonal => self.values.iter().zip(x).map(|(&a, &b)| a * b).collect(),
            WeightLayout::Dense => self
                .values
                .chunks_exact(self.m)
                .map(|row| {
                    row.iter()
                        .zip(x)
                        .fold(C::zero(), |acc, (&a, &b)| acc + a * b)
                })
                .collect(),
        }
    }

    /// Dense `m x m` form (a diagonal is expanded).
    pub fn to_dense(&self) -> Vec<C> {
        match self.layout {
            WeightLayout::Dense => self.values.clone(),
            WeightLayout::Diagonal => {
                let mut v = vec![C::zero(); self.m * self.m];
                for (i, &d) in self.values.iter().enumerate() {
                    v[i * self.m + i] = d;
                }
                v
            }
        }
    }

    pub fn sample(m: usize, layout: WeightLayout, var_per_part: f64, rng: &mut Stream) -> Self {
        let len = match layout {
            WeightLayout::Dense => m * m,
            WeightLayout::Diagonal => m,
        };
        let values = (0..len).map(|_| C::gaussian(rng, var_per_part)).collect();
        KSpaceWeights { m, layout, values }
    }
}

/// Dense real weights with entries `N(0, N/m^2)`.
pub fn sample_vp_dense_dct(n: usize, m: usize, seed: u64) -> Result<KSpaceWeights<f64>> {
    check_modes(n, m)?;
    let var = n as f64 / (m * m) as f64;
    Ok(KSpaceWeights::sample(
        m,
        WeightLayout::Dense,
        var,
        &mut Stream::new(seed, 0),
    ))
}

/// Dense complex weights with real and imaginary parts each `N(0, N/(2 m^2))`.
pub fn sample_vp_dense_dft(n: usize, m: usize, seed: u64) -> Result<KSpaceWeights<Complex64>> {
    check_modes(n, m)?;
    let var = n as f64 / (2 * m * m) as f64;
    Ok(KSpaceWeights::sample(
        m,
        WeightLayout::Dense,
        var,
        &mut Stream::new(seed, 0),
    ))
}

/// Diagonal real weights with entries `N(0, N/m)`.
pub fn sample_vp_diagonal(n: usize, m: usize, seed: u64) -> Result<KSpaceWeights<f64>> {
    check_modes(n, m)?;
    let var = n as f64 / m as f64;
    Ok(KSpaceWeights::sample(
        m,
        WeightLayout::Diagonal,
        var,
        &mut Stream::new(seed, 0),
    ))
}

/// Dense real weights with entries `N(0, 1/c_in)`.
pub fn sample_xavier(n: usize, m: usize, c_in: usize, seed: u64) -> Result<KSpaceWeights<f64>> {
    check_modes(n, m)?;
    if c_in == 0 {
        return invalid("fan-in c_in must be positive");
    }
    Ok(KSpaceWeights::sample(
        m,
        WeightLayout::Dense,
        1.0 / c_in as f64,
        &mut Stream::new(seed, 0),
    ))
}

/// Output-to-input total variance ratios of a single truncating layer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    /// One ratio per weight draw.
    pub ratios: Vec<f64>,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    /// Ratio measured after an elementwise GeLU on the layer output (DCT-II
    /// only). Reported, not asserted.
    pub mean_gelu_ratio: Option<f64>,
}

/// Sum over coordinates of the sample variance across a batch.
pub fn total_variance<C: Coef>(batch: &[Vec<C>]) -> f64 {
    let b = batch.len();
    assert!(b > 1, "need at least two samples");
    let n = batch[0].len();
    let mut mean = vec![C::zero(); n];
    for row in batch {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m = m.scale(1.0 / b as f64);
    }
    let ss: f64 = batch
        .iter()
        .map(|row| {
            row.iter()
                .zip(&mean)
                .map(|(&v, &m)| (v - m).norm_sqr())
                .sum::<f64>()
        })
        .sum();
    ss / (b - 1) as f64
}

/// Runs standard-normal inputs through `x_hat = T^-1 S_m^T A S_m T x` with
/// `A` drawn from `scheme` and reports `Var[x_hat] / Var[x]` per weight draw.
/// The selector keeps the first `m` modes; DFT outputs stay complex.
pub fn variance_probe(
    scheme: &InitScheme,
    batch: usize,
    weight_samples: usize,
) -> Result<ProbeReport> {
    scheme.validate()?;
    if batch < 2 || weight_samples == 0 {
        return invalid("probe needs batch >= 2 and at least one weight sample");
    }
    let var = scheme.variance_per_part();
    let layout = scheme.layout();
    let m = scheme.m;
    let seed = scheme.seed;
    match scheme.transform_kind {
        TransformKind::Dct2 => probe_with::<f64>(scheme.n, m, batch, weight_samples, seed, |w| {
            KSpaceWeights::sample(
                m,
                layout,
                var,
                &mut Stream::new(seed, streams::PROBE_WEIGHTS + w as u64),
            )
        }),
        TransformKind::Dft => {
            probe_with::<Complex64>(scheme.n, m, batch, weight_samples, seed, |w| {
                KSpaceWeights::sample(
                    m,
                    layout,
                    var,
                    &mut Stream::new(seed, streams::PROBE_WEIGHTS + w as u64),
                )
            })
        }
    }
}

/// Same measurement as [`variance_probe`] with caller-provided weights per draw.
pub fn probe_with<C: ProbeCoef>(
    n: usize,
    m: usize,
    batch: usize,
    weight_samples: usize,
    seed: u64,
    weights: impl Fn(usize) -> KSpaceWeights<C> + Sync,
) -> Result<ProbeReport> {
    check_modes(n, m)?;
    let op = TransformOperator::new(C::KIND, Shape::d1(n))?;
    let mut rng = Stream::new(seed, streams::PROBE_INPUT);
    let inputs: Vec<Vec<C>> = (0..batch)
        .map(|_| (0..n).map(|_| C::from_re(rng.standard_normal())).collect())
        .collect();
    let input_var = total_variance(&inputs);
    let reduced: Vec<Vec<C>> = inputs
        .iter()
        .map(|x| {
            let mut full = C::forward_full(&op, x);
            full.truncate(m);
            full
        })
        .collect();

    let per_draw: Vec<(f64, Option<f64>)> = (0..weight_samples)
        .into_par_iter()
        .map(|w| {
            let a = weights(w);
            let outputs: Vec<Vec<C>> = reduced
                .iter()
                .map(|z| {
                    let mut full = a.apply(z);
                    full.resize(n, C::zero());
                    C::inverse_full(&op, full)
                })
                .collect();
            let ratio = total_variance(&outputs) / input_var;
            let gelu_ratio = C::gelu_outputs(&outputs).map(|g| total_variance(&g) / input_var);
            (ratio, gelu_ratio)
        })
        .collect();

    let ratios: Vec<f64> = per_draw.iter().map(|p| p.0).collect();
    let (mean_ratio, std_ratio) = mean_std(&ratios);
    let gelu: Vec<f64> = per_draw.iter().filter_map(|p| p.1).collect();
    let mean_gelu_ratio = (!gelu.is_empty()).then(|| mean_std(&gelu).0);
    Ok(ProbeReport {
        ratios,
        mean_ratio,
        std_ratio,
        mean_gelu_ratio,
    })
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Full-spectrum forward/inverse used by the probe; the DFT route keeps the
/// complex output of the inverse instead of projecting to reals.
pub trait ProbeCoef: Coef {
    fn forward_full(op: &TransformOperator, x: &[Self]) -> Vec<Self>;
    fn inverse_full(op: &TransformOperator, spec: Vec<Self>) -> Vec<Self>;
    fn gelu_outputs(outputs: &[Vec<Self>]) -> Option<Vec<Vec<Self>>>;
}

impl ProbeCoef for f64 {
    fn forward_full(op: &TransformOperator, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        op.dct_forward(x, &mut out);
        out
    }
    fn inverse_full(op: &TransformOperator, spec: Vec<f64>) -> Vec<f64> {
        let mut out = vec![0.0; spec.len()];
        op.dct_inverse(&spec, &mut out);
        out
    }
    fn gelu_outputs(outputs: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
        Some(
            outputs
                .iter()
                .map(|o| o.iter().map(|&v| gelu(v)).collect())
                .collect(),
        )
    }
}

impl ProbeCoef for Complex64 {
    fn forward_full(op: &TransformOperator, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = x.to_vec();
        op.dft_forward(&mut out);
        out
    }
    fn inverse_full(op: &TransformOperator, mut spec: Vec<Complex64>) -> Vec<Complex64> {
        op.dft_inverse(&mut spec);
        spec
    }
    fn gelu_outputs(_: &[Vec<Complex64>]) -> Option<Vec<Vec<Complex64>>> {
        None
    }
}

/// Per-mode mean and variance of `X_hat = S_m^T A S_m X` over joint draws of
/// `A` (dense, per-part variance `var_a`) and `X = T x` with `x ~ N(0, sigma^2 I)`.
/// Real weights for DCT-II, complex for DFT. Returns `(mean modulus, variance)` for all `N` modes.
pub fn layer_moments<C: ProbeCoef>(
    n: usize,
    m: usize,
    sigma: f64,
    var_a: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    check_modes(n, m)?;
    let op = TransformOperator::new(C::KIND, Shape::d1(n))?;
    let mut rng = Stream::new(seed, streams::MISC);
    let mut sum = vec![C::zero(); n];
    let mut sum_sq = vec![0.0; n];
    for _ in 0..samples {
        let x: Vec<C> = (0..n).map(|_| C::from_re(rng.normal(sigma))).collect();
        let mut z = C::forward_full(&op, &x);
        z.truncate(m);
        let a = KSpaceWeights::<C>::sample(m, WeightLayout::Dense, var_a, &mut rng);
        let mut out = a.apply(&z);
        out.resize(n, C::zero());
        for k in 0..n {
            sum[k] += out[k];
            sum_sq[k] += out[k].norm_sqr();
        }
    }
    let s = samples as f64;
    Ok((0..n)
        .map(|k| {
            let mean = sum[k].scale(1.0 / s);
            (mean.abs(), sum_sq[k] / s - mean.norm_sqr())
        })
        .collect())
}
