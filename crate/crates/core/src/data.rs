//! Synthetic operator-learning datasets with known ground truth.
//!
//! Grids are periodic on `[0, 2 pi)` along every axis, so DFT index `j`
//! carries the integer wavenumber returned by [`Shape::wavenumbers`].
//!
//! Dataset files (`.sfds`), little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic `SFDS` | 4 bytes |
//! | version (1) | u32 |
//! | kind tag (0 heat2d, 1 burgers1d) | u32 |
//! | ndim | u32 |
//! | dims | u64 x ndim |
//! | frames per sample | u64 |
//! | count | u64 |
//! | values | f64, sample-major, then frame, then row-major grid |
//!
//! Each file has a JSON manifest alongside with the generator config,
//! contiguous train/val/test index ranges and the file's SHA-256.

use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, shape_err, Error, Result};
use crate::rng::{streams, Stream};
use crate::transforms::{Shape, Signal, TransformKind, TransformOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Heat2d,
    Burgers1d,
}

impl GeneratorKind {
    pub fn tag(self) -> u32 {
        match self {
            GeneratorKind::Heat2d => 0,
            GeneratorKind::Burgers1d => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(GeneratorKind::Heat2d),
            1 => Some(GeneratorKind::Burgers1d),
            _ => None,
        }
    }

    pub fn shape(self, resolution: usize) -> Shape {
        match self {
            GeneratorKind::Heat2d => Shape::d2(resolution, resolution),
            GeneratorKind::Burgers1d => Shape::d1(resolution),
        }
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heat2d" | "heat_2d" => Ok(GeneratorKind::Heat2d),
            "burgers1d" | "burgers_1d" => Ok(GeneratorKind::Burgers1d),
            _ => invalid(format!(
                "unknown generator kind {s:?} (expected heat2d or burgers1d)"
            )),
        }
    }
}

fn default_decay() -> f64 {
    2.0
}
fn default_frames() -> usize {
    2
}
fn default_train() -> f64 {
    0.8
}
fn default_val() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub resolution: usize,
    pub viscosity: f64,
    /// Time between consecutive frames.
    pub horizon: f64,
    /// Initial-condition amplitude decay exponent.
    #[serde(default = "default_decay")]
    pub decay: f64,
    pub count: usize,
    pub seed: u64,
    /// Snapshots per sample, the first being the initial condition.
    #[serde(default = "default_frames")]
    pub frames: usize,
    /// Burgers time step; chosen from the stability bound when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_train")]
    pub train_fraction: f64,
    #[serde(default = "default_val")]
    pub val_fraction: f64,
}

impl GeneratorConfig {
    pub fn new(
        kind: GeneratorKind,
        resolution: usize,
        viscosity: f64,
        horizon: f64,
        count: usize,
        seed: u64,
    ) -> Self {
        GeneratorConfig {
            kind,
            resolution,
            viscosity,
            horizon,
            decay: default_decay(),
            count,
            seed,
            frames: default_frames(),
            dt: None,
            train_fraction: default_train(),
            val_fraction: default_val(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.viscosity) {
            return invalid("viscosity must be positive");
        }
        if !pos(self.horizon) {
            return invalid("horizon must be positive");
        }
        if !(self.decay.is_finite() && self.decay >= 0.0) {
            return invalid("decay must be nonnegative");
        }
        if self.count == 0 {
            return invalid("count must be at least 1");
        }
        if self.resolution < 2 {
            return invalid("resolution must be at least 2");
        }
        if self.frames < 2 {
            return invalid("frames must be at least 2");
        }
        if let Some(dt) = self.dt {
            if !pos(dt) {
                return invalid("dt must be positive");
            }
        }
        let (t, v) = (self.train_fraction, self.val_fraction);
        if !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&v) || t + v > 1.0 + 1e-12 {
            return invalid("split fractions must lie in [0, 1] and sum to at most 1");
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        self.kind.shape(self.resolution)
    }
}

fn wavenumber_sq(shape: Shape, flat: usize) -> f64 {
    let (kr, kc) = shape.wavenumbers(flat);
    (kr * kr + kc * kc) as f64
}

fn radial_wavenumber(shape: Shape, flat: usize) -> f64 {
    wavenumber_sq(shape, flat).sqrt()
}

/// Smooth periodic random field: white noise filtered by `(1 + |k|)^-decay`
/// and rescaled to unit expected per-pixel variance. Deterministic per
/// `(seed, index)`.
pub fn sample_initial_condition(config: &GeneratorConfig, index: u64) -> Result<Signal> {
    config.validate()?;
    let shape = config.shape();
    let n = shape.len();
    let mut rng = Stream::new(config.seed, streams::INITIAL_CONDITION + index);
    let noise: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
    let amp: Vec<f64> = (0..n)
        .map(|i| (1.0 + radial_wavenumber(shape, i)).powf(-config.decay))
        .collect();
    // a unitary DFT of white noise has unit expected power per mode
    let power = amp.iter().map(|a| a * a).sum::<f64>() / n as f64;
    let scale = power.sqrt().recip();
    let op = TransformOperator::new(TransformKind::Dft, shape)?;
    Signal::new(shape, spectral_multiply(&op, &noise, |i| amp[i] * scale))
}

fn spectral_multiply(op: &TransformOperator, x: &[f64], factor: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut buf = vec![Complex64::default(); x.len()];
    op.dft_forward_real(x, &mut buf);
    for (i, v) in buf.iter_mut().enumerate() {
        *v *= factor(i);
    }
    op.dft_inverse(&mut buf);
    buf.iter().map(|v| v.re).collect()
}

/// Exact periodic heat flow: mode `k` scaled by `exp(-nu |k|^2 T)`.
pub fn heat_solution(x0: &Signal, nu: f64, t: f64) -> Result<Signal> {
    if !(nu >= 0.0 && t >= 0.0) {
        return invalid("viscosity and time must be nonnegative");
    }
    let shape = x0.shape();
    let op = TransformOperator::new(TransformKind::Dft, shape)?;
    let y = spectral_multiply(&op, x0.values(), |i| {
        (-nu * wavenumber_sq(shape, i) * t).exp()
    });
    Signal::new(shape, y)
}

/// Largest admissible Burgers step: `min(0.5 dx / max|u|, 2 / (nu k_max^2))`.
pub fn burgers_dt_bound(x0: &Signal, nu: f64) -> f64 {
    let n = x0.shape().len();
    let dx = 2.0 * std::f64::consts::PI / n as f64;
    let k_max = (n / 2) as f64;
    let umax = x0.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let advective = if umax > 0.0 {
        0.5 * dx / umax
    } else {
        f64::INFINITY
    };
    advective.min(2.0 / (nu * k_max * k_max))
}

const BLOWUP: f64 = 1e3;

/// Viscous Burgers `u_t = -u u_x + nu u_xx` on a 1D periodic grid: spectral
/// derivatives, 2/3-rule dealiasing of the nonlinear term and classical RK4.
/// The step is shortened so a whole number of steps lands on `t`.
pub fn burgers_solution(x0: &Signal, nu: f64, t: f64, dt: f64) -> Result<Signal> {
    let shape = x0.shape();
    if !shape.is_1d() {
        return shape_err("1D grid", shape);
    }
    if !(nu > 0.0 && t >= 0.0 && dt > 0.0) {
        return invalid("burgers needs nu > 0, t >= 0, dt > 0");
    }
    let bound = burgers_dt_bound(x0, nu);
    if dt > bound {
        return Err(Error::Numerical(format!(
            "dt = {dt} exceeds the stability bound {bound}"
        )));
    }
    let n = shape.len();
    let steps = (t / dt).ceil() as usize;
    if steps == 0 {
        return Ok(x0.clone());
    }
    let h = t / steps as f64;
    let op = TransformOperator::new(TransformKind::Dft, shape)?;
    let ks: Vec<f64> = (0..n).map(|i| shape.wavenumbers(i).1 as f64).collect();
    let cutoff = n as f64 / 3.0;
    let rhs =
        |u_hat: &[Complex64], out: &mut [Complex64], phys: &mut Vec<Complex64>| -> Result<()> {
            phys.clear();
            phys.extend_from_slice(u_hat);
            op.dft_inverse(phys);
            let mut umax = 0.0f64;
            for v in phys.iter_mut() {
                let u = v.re;
                umax = umax.max(u.abs());
                *v = Complex64::new(0.5 * u * u, 0.0);
            }
            if !(umax <= BLOWUP) {
                return Err(Error::Numerical(format!(
                    "solution blew up (max |u| = {umax})"
                )));
            }
            op.dft_forward(phys);
            for i in 0..n {
                let k = ks[i];
                let adv = if k.abs() < cutoff {
                    Complex64::new(0.0, -k) * phys[i]
                } else {
                    Complex64::default()
                };
                out[i] = adv - u_hat[i] * (nu * k * k);
            }
            Ok(())
        };
    let mut u = vec![Complex64::default(); n];
    op.dft_forward_real(x0.values(), &mut u);
    let mut phys = Vec::with_capacity(n);
    let (mut k1, mut k2, mut k3, mut k4) = (
        vec![Complex64::default(); n],
        vec![Complex64::default(); n],
        vec![Complex64::default(); n],
        vec![Complex64::default(); n],
    );
    let mut tmp = vec![Complex64::default(); n];
    for _ in 0..steps {
        rhs(&u, &mut k1, &mut phys)?;
        for i in 0..n {
            tmp[i] = u[i] + k1[i] * (0.5 * h);
        }
        rhs(&tmp, &mut k2, &mut phys)?;
        for i in 0..n {
            tmp[i] = u[i] + k2[i] * (0.5 * h);
        }
        rhs(&tmp, &mut k3, &mut phys)?;
        for i in 0..n {
            tmp[i] = u[i] + k3[i] * h;
        }
        rhs(&tmp, &mut k4, &mut phys)?;
        for i in 0..n {
            u[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
    }
    op.dft_inverse(&mut u);
    let out: Vec<f64> = u.iter().map(|v| v.re).collect();
    if out.iter().any(|v| !(v.abs() <= BLOWUP)) {
        return Err(Error::Numerical("solution blew up".into()));
    }
    Signal::new(shape, out)
}

/// In-memory dataset: `count` samples of `frames` snapshots each.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    kind: GeneratorKind,
    shape: Shape,
    frames: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(kind: GeneratorKind, shape: Shape, frames: usize, values: Vec<f64>) -> Result<Self> {
        let per = shape.len() * frames;
        if frames == 0 || values.is_empty() || !values.len().is_multiple_of(per) {
            return shape_err(format!("a multiple of {per} values"), values.len());
        }
        crate::error::check_finite(&values)?;
        Ok(Dataset {
            kind,
            shape,
            frames,
            values,
        })
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }
    pub fn shape(&self) -> Shape {
        self.shape
    }
    pub fn frames(&self) -> usize {
        self.frames
    }
    pub fn count(&self) -> usize {
        self.values.len() / (self.shape.len() * self.frames)
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self, sample: usize, frame: usize) -> &[f64] {
        let n = self.shape.len();
        let start = (sample * self.frames + frame) * n;
        &self.values[start..start + n]
    }

    pub fn signal(&self, sample: usize, frame: usize) -> Signal {
        Signal::new(self.shape, self.frame(sample, frame).to_vec())
            .expect("validated on construction")
    }

    /// `(first frame, last frame)` of every sample in `range`.
    pub fn pairs(&self, range: std::ops::Range<usize>) -> Vec<(Signal, Signal)> {
        range
            .map(|i| (self.signal(i, 0), self.signal(i, self.frames - 1)))
            .collect()
    }
}

/// Contiguous sample ranges of each split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: (usize, usize),
    pub val: (usize, usize),
    pub test: (usize, usize),
}

impl Splits {
    /// Floors the train and validation sizes; the test split takes the rest.
    pub fn from_fractions(count: usize, train: f64, val: f64) -> Self {
        let size = |f: f64| ((count as f64 * f) + 1e-9).floor() as usize;
        let nt = size(train).min(count);
        let nv = size(val).min(count - nt);
        Splits {
            train: (0, nt),
            val: (nt, nt + nv),
            test: (nt + nv, count),
        }
    }
}

/// Generates every sample in parallel; results do not depend on the
/// thread count.
pub fn generate_dataset(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let shape = config.shape();
    let samples = (0..config.count as u64)
        .into_par_iter()
        .map(|i| generate_sample(config, i))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Dataset::new(config.kind, shape, config.frames, samples.concat())
}

fn generate_sample(config: &GeneratorConfig, index: u64) -> Result<Vec<f64>> {
    let x0 = sample_initial_condition(config, index)?;
    let mut out = x0.values().to_vec();
    let mut prev = x0.clone();
    for f in 1..config.frames {
        let next = match config.kind {
            GeneratorKind::Heat2d => {
                heat_solution(&x0, config.viscosity, config.horizon * f as f64)?
            }
            GeneratorKind::Burgers1d => {
                let dt = config
                    .dt
                    .unwrap_or_else(|| 0.9 * burgers_dt_bound(&prev, config.viscosity));
                let next = burgers_solution(&prev, config.viscosity, config.horizon, dt)?;
                if next.norm() > prev.norm() * (1.0 + 1e-12) {
                    return Err(Error::Numerical(format!(
                        "sample {index}: energy grew over frame {f}"
                    )));
                }
                next
            }
        };
        out.extend_from_slice(next.values());
        prev = next;
    }
    Ok(out)
}

/// JSON manifest written next to a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub file: String,
    pub config: GeneratorConfig,
    pub rows: usize,
    pub cols: usize,
    pub frames: usize,
    pub count: usize,
    pub splits: Splits,
    pub sha256: String,
}

const MAGIC: &[u8; 4] = b"SFDS";
const VERSION: u32 = 1;

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + ds.values.len() * 8);
    out.extend_from_slice(MAGIC);
    let dims: Vec<u64> = if ds.shape.is_1d() {
        vec![ds.shape.cols as u64]
    } else {
        vec![ds.shape.rows as u64, ds.shape.cols as u64]
    };
    for v in [VERSION, ds.kind.tag(), dims.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in dims
        .iter()
        .copied()
        .chain([ds.frames as u64, ds.count() as u64])
    {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &ds.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let bad = |m: &str| Error::Format(format!("dataset: {m}"));
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| bad("truncated header"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u32_at =
        || -> Result<u32> { Ok(u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"))) };
    let version = u32_at()?;
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let kind = GeneratorKind::from_tag(u32_at()?).ok_or_else(|| bad("unknown kind tag"))?;
    let ndim = u32_at()?;
    let mut u64_at = || -> Result<usize> {
        let v = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| bad("size overflow"))
    };
    let shape = match ndim {
        1 => Shape::d1(u64_at()?),
        2 => {
            let r = u64_at()?;
            Shape::d2(r, u64_at()?)
        }
        _ => return Err(bad("ndim must be 1 or 2")),
    };
    let frames = u64_at()?;
    let count = u64_at()?;
    shape.validate()?;
    let header = 4 + 12 + 8 * (ndim as usize + 2);
    let want = shape
        .len()
        .checked_mul(frames)
        .and_then(|v| v.checked_mul(count))
        .ok_or_else(|| bad("size overflow"))?;
    if bytes.len() - header != want * 8 {
        return Err(bad(&format!(
            "expected {want} values, found {} bytes",
            bytes.len() - header
        )));
    }
    let values = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Dataset::new(kind, shape, frames, values)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes `<dir>/<name>.sfds` and `<dir>/<name>.json`; returns the manifest.
pub fn write_dataset(
    ds: &Dataset,
    config: &GeneratorConfig,
    dir: impl AsRef<Path>,
    name: &str,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let bytes = encode_dataset(ds);
    let file = format!("{name}.sfds");
    std::fs::File::create(dir.join(&file))?.write_all(&bytes)?;
    let manifest = Manifest {
        format_version: VERSION,
        file,
        config: config.clone(),
        rows: ds.shape.rows,
        cols: ds.shape.cols,
        frames: ds.frames,
        count: ds.count(),
        splits: Splits::from_fractions(ds.count(), config.train_fraction, config.val_fraction),
        sha256: sha256_hex(&bytes),
    };
    std::fs::write(
        dir.join(format!("{name}.json")),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

/// Reads a dataset through its manifest, verifying the checksum.
pub fn read_dataset(manifest_path: impl AsRef<Path>) -> Result<(Manifest, Dataset)> {
    let manifest_path = manifest_path.as_ref();
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(manifest_path)?)?;
    let data_path: PathBuf = manifest_path
        .parent()
        .unwrap_or(Path::new("."))
        .join(&manifest.file);
    let bytes = std::fs::read(&data_path)?;
    if sha256_hex(&bytes) != manifest.sha256 {
        return Err(Error::Format(format!(
            "{} does not match its manifest checksum",
            data_path.display()
        )));
    }
    let ds = decode_dataset(&bytes)?;
    if ds.count() != manifest.count
        || ds.frames != manifest.frames
        || ds.shape != Shape::d2(manifest.rows, manifest.cols)
    {
        return Err(Error::Format(
            "dataset header disagrees with manifest".into(),
        ));
    }
    Ok((manifest, ds))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: GeneratorKind, resolution: usize) -> GeneratorConfig {
        GeneratorConfig::new(kind, resolution, 0.01, 1.0, 4, 7)
    }

    fn single_mode(n: usize, k: usize) -> Signal {
        let x = (0..n)
            .map(|j| (2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64).cos())
            .collect();
        Signal::new(Shape::d1(n), x).unwrap()
    }

    #[test]
    fn config_validation() {
        let good = cfg(GeneratorKind::Heat2d, 8);
        assert!(good.validate().is_ok());
        for bad in [
            GeneratorConfig {
                viscosity: 0.0,
                ..good.clone()
            },
            GeneratorConfig {
                horizon: -1.0,
                ..good.clone()
            },
            GeneratorConfig {
                count: 0,
                ..good.clone()
            },
            GeneratorConfig {
                frames: 1,
                ..good.clone()
            },
            GeneratorConfig {
                train_fraction: 0.95,
                ..good.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
        assert_eq!(
            "heat2d".parse::<GeneratorKind>().unwrap(),
            GeneratorKind::Heat2d
        );
        assert!("ns2d".parse::<GeneratorKind>().is_err());
    }

    #[test]
    fn initial_condition_is_deterministic_and_decays() {
        let mut c = cfg(GeneratorKind::Burgers1d, 128);
        let a = sample_initial_condition(&c, 3).unwrap();
        assert_eq!(a, sample_initial_condition(&c, 3).unwrap());
        assert_ne!(a, sample_initial_condition(&c, 4).unwrap());
        c.decay = 8.0;
        let op = TransformOperator::new(TransformKind::Dft, c.shape()).unwrap();
        for i in 0..20 {
            let x = sample_initial_condition(&c, i).unwrap();
            let mut spec = vec![Complex64::default(); 128];
            op.dft_forward_real(x.values(), &mut spec);
            let total: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
            let outside: f64 = spec
                .iter()
                .enumerate()
                .filter(|(j, _)| radial_wavenumber(c.shape(), *j) > 2.0)
                .map(|(_, v)| v.norm_sqr())
                .sum();
            assert!(outside < 0.01 * total);
        }
    }

    #[test]
    fn initial_condition_pixels_are_centred() {
        let c = GeneratorConfig {
            decay: 1.0,
            ..cfg(GeneratorKind::Heat2d, 4)
        };
        let count = 10_000;
        let mut mean = [0.0; 16];
        let mut var = [0.0; 16];
        for i in 0..count {
            let x = sample_initial_condition(&c, i).unwrap();
            for (j, &v) in x.values().iter().enumerate() {
                mean[j] += v;
                var[j] += v * v;
            }
        }
        for j in 0..16 {
            let m = mean[j] / count as f64;
            let sd = (var[j] / count as f64 - m * m).sqrt();
            assert!(
                m.abs() < 3.0 * sd / (count as f64).sqrt(),
                "pixel {j}: mean {m}"
            );
            assert!(
                (sd * sd - 1.0).abs() < 0.05,
                "pixel {j}: variance {}",
                sd * sd
            );
        }
    }

    #[test]
    fn heat_examples() {
        let x = single_mode(32, 3);
        let same = heat_solution(&x, 0.01, 0.0).unwrap();
        assert!(same
            .values()
            .iter()
            .zip(x.values())
            .all(|(a, b)| (a - b).abs() < 1e-14));
        let y = heat_solution(&x, 0.01, 1.0).unwrap();
        let ratio = y.norm() / x.norm();
        assert!((ratio - 0.913_931).abs() < 1e-6, "{ratio}");
        assert!((ratio - (-0.09f64).exp()).abs() < 1e-12);
        let c = Signal::new(Shape::d2(8, 8), vec![2.5; 64]).unwrap();
        let yc = heat_solution(&c, 0.3, 5.0).unwrap();
        assert!(yc.values().iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn heat_matches_spectral_rk4() {
        let c = cfg(GeneratorKind::Heat2d, 16);
        let x = sample_initial_condition(&c, 0).unwrap();
        for (nu, t) in [(0.01, 1.0), (0.1, 10.0), (0.002, 0.5)] {
            let exact = heat_solution(&x, nu, t).unwrap();
            // RK4 on u_hat' = -nu |k|^2 u_hat, mode by mode
            let op = TransformOperator::new(TransformKind::Dft, x.shape()).unwrap();
            let mut spec = vec![Complex64::default(); 256];
            op.dft_forward_real(x.values(), &mut spec);
            let steps = 4000;
            let h = t / steps as f64;
            for (i, v) in spec.iter_mut().enumerate() {
                let (kr, kc) = x.shape().wavenumbers(i);
                let lam = -nu * (kr * kr + kc * kc) as f64;
                for _ in 0..steps {
                    let k1 = lam * *v;
                    let k2 = lam * (*v + k1 * (h / 2.0));
                    let k3 = lam * (*v + k2 * (h / 2.0));
                    let k4 = lam * (*v + k3 * h);
                    *v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                }
            }
            op.dft_inverse(&mut spec);
            let err: f64 = spec
                .iter()
                .zip(exact.values())
                .map(|(a, b)| (a.re - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(
                err / exact.norm() < 1e-8,
                "nu={nu} t={t}: {}",
                err / exact.norm()
            );
        }
    }

    #[test]
    fn burgers_diffusive_limit_matches_heat() {
        let x: Vec<f64> = single_mode(64, 2)
            .values()
            .iter()
            .map(|v| 1e-4 * v)
            .collect();
        let x = Signal::new(Shape::d1(64), x).unwrap();
        let nu = 0.5;
        let dt = 0.9 * burgers_dt_bound(&x, nu);
        let b = burgers_solution(&x, nu, 1.0, dt).unwrap();
        let h = heat_solution(&x, nu, 1.0).unwrap();
        let err: f64 = b
            .values()
            .iter()
            .zip(h.values())
            .map(|(a, c)| (a - c).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err / h.norm() < 1e-3, "{}", err / h.norm());
    }

    #[test]
    fn burgers_is_fourth_order_in_time() {
        let c = GeneratorConfig {
            decay: 3.0,
            ..cfg(GeneratorKind::Burgers1d, 64)
        };
        let x = sample_initial_condition(&c, 1).unwrap();
        let nu = 0.05;
        let run = |dt: f64| burgers_solution(&x, nu, 0.5, dt).unwrap();
        let (a, b, r) = (run(0.02), run(0.01), run(0.0025));
        let err = |s: &Signal| {
            s.values()
                .iter()
                .zip(r.values())
                .map(|(p, q)| (p - q).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let ratio = err(&a) / err(&b);
        assert!((12.0..20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn burgers_conserves_mean_and_dissipates() {
        let c = GeneratorConfig {
            viscosity: 0.1,
            ..cfg(GeneratorKind::Burgers1d, 128)
        };
        for i in 0..5 {
            let mut x = sample_initial_condition(&c, i).unwrap().into_values();
            x.iter_mut().for_each(|v| *v += 0.3);
            let x = Signal::new(Shape::d1(128), x).unwrap();
            let dt = 0.9 * burgers_dt_bound(&x, 0.1);
            let y = burgers_solution(&x, 0.1, 1.0, dt).unwrap();
            let mean = |s: &Signal| s.values().iter().sum::<f64>() / 128.0;
            assert!((mean(&x) - mean(&y)).abs() < 1e-10);
            assert!(y.norm() <= x.norm());
        }
    }

    #[test]
    fn burgers_rejects_unstable_steps() {
        let x = single_mode(64, 1);
        assert!(matches!(
            burgers_solution(&x, 0.1, 1.0, 1.0),
            Err(Error::Numerical(_))
        ));
        assert!(burgers_solution(&Signal::zeros(Shape::d2(4, 4)), 0.1, 1.0, 0.01).is_err());
    }

    #[test]
    fn splits_floor_and_remainder() {
        assert_eq!(
            Splits::from_fractions(100, 0.8, 0.1),
            Splits {
                train: (0, 80),
                val: (80, 90),
                test: (90, 100)
            }
        );
        assert_eq!(
            Splits::from_fractions(7, 0.5, 0.25),
            Splits {
                train: (0, 3),
                val: (3, 4),
                test: (4, 7)
            }
        );
    }

    #[test]
    fn heat_targets_contract_energy() {
        let c = GeneratorConfig {
            count: 20,
            ..cfg(GeneratorKind::Heat2d, 16)
        };
        let ds = generate_dataset(&c).unwrap();
        for (x, y) in ds.pairs(0..ds.count()) {
            assert!(y.norm() <= x.norm());
        }
    }

    #[test]
    fn file_round_trip_and_regeneration() {
        let dir = tempfile::tempdir().unwrap();
        let c = GeneratorConfig {
            count: 10,
            frames: 3,
            ..cfg(GeneratorKind::Burgers1d, 32)
        };
        let ds = generate_dataset(&c).unwrap();
        let m = write_dataset(&ds, &c, dir.path(), "b").unwrap();
        assert_eq!(
            m.splits,
            Splits {
                train: (0, 8),
                val: (8, 9),
                test: (9, 10)
            }
        );
        let (m2, back) = read_dataset(dir.path().join("b.json")).unwrap();
        assert_eq!(m, m2);
        assert_eq!(back, ds);
        let again = generate_dataset(&c).unwrap();
        assert_eq!(encode_dataset(&again), encode_dataset(&ds));
        let bytes = encode_dataset(&ds);
        assert!(decode_dataset(&bytes[..bytes.len() - 1]).is_err());
        std::fs::write(dir.path().join("b.sfds"), &bytes[..bytes.len() - 8]).unwrap();
        assert!(read_dataset(dir.path().join("b.json")).is_err());
    }
}
