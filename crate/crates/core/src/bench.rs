//! Forward-pass timing of T1 against FNO-style stacks.
//!
//! Both wirings in a cell share shape, selector, layer weights and input, so
//! the measured difference is the transforms between layers. Cells run one
//! after another on the calling thread; the forward passes themselves are
//! single-threaded.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::layers::{Activation, AnyModel, Architecture, InitPolicy, Mixing, Wiring};
use crate::modes::lowpass_selector_for;
use crate::rng::{streams, Stream};
use crate::transforms::{Shape, TransformKind};

fn default_modes() -> usize {
    8
}
fn default_ndim() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchGrid {
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
    pub resolutions: Vec<usize>,
    pub repetitions: usize,
    pub warmup: usize,
    /// Retained modes per axis; clamped so the selector fits the grid.
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// 1 for signals of length `resolution`, 2 for square grids.
    #[serde(default = "default_ndim")]
    pub ndim: usize,
    #[serde(default)]
    pub seed: u64,
}

impl BenchGrid {
    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty() || self.widths.is_empty() || self.resolutions.is_empty() {
            return invalid("bench grid axes must be nonempty");
        }
        if self
            .depths
            .iter()
            .chain(&self.widths)
            .chain(&self.resolutions)
            .any(|&v| v == 0)
        {
            return invalid("bench grid values must be positive");
        }
        if self.repetitions < 5 {
            return invalid("repetitions must be at least 5");
        }
        if self.modes == 0 || !(1..=2).contains(&self.ndim) {
            return invalid("modes must be positive and ndim 1 or 2");
        }
        Ok(())
    }

    fn shape(&self, resolution: usize) -> Shape {
        if self.ndim == 1 {
            Shape::d1(resolution)
        } else {
            Shape::d2(resolution, resolution)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Timing {
    pub median_us: f64,
    pub iqr_us: f64,
    /// Passes folded into each timed sample.
    pub passes_per_sample: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchCell {
    pub depth: usize,
    pub width: usize,
    pub resolution: usize,
    pub modes: usize,
    pub t1: Timing,
    pub fno: Timing,
    pub t1_transforms: (usize, usize),
    pub fno_transforms: (usize, usize),
}

impl BenchCell {
    pub fn speedup(&self) -> f64 {
        self.fno.median_us / self.t1.median_us
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub kind: TransformKind,
    pub cells: Vec<BenchCell>,
}

impl BenchReport {
    /// One row per cell and wiring; `speedup` repeats on both rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("depth,width,resolution,wiring,median_us,iqr_us,speedup\n");
        for c in &self.cells {
            for (name, t) in [("t1", &c.t1), ("fno", &c.fno)] {
                out.push_str(&format!(
                    "{},{},{},{},{:.3},{:.3},{:.4}\n",
                    c.depth,
                    c.width,
                    c.resolution,
                    name,
                    t.median_us,
                    t.iqr_us,
                    c.speedup()
                ));
            }
        }
        out
    }

    pub fn cell(&self, depth: usize, width: usize, resolution: usize) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.depth == depth && c.width == width && c.resolution == resolution)
    }
}

/// Smallest nonzero step the monotonic clock reports.
pub fn clock_granularity() -> Duration {
    let mut best = Duration::from_secs(1);
    for _ in 0..64 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

/// `(median, q3 - q1)` with linear interpolation between order statistics.
pub fn median_iqr(samples: &[f64]) -> (f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (s.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
    };
    (q(0.5), q(0.75) - q(0.25))
}

fn passes_to_fill(pass: &mut impl FnMut(), floor: Duration) -> usize {
    let mut passes = 1usize;
    loop {
        let start = Instant::now();
        for _ in 0..passes {
            pass();
        }
        if start.elapsed() >= floor || passes >= 1 << 20 {
            return passes;
        }
        passes *= 2;
    }
}

fn sample_us(pass: &mut impl FnMut(), passes: usize) -> f64 {
    let start = Instant::now();
    for _ in 0..passes {
        pass();
    }
    start.elapsed().as_secs_f64() * 1e6 / passes as f64
}

fn summarize(samples: &[f64], passes: usize) -> Timing {
    let (median_us, iqr_us) = median_iqr(samples);
    Timing {
        median_us,
        iqr_us,
        passes_per_sample: passes,
    }
}

/// Per-call time of `pass`. Each sample folds enough passes to span at least
/// ten clock ticks and a millisecond.
pub fn time_passes(
    mut pass: impl FnMut(),
    warmup: usize,
    repetitions: usize,
    granularity: Duration,
) -> Timing {
    for _ in 0..warmup {
        pass();
    }
    let passes = passes_to_fill(&mut pass, sample_floor(granularity));
    let samples: Vec<f64> = (0..repetitions)
        .map(|_| sample_us(&mut pass, passes))
        .collect();
    summarize(&samples, passes)
}

/// Like [`time_passes`] for two workloads, alternating their samples so
/// slow drifts in machine load hit both alike.
pub fn time_interleaved(
    mut a: impl FnMut(),
    mut b: impl FnMut(),
    warmup: usize,
    repetitions: usize,
    granularity: Duration,
) -> (Timing, Timing) {
    for _ in 0..warmup {
        a();
        b();
    }
    let floor = sample_floor(granularity);
    let (pa, pb) = (passes_to_fill(&mut a, floor), passes_to_fill(&mut b, floor));
    let mut sa = Vec::with_capacity(repetitions);
    let mut sb = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        sa.push(sample_us(&mut a, pa));
        sb.push(sample_us(&mut b, pb));
    }
    (summarize(&sa, pa), summarize(&sb, pb))
}

fn sample_floor(granularity: Duration) -> Duration {
    (granularity * 10).max(Duration::from_millis(1))
}

/// A T1 model and an FNO-style model with the same layers; the FNO model's
/// residual maps are zero so the two differ only in transform placement.
/// Signals carry `width` channels, so every layer has the same cost.
pub fn paired_models(
    kind: TransformKind,
    shape: Shape,
    depth: usize,
    width: usize,
    modes: usize,
    seed: u64,
) -> Result<(AnyModel, AnyModel)> {
    let arch = Architecture {
        wiring: Wiring::T1,
        transform: kind,
        depth,
        width,
        in_channels: width,
        out_channels: width,
        mixing: Mixing::PerMode,
        activation: Activation::Gelu,
        bias: true,
        residual: false,
    };
    let selector = lowpass_selector_for(kind, modes, shape)?;
    let t1 = AnyModel::build(&arch, selector.clone(), InitPolicy::Vp, seed)?;
    let fno_arch = Architecture {
        wiring: Wiring::FnoStyle,
        ..arch
    };
    let mut fno = AnyModel::build(&fno_arch, selector, InitPolicy::Vp, seed)?;
    match (&t1, &mut fno) {
        (AnyModel::Dct(a), AnyModel::Dct(b)) => b.layers_mut().clone_from_slice(a.layers()),
        (AnyModel::Dft(a), AnyModel::Dft(b)) => b.layers_mut().clone_from_slice(a.layers()),
        _ => unreachable!("both models share a transform kind"),
    }
    Ok((t1, fno))
}

/// Largest per-axis mode count not above `modes` that the lowpass selector
/// accepts at `resolution`.
fn fit_modes(kind: TransformKind, modes: usize, resolution: usize) -> usize {
    match kind {
        TransformKind::Dct2 => modes.min(resolution),
        TransformKind::Dft => modes.min(resolution.div_ceil(2)),
    }
}

pub fn run_speedup_grid(
    grid: &BenchGrid,
    kind: TransformKind,
    mut on_cell: impl FnMut(&BenchCell),
) -> Result<BenchReport> {
    grid.validate()?;
    let granularity = clock_granularity();
    let mut cells = Vec::new();
    for &resolution in &grid.resolutions {
        let shape = grid.shape(resolution);
        let modes = fit_modes(kind, grid.modes, resolution);
        let mut rng = Stream::new(grid.seed, streams::MISC + resolution as u64);
        for &width in &grid.widths {
            let x: Vec<f64> = (0..width * shape.len())
                .map(|_| rng.standard_normal())
                .collect();
            for &depth in &grid.depths {
                let (t1, fno) = paired_models(kind, shape, depth, width, modes, grid.seed)?;
                t1.predict(&x)?;
                fno.predict(&x)?;
                let (t1_time, fno_time) = time_interleaved(
                    || drop(std::hint::black_box(t1.predict(&x))),
                    || drop(std::hint::black_box(fno.predict(&x))),
                    grid.warmup,
                    grid.repetitions,
                    granularity,
                );
                let cell = BenchCell {
                    depth,
                    width,
                    resolution,
                    modes,
                    t1: t1_time,
                    fno: fno_time,
                    t1_transforms: t1.count_transforms(true)?,
                    fno_transforms: fno.count_transforms(true)?,
                };
                on_cell(&cell);
                cells.push(cell);
            }
        }
    }
    Ok(BenchReport { kind, cells })
}

/// Whether `values` never decreases, tolerating up to `allowed` adjacent
/// drops (timing noise).
pub fn nondecreasing_with_slack(values: &[f64], allowed: usize) -> bool {
    values.windows(2).filter(|w| w[1] < w[0]).count() <= allowed
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_iqr_examples() {
        assert_eq!(median_iqr(&[3.0, 1.0, 2.0]), (2.0, 1.0));
        assert_eq!(median_iqr(&[1.0, 2.0, 3.0, 4.0, 5.0]), (3.0, 2.0));
        assert_eq!(median_iqr(&[7.0; 5]), (7.0, 0.0));
    }

    #[test]
    fn monotone_slack() {
        assert!(nondecreasing_with_slack(&[1.0, 2.0, 2.0, 3.0], 0));
        assert!(!nondecreasing_with_slack(&[1.0, 3.0, 2.0], 0));
        assert!(nondecreasing_with_slack(&[1.0, 3.0, 2.0, 4.0], 1));
    }

    #[test]
    fn paired_models_agree_at_depth_one_full_spectrum() {
        // g = 0, full spectrum: both wirings compute the same map
        for kind in [TransformKind::Dct2, TransformKind::Dft] {
            let shape = Shape::d2(8, 8);
            let full = fit_modes(kind, 8, 8);
            let (t1, fno) = paired_models(kind, shape, 1, 1, full, 3).unwrap();
            let mut rng = Stream::new(1, 0);
            let x: Vec<f64> = (0..64).map(|_| rng.standard_normal()).collect();
            let (a, b) = (t1.predict(&x).unwrap(), fno.predict(&x).unwrap());
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12, "{kind:?}");
            }
        }
    }

    #[test]
    fn small_grid_reports_every_cell() {
        let grid = BenchGrid {
            depths: vec![1, 3],
            widths: vec![2],
            resolutions: vec![16],
            repetitions: 5,
            warmup: 1,
            modes: 4,
            ndim: 2,
            seed: 0,
        };
        let report = run_speedup_grid(&grid, TransformKind::Dft, |_| {}).unwrap();
        assert_eq!(report.cells.len(), 2);
        let c = report.cell(3, 2, 16).unwrap();
        assert_eq!(c.t1_transforms, (1, 1));
        assert_eq!(c.fno_transforms, (3, 3));
        assert!(c.t1.median_us > 0.0 && c.speedup() > 0.0);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("depth,width,resolution,wiring,median_us,iqr_us,speedup\n"));
        assert!(BenchGrid {
            repetitions: 4,
            ..grid
        }
        .validate()
        .is_err());
    }
}
