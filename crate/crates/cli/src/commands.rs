use std::collections::BTreeMap;
use std::io::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sfdm_core::bench::{run_speedup_grid, BenchGrid};
use sfdm_core::data::{
    generate_dataset, read_dataset, write_dataset, Dataset, GeneratorConfig, Splits,
};
use sfdm_core::init::{variance_probe, InitFamily, InitScheme};
use sfdm_core::layers::{load_checkpoint, save_checkpoint, AnyModel};
use sfdm_core::modes::{reconstruction_curve, spectra, SelectorFamily, SpectrumStats, StatMeasure};
use sfdm_core::training::{evaluate_any, make_samples, rollout, train_any, Sample, TrainConfig};
use sfdm_core::verify::{run_suite, Fault};
use sfdm_core::{Signal, TransformKind};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Selection};
use crate::error::CliError;

/// Output directory that records a checksum for every file written to it.
pub struct RunDir {
    path: PathBuf,
    files: BTreeMap<String, String>,
}

impl RunDir {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(RunDir {
            path: path.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path.join(name);
        std::fs::write(&p, bytes).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        self.files.insert(name.into(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Records a file some other writer produced inside the directory.
    pub fn adopt(&mut self, name: &str) -> Result<(), CliError> {
        let p = self.path.join(name);
        let bytes = std::fs::read(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        self.files.insert(name.into(), sha256_hex(&bytes));
        Ok(())
    }

    /// Writes `provenance.json`: tool version, command, seeds and checksums.
    /// Files listed under `nondeterministic` hold wall-clock measurements and
    /// get no checksum, so provenance stays reproducible.
    pub fn finish(
        mut self,
        command: &str,
        seeds: Value,
        nondeterministic: &[&str],
    ) -> Result<(), CliError> {
        for name in nondeterministic {
            self.files.remove(*name);
        }
        let prov = json!({
            "tool": "sfdm",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seeds": seeds,
            "files": self.files,
            "nondeterministic": nondeterministic,
        });
        self.write_json("provenance.json", &prov)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn range((a, b): (usize, usize)) -> Range<usize> {
    a..b
}

pub fn gen_data(cfg: &GeneratorConfig, out: &Path, name: &str) -> Result<(), CliError> {
    cfg.validate()?;
    let ds = generate_dataset(cfg)?;
    let mut dir = RunDir::create(out)?;
    let manifest = write_dataset(&ds, cfg, out, name)?;
    dir.adopt(&manifest.file)?;
    dir.adopt(&format!("{name}.json"))?;
    dir.write_json("config.json", cfg)?;
    eprintln!(
        "wrote {} samples x {} frames of {} to {}",
        ds.count(),
        ds.frames(),
        ds.shape(),
        out.join(format!("{name}.json")).display()
    );
    dir.finish("gen-data", json!({ "data": cfg.seed }), &[])
}

struct Loaded {
    ds: Dataset,
    splits: Splits,
    source: Value,
}

fn load_data(cfg: &RunConfig) -> Result<Loaded, CliError> {
    match (&cfg.datamodule.manifest, &cfg.datamodule.generate) {
        (Some(path), _) => {
            let (manifest, ds) = read_dataset(path)?;
            Ok(Loaded {
                ds,
                splits: manifest.splits,
                source: json!({ "manifest": path, "sha256": manifest.sha256 }),
            })
        }
        (None, Some(g)) => {
            let ds = generate_dataset(g)?;
            let splits = Splits::from_fractions(ds.count(), g.train_fraction, g.val_fraction);
            Ok(Loaded {
                ds,
                splits,
                source: json!({ "generated": g }),
            })
        }
        (None, None) => unreachable!("validated"),
    }
}

fn target_signals(ds: &Dataset, samples: &[Sample]) -> Result<Vec<Signal>, CliError> {
    Ok(samples
        .iter()
        .map(|s| Signal::new(ds.shape(), s.target.clone()))
        .collect::<Result<_, _>>()?)
}

pub fn train(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let ds = &data.ds;
    let tc = &cfg.train;
    let train_set = make_samples(ds, range(data.splits.train), tc)?;
    let val_set = make_samples(ds, range(data.splits.val), tc)?;
    let test_set = make_samples(ds, range(data.splits.test), tc)?;
    if train_set.is_empty() {
        return Err(CliError::Validation("training split is empty".into()));
    }
    let m = &cfg.model;
    let family = match m.selection {
        Selection::Lowpass => SelectorFamily::Lowpass,
        Selection::Topk => {
            let specs = spectra(&target_signals(ds, &train_set)?, m.transform)?;
            SelectorFamily::TopK(SpectrumStats::from_spectra(&specs, m.stat_measure())?)
        }
    };
    let selector = family.selector(m.transform, m.modes, ds.shape())?;
    let arch = m.architecture(tc);
    let mut model = AnyModel::build(&arch, selector, m.init, m.weight_seed(tc))?;
    eprintln!(
        "training {:?} {:?} model: {} parameters, {} retained modes, {} training samples",
        arch.wiring,
        arch.transform,
        model.num_params(),
        model.selector().m(),
        train_set.len()
    );
    let report = train_any(&mut model, &train_set, &val_set, tc, |e| {
        let val = e
            .val_nmse
            .map(|v| format!(" val_nmse {v:.4e}"))
            .unwrap_or_default();
        eprintln!(
            "epoch {:>4} lr {:.3e} train_loss {:.4e}{val} ({:.2}s)",
            e.epoch, e.lr, e.train_loss, e.seconds
        );
    })?;
    let test_nmse = if test_set.is_empty() {
        None
    } else {
        Some(evaluate_any(&model, &test_set)?)
    };

    let mut dir = RunDir::create(out)?;
    save_checkpoint(&model, dir.path().join("checkpoint.sfdm"))?;
    dir.adopt("checkpoint.sfdm")?;
    dir.write("learning_curve.csv", report.to_csv().as_bytes())?;
    dir.write("timing.csv", report.timing_csv().as_bytes())?;
    dir.write_json(
        "report.json",
        &json!({
            "initial_train_loss": report.initial_train_loss,
            "final_train_loss": report.final_train_loss,
            "final_val_nmse": report.epochs.last().and_then(|e| e.val_nmse),
            "test_nmse": test_nmse,
            "num_params": model.num_params(),
            "retained_modes": model.selector().m(),
            "selector": model.selector().indices(),
            "samples": { "train": train_set.len(), "val": val_set.len(), "test": test_set.len() },
        }),
    )?;
    dir.write_json("config.json", cfg)?;
    eprintln!(
        "final train loss {:.4e} (initial {:.4e}); wrote {}",
        report.final_train_loss,
        report.initial_train_loss,
        out.display()
    );
    dir.finish(
        "train",
        json!({ "train": tc.seed, "weights": m.weight_seed(tc), "data": data.source }),
        &["timing.csv"],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
    All,
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "all" => Ok(Split::All),
            _ => Err(format!("unknown split {s:?} (train, val, test, all)")),
        }
    }
}

fn split_range(splits: &Splits, count: usize, which: Split) -> Range<usize> {
    match which {
        Split::Train => range(splits.train),
        Split::Val => range(splits.val),
        Split::Test => range(splits.test),
        Split::All => 0..count,
    }
}

pub fn eval(
    checkpoint: &Path,
    manifest: &Path,
    train_cfg: &TrainConfig,
    split: Split,
    rollout_steps: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = load_checkpoint(checkpoint)?;
    let (man, ds) = read_dataset(manifest)?;
    if model.in_channels() != train_cfg.in_channels() {
        return Err(CliError::Validation(format!(
            "checkpoint reads {} frames but history_size {} needs {}",
            model.in_channels(),
            train_cfg.history_size,
            train_cfg.in_channels()
        )));
    }
    if model.shape() != ds.shape() {
        return Err(CliError::Validation(format!(
            "checkpoint grid {} does not match dataset grid {}",
            model.shape(),
            ds.shape()
        )));
    }
    let idx = split_range(&man.splits, ds.count(), split);
    let samples = make_samples(&ds, idx.clone(), train_cfg)?;
    let nmse = evaluate_any(&model, &samples)?;
    let mut result = json!({
        "checkpoint": checkpoint,
        "dataset_sha256": man.sha256,
        "samples": samples.len(),
        "nmse": nmse,
    });
    if rollout_steps > 0 {
        result["rollout_nmse"] = json!(rollout_nmse(&model, &ds, idx, train_cfg, rollout_steps)?);
    }
    let text = serde_json::to_string_pretty(&result).expect("serializable") + "\n";
    match out {
        Some(p) => {
            std::fs::write(p, &text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Per-step N-MSE of autoregressive predictions started from the first
/// frames of each sample.
fn rollout_nmse(
    model: &AnyModel,
    ds: &Dataset,
    idx: Range<usize>,
    tc: &TrainConfig,
    steps: usize,
) -> Result<Vec<f64>, CliError> {
    let s = tc.target_steps;
    let need = tc.history_size.max(tc.rollout_order.lookback()) + 1;
    let available = (ds.frames() - 1) / s + 1;
    if available <= need {
        return Err(CliError::Validation(format!(
            "{} frames leave nothing to roll out after {need} history frames",
            ds.frames()
        )));
    }
    let steps = steps.min(available - need);
    let mut sums = vec![0.0; steps];
    let count = idx.len();
    for i in idx {
        let history: Vec<Signal> = (0..need).map(|f| ds.signal(i, f * s)).collect();
        let step = |x: &[f64]| model.predict(x);
        let preds = rollout(step, &history, steps, tc.rollout_order, tc.history_size)?;
        for (j, p) in preds.iter().enumerate() {
            let truth = ds.frame(i, (need + j) * s);
            let den: f64 = truth.iter().map(|v| v * v).sum();
            let num: f64 = p
                .values()
                .iter()
                .zip(truth)
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            sums[j] += num / den;
        }
    }
    Ok(sums.into_iter().map(|v| v / count as f64).collect())
}

pub fn analyze_modes(
    manifest: &Path,
    kind: TransformKind,
    m_values: &[usize],
    split: Split,
    measure: StatMeasure,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (man, ds) = read_dataset(manifest)?;
    let last = ds.frames() - 1;
    let signals = |r: Range<usize>| -> Vec<Signal> { r.map(|i| ds.signal(i, last)).collect() };
    // statistics come from the training split only
    let train = signals(range(man.splits.train));
    if train.is_empty() {
        return Err(CliError::Validation("training split is empty".into()));
    }
    let stats = SpectrumStats::from_spectra(&spectra(&train, kind)?, measure)?;
    let eval = signals(split_range(&man.splits, ds.count(), split));
    let mut csv = String::from("m,selector_family,nspace_nmse,R_o_l1,R_o_l2\n");
    for family in [SelectorFamily::Lowpass, SelectorFamily::TopK(stats)] {
        for p in reconstruction_curve(&eval, kind, &family, m_values)? {
            csv.push_str(&format!(
                "{},{},{:.12e},{:.12e},{:.12e}\n",
                p.m, p.selector_family, p.nspace_nmse, p.r_o_l1, p.r_o_l2
            ));
        }
    }
    emit(out, &csv)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
        }
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

pub fn check_init(
    ns: &[usize],
    m: usize,
    batch: usize,
    draws: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let schemes = [
        (InitFamily::VpDense, TransformKind::Dct2),
        (InitFamily::VpDense, TransformKind::Dft),
        (InitFamily::VpDiagonal, TransformKind::Dct2),
        (InitFamily::Xavier, TransformKind::Dct2),
    ];
    let mut csv = String::from("scheme,N,m,mean_ratio,std_ratio\n");
    for &n in ns {
        for (family, kind) in schemes {
            let scheme = InitScheme {
                family,
                transform_kind: kind,
                n,
                m,
                seed,
            };
            let r = variance_probe(&scheme, batch, draws)?;
            let name = format!("{family}_{}", kind_name(kind));
            eprintln!(
                "{name} N={n} m={m}: mean ratio {:.4} (std {:.4})",
                r.mean_ratio, r.std_ratio
            );
            csv.push_str(&format!(
                "{name},{n},{m},{:.6},{:.6}\n",
                r.mean_ratio, r.std_ratio
            ));
        }
    }
    emit(out, &csv)
}

fn kind_name(kind: TransformKind) -> &'static str {
    match kind {
        TransformKind::Dct2 => "dct2",
        TransformKind::Dft => "dft",
    }
}

pub fn bench(grid: &BenchGrid, kind: TransformKind, out: Option<&Path>) -> Result<(), CliError> {
    let report = run_speedup_grid(grid, kind, |c| {
        eprintln!(
            "depth {:>2} width {:>3} resolution {:>4}: t1 {:>10.1} us, fno {:>10.1} us, speedup {:.2}",
            c.depth,
            c.width,
            c.resolution,
            c.t1.median_us,
            c.fno.median_us,
            c.speedup()
        );
    })?;
    emit(out, &report.to_csv())
}

pub fn verify(fault: Fault, out: Option<&Path>) -> Result<(), CliError> {
    let report = run_suite(fault, |c| {
        println!(
            "{} {} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    });
    if let Some(p) = out {
        let text = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
        std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    }
    let failed: Vec<&str> = report.failures().map(|c| c.name).collect();
    if failed.is_empty() {
        println!("all {} checks passed", report.checks.len());
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "failed checks: {}",
            failed.join(", ")
        )))
    }
}
