//! JSON run configuration for `train` and `eval`.
//!
//! Top-level keys mirror a typical operator-learning config: `datamodule`
//! says where samples come from, `model` fixes the architecture, `train`
//! holds optimizer settings and `loss_fn` names the objective.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sfdm_core::data::GeneratorConfig;
use sfdm_core::layers::{Activation, Architecture, InitPolicy, Mixing, Wiring};
use sfdm_core::modes::StatMeasure;
use sfdm_core::training::TrainConfig;
use sfdm_core::TransformKind;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub datamodule: DataModule,
    pub model: ModelSection,
    pub train: TrainConfig,
    #[serde(default)]
    pub loss_fn: LossFn,
}

/// Exactly one of `manifest` (a `gen-data` output) or `generate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataModule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GeneratorConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Lowpass,
    /// Largest mean-square target coefficients over the training split.
    Topk,
}

fn default_depth() -> usize {
    1
}
fn default_width() -> usize {
    1
}
fn default_mixing() -> Mixing {
    Mixing::PerMode
}
fn default_activation() -> Activation {
    Activation::Gelu
}
fn default_selection() -> Selection {
    Selection::Lowpass
}
fn default_init() -> InitPolicy {
    InitPolicy::Vp
}

/// Architecture without channel counts, which follow from the data: inputs
/// carry `history_size + 1` frames and the output is one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub wiring: Wiring,
    pub transform: TransformKind,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    /// Retained modes per axis.
    pub modes: usize,
    #[serde(default = "default_selection")]
    pub selection: Selection,
    #[serde(default = "default_mixing")]
    pub mixing: Mixing,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub bias: bool,
    #[serde(default)]
    pub residual: bool,
    #[serde(default = "default_init")]
    pub init: InitPolicy,
    /// Weight seed; the training seed is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ModelSection {
    pub fn architecture(&self, train: &TrainConfig) -> Architecture {
        Architecture {
            wiring: self.wiring,
            transform: self.transform,
            depth: self.depth,
            width: self.width,
            in_channels: train.in_channels(),
            out_channels: 1,
            mixing: self.mixing,
            activation: self.activation,
            bias: self.bias,
            residual: self.residual,
        }
    }

    pub fn weight_seed(&self, train: &TrainConfig) -> u64 {
        self.seed.unwrap_or(train.seed)
    }

    pub fn stat_measure(&self) -> StatMeasure {
        StatMeasure::MeanSquare
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossFnType {
    #[default]
    RelativeL2Loss,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossFn {
    #[serde(rename = "type")]
    pub kind: LossFnType,
}

/// Parses `path`, naming the offending field on failure.
pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        CliError::Validation(format!("{}: at `{at}`: {}", path.display(), e.inner()))
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = load_json(path)?;
        cfg.validate()?;
        // relative manifest paths are resolved against the config file
        if let Some(m) = cfg.datamodule.manifest.as_mut() {
            if m.is_relative() {
                if let Some(dir) = path.parent() {
                    *m = dir.join(&*m);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let at =
            |field: &str, e: sfdm_core::Error| CliError::Validation(format!("at `{field}`: {e}"));
        match (&self.datamodule.manifest, &self.datamodule.generate) {
            (Some(_), None) => {}
            (None, Some(g)) => g.validate().map_err(|e| at("datamodule.generate", e))?,
            _ => {
                return Err(CliError::Validation(
                    "at `datamodule`: give exactly one of `manifest` or `generate`".into(),
                ))
            }
        }
        self.train.validate().map_err(|e| at("train", e))?;
        let m = &self.model;
        if m.depth == 0 || m.width == 0 || m.modes == 0 {
            return Err(CliError::Validation(
                "at `model`: depth, width and modes must be positive".into(),
            ));
        }
        if m.residual && m.wiring == Wiring::T1 {
            return Err(CliError::Validation(
                "at `model.residual`: T1 wiring has no n-space residual".into(),
            ));
        }
        Ok(())
    }
}
