//! Reduced-order k-space layers and the two stack wirings.
//!
//! A [`SpectralModel`] is generic over its coefficient type: `f64` pairs
//! with the DCT-II and `Complex64` with the DFT. [`AnyModel`] picks one at
//! runtime.

mod checkpoint;
mod layer;
mod model;
mod selector;

#[cfg(test)]
mod tests;

use num_complex::Complex64;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use layer::{Activation, KSpaceLayer, Mixing};
pub use model::{Architecture, FnoTrace, InitPolicy, ParamSet, SpectralModel, T1Trace, Wiring};
pub use selector::{embed, truncate, ModeSelector};

use crate::error::{invalid, shape_err, Result};
use crate::scalar::Coef;
use crate::transforms::{Shape, Signal, TransformKind};

fn single_channel<C: Coef>(x: &Signal, model: &SpectralModel<C>) -> Result<()> {
    if x.shape() != model.shape() {
        return shape_err(model.shape(), x.shape());
    }
    if model.in_channels() != 1 || model.out_channels() != 1 {
        return invalid("signal-level calls need a single-channel model");
    }
    Ok(())
}

/// One FDM layer on a single-channel signal: forward transform, truncate,
/// `A z + b`, embed, inverse, add `g * x`, then the layer's activation.
pub fn fdm_layer_forward<C: Coef>(
    x: &Signal,
    layer: &KSpaceLayer<C>,
    selector: &ModeSelector,
    g: Option<f64>,
) -> Result<Signal> {
    if x.shape() != selector.shape() {
        return shape_err(selector.shape(), x.shape());
    }
    let residuals = g.map(|g| vec![vec![g]]).unwrap_or_default();
    let model = SpectralModel::new(
        Wiring::FnoStyle,
        selector.clone(),
        vec![layer.clone()],
        residuals,
    )?;
    fno_stack_forward(x, &model)
}

/// Reduced prediction of a single-channel T1 model.
pub fn t1_forward<C: Coef>(x: &Signal, model: &SpectralModel<C>) -> Result<Vec<C>> {
    single_channel(x, model)?;
    model.t1_forward(x.values())
}

pub fn t1_predict_signal<C: Coef>(x: &Signal, model: &SpectralModel<C>) -> Result<Signal> {
    single_channel(x, model)?;
    Signal::new(x.shape(), model.t1_predict(x.values())?)
}

pub fn fno_stack_forward<C: Coef>(x: &Signal, model: &SpectralModel<C>) -> Result<Signal> {
    single_channel(x, model)?;
    Signal::new(x.shape(), model.fno_forward(x.values())?)
}

/// `(forward, inverse)` transform passes of one evaluation. With
/// `n_space_output` unset a T1 model stops at its reduced prediction.
pub fn count_transforms<C: Coef>(
    model: &SpectralModel<C>,
    n_space_output: bool,
) -> Result<(usize, usize)> {
    let x = vec![0.0; model.in_channels() * model.shape().len()];
    model.count_transforms(&x, n_space_output)
}

/// A model whose transform is chosen at runtime.
#[derive(Clone, Debug)]
pub enum AnyModel {
    Dct(SpectralModel<f64>),
    Dft(SpectralModel<Complex64>),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            AnyModel::Dct($m) => $body,
            AnyModel::Dft($m) => $body,
        }
    };
}

impl AnyModel {
    pub fn build(
        arch: &Architecture,
        selector: ModeSelector,
        policy: InitPolicy,
        seed: u64,
    ) -> Result<Self> {
        Ok(match arch.transform {
            TransformKind::Dct2 => {
                AnyModel::Dct(SpectralModel::build(arch, selector, policy, seed)?)
            }
            TransformKind::Dft => {
                AnyModel::Dft(SpectralModel::build(arch, selector, policy, seed)?)
            }
        })
    }

    pub fn kind(&self) -> TransformKind {
        dispatch!(self, m => m.kind())
    }
    pub fn wiring(&self) -> Wiring {
        dispatch!(self, m => m.wiring())
    }
    pub fn shape(&self) -> Shape {
        dispatch!(self, m => m.shape())
    }
    pub fn selector(&self) -> &ModeSelector {
        dispatch!(self, m => m.selector())
    }
    pub fn depth(&self) -> usize {
        dispatch!(self, m => m.depth())
    }
    pub fn in_channels(&self) -> usize {
        dispatch!(self, m => m.in_channels())
    }
    pub fn out_channels(&self) -> usize {
        dispatch!(self, m => m.out_channels())
    }
    pub fn num_params(&self) -> usize {
        dispatch!(self, m => m.num_params())
    }
    pub fn flat_params(&self) -> Vec<f64> {
        dispatch!(self, m => m.params().flatten())
    }
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        dispatch!(self, m => m.predict(x))
    }
    pub fn count_transforms(&self, n_space_output: bool) -> Result<(usize, usize)> {
        dispatch!(self, m => count_transforms(m, n_space_output))
    }
}
