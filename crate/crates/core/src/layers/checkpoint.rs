//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic `SFDM` | 4 bytes |
//! | version (1) | u32 |
//! | wiring tag (0 T1, 1 FNO-style) | u32 |
//! | transform tag (0 DCT-II, 1 DFT) | u32 |
//! | N, m, depth, width | u64 x 4 |
//! | rows, cols, in channels, out channels | u64 x 4 |
//! | mixing tag, activation tag, has bias, has residual | u32 x 4 |
//! | selector indices | u64 x m |
//! | parameters | f64, [`ParamSet::flatten`] order |
//!
//! `width` is the hidden channel count (equal to the output channel count
//! for depth 1). Every layer but the last uses the stored activation.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::layer::{Activation, Mixing};
use super::model::{Architecture, InitPolicy, SpectralModel, Wiring};
use super::selector::ModeSelector;
use super::AnyModel;
use crate::error::{Error, Result};
use crate::scalar::Coef;
use crate::transforms::{Shape, TransformKind};

const MAGIC: &[u8; 4] = b"SFDM";
const VERSION: u32 = 1;

fn header<C: Coef>(m: &SpectralModel<C>, out: &mut Vec<u8>) -> Result<()> {
    let layers = m.layers();
    let first = &layers[0];
    let last = layers.len() - 1;
    let uniform = layers.iter().enumerate().all(|(l, layer)| {
        layer.mixing() == first.mixing()
            && layer.bias().is_some() == first.bias().is_some()
            && (l == last || layer.activation() == first.activation())
            && (l < last || layer.activation() == Activation::None)
    });
    if !uniform {
        return Err(bad(
            "checkpoints store stacks built from one architecture only",
        ));
    }
    let width = if layers.len() > 1 {
        first.c_out()
    } else {
        m.out_channels()
    };
    let activation = if layers.len() > 1 {
        first.activation()
    } else {
        Activation::Gelu
    };
    out.extend_from_slice(MAGIC);
    for v in [VERSION, m.wiring().tag(), C::KIND.tag()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let shape = m.shape();
    let sel = m.selector();
    for v in [
        shape.len(),
        sel.m(),
        layers.len(),
        width,
        shape.rows,
        shape.cols,
        m.in_channels(),
        m.out_channels(),
    ] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    let flags = [
        first.mixing().tag(),
        activation.tag(),
        first.bias().is_some() as u32,
        !m.residuals().is_empty() as u32,
    ];
    for v in flags {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &i in sel.indices() {
        out.extend_from_slice(&(i as u64).to_le_bytes());
    }
    for v in m.params().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

/// Serializes a model to the checkpoint layout.
pub fn write_checkpoint(model: &AnyModel, mut w: impl Write) -> Result<()> {
    let mut buf = Vec::new();
    match model {
        AnyModel::Dct(m) => header(m, &mut buf)?,
        AnyModel::Dft(m) => header(m, &mut buf)?,
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn save_checkpoint(model: &AnyModel, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end =
            end.ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Format(format!("value {v} does not fit in usize")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Parses a checkpoint; the inverse of [`write_checkpoint`].
pub fn read_checkpoint(mut r: impl Read) -> Result<AnyModel> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if c.take(4)? != MAGIC {
        return Err(bad("not a model checkpoint (bad magic)"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let wiring = Wiring::from_tag(c.u32()?).ok_or_else(|| bad("unknown wiring tag"))?;
    let transform = TransformKind::from_tag(c.u32()?).map_err(|e| bad(e.to_string()))?;
    let [n, m, depth, width, rows, cols, in_channels, out_channels] =
        std::array::from_fn(|_| c.u64());
    let (n, m, depth, width, rows, cols, in_channels, out_channels) = (
        n?,
        m?,
        depth?,
        width?,
        rows?,
        cols?,
        in_channels?,
        out_channels?,
    );
    let mixing = Mixing::from_tag(c.u32()?).ok_or_else(|| bad("unknown mixing tag"))?;
    let activation = Activation::from_tag(c.u32()?).ok_or_else(|| bad("unknown activation tag"))?;
    let bias = c.u32()? != 0;
    let residual = c.u32()? != 0;
    let shape = Shape { rows, cols };
    if shape.rows.checked_mul(shape.cols) != Some(n) {
        return Err(bad(format!("grid {rows}x{cols} does not hold {n} values")));
    }
    if m > n {
        return Err(bad(format!("{m} modes exceed {n} coefficients")));
    }
    let indices = (0..m).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
    let selector = ModeSelector::new(shape, indices)?;
    let arch = Architecture {
        wiring,
        transform,
        depth,
        width,
        in_channels,
        out_channels,
        mixing,
        activation,
        bias,
        residual,
    };
    let mut model = AnyModel::build(&arch, selector, InitPolicy::Xavier, 0)?;
    let expected = model.num_params();
    if bytes.len() - c.pos != expected * 8 {
        return Err(bad(format!(
            "expected {expected} parameters, found {} bytes",
            bytes.len() - c.pos
        )));
    }
    let flat = (0..expected).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    match &mut model {
        AnyModel::Dct(mm) => load(mm, &flat)?,
        AnyModel::Dft(mm) => load(mm, &flat)?,
    }
    Ok(model)
}

fn load<C: Coef>(model: &mut SpectralModel<C>, flat: &[f64]) -> Result<()> {
    let mut p = model.params();
    p.load_flat(flat)?;
    model.set_params(&p)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<AnyModel> {
    read_checkpoint(std::fs::File::open(path)?)
}

impl From<SpectralModel<f64>> for AnyModel {
    fn from(m: SpectralModel<f64>) -> Self {
        AnyModel::Dct(m)
    }
}

impl From<SpectralModel<Complex64>> for AnyModel {
    fn from(m: SpectralModel<Complex64>) -> Self {
        AnyModel::Dft(m)
    }
}
