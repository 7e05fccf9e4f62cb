use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::init::{KSpaceWeights, WeightLayout};
use crate::rng::Stream;
use crate::scalar::Coef;

/// How a layer mixes coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    /// Independent `c_out x c_in` channel map at every retained mode. With
    /// one channel this is a diagonal `A`.
    PerMode,
    /// Full `m x m` mode mixing for every channel pair.
    Dense,
}

impl Mixing {
    pub fn tag(self) -> u32 {
        match self {
            Mixing::PerMode => 0,
            Mixing::Dense => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Mixing::PerMode),
            1 => Some(Mixing::Dense),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Gelu,
}

impl Activation {
    pub fn tag(self) -> u32 {
        match self {
            Activation::None => 0,
            Activation::Gelu => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Activation::None),
            1 => Some(Activation::Gelu),
            _ => None,
        }
    }
}

/// One learned k-space map `U = A Z + b` on reduced coefficients laid out
/// channel-major (`c x m`), followed by an optional activation.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceLayer<C> {
    pub(crate) mixing: Mixing,
    pub(crate) c_in: usize,
    pub(crate) c_out: usize,
    pub(crate) m: usize,
    pub(crate) weights: Vec<C>,
    pub(crate) bias: Option<Vec<C>>,
    pub(crate) activation: Activation,
}

pub(crate) fn weight_len(mixing: Mixing, c_in: usize, c_out: usize, m: usize) -> usize {
    match mixing {
        Mixing::PerMode => m * c_out * c_in,
        Mixing::Dense => c_out * c_in * m * m,
    }
}

impl<C: Coef> KSpaceLayer<C> {
    pub fn zeros(
        mixing: Mixing,
        c_in: usize,
        c_out: usize,
        m: usize,
        bias: bool,
        activation: Activation,
    ) -> Self {
        KSpaceLayer {
            mixing,
            c_in,
            c_out,
            m,
            weights: vec![C::zero(); weight_len(mixing, c_in, c_out, m)],
            bias: bias.then(|| vec![C::zero(); c_out * m]),
            activation,
        }
    }

    pub fn new(
        mixing: Mixing,
        c_in: usize,
        c_out: usize,
        m: usize,
        weights: Vec<C>,
        bias: Option<Vec<C>>,
        activation: Activation,
    ) -> Result<Self> {
        if c_in == 0 || c_out == 0 || m == 0 {
            return invalid("layer extents must be positive");
        }
        if weights.len() != weight_len(mixing, c_in, c_out, m) {
            return invalid(format!(
                "{mixing:?} layer {c_in}->{c_out} at m={m} needs {} weights, got {}",
                weight_len(mixing, c_in, c_out, m),
                weights.len()
            ));
        }
        if let Some(b) = &bias {
            if b.len() != c_out * m {
                return invalid(format!("bias needs {} entries, got {}", c_out * m, b.len()));
            }
        }
        if weights
            .iter()
            .chain(bias.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return invalid("layer parameters must be finite");
        }
        Ok(KSpaceLayer {
            mixing,
            c_in,
            c_out,
            m,
            weights,
            bias,
            activation,
        })
    }

    /// Single-channel layer from `A` (dense or diagonal).
    pub fn from_weights(
        a: &KSpaceWeights<C>,
        bias: Option<Vec<C>>,
        activation: Activation,
    ) -> Result<Self> {
        let mixing = match a.layout() {
            WeightLayout::Dense => Mixing::Dense,
            WeightLayout::Diagonal => Mixing::PerMode,
        };
        KSpaceLayer::new(mixing, 1, 1, a.m(), a.values().to_vec(), bias, activation)
    }

    pub fn mixing(&self) -> Mixing {
        self.mixing
    }
    pub fn c_in(&self) -> usize {
        self.c_in
    }
    pub fn c_out(&self) -> usize {
        self.c_out
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn weights(&self) -> &[C] {
        &self.weights
    }
    pub fn weights_mut(&mut self) -> &mut [C] {
        &mut self.weights
    }
    pub fn bias(&self) -> Option<&[C]> {
        self.bias.as_deref()
    }
    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Number of fan-in terms per output coefficient.
    pub fn fan_in(&self) -> usize {
        match self.mixing {
            Mixing::PerMode => self.c_in,
            Mixing::Dense => self.c_in * self.m,
        }
    }

    pub fn fill_gaussian(&mut self, var_per_part: f64, rng: &mut Stream) {
        for w in self.weights.iter_mut() {
            *w = C::gaussian(rng, var_per_part);
        }
    }

    /// `A z + b`, without the activation.
    pub fn apply(&self, z: &[C]) -> Vec<C> {
        let (m, ci, co) = (self.m, self.c_in, self.c_out);
        debug_assert_eq!(z.len(), ci * m);
        let mut u = match &self.bias {
            Some(b) => b.clone(),
            None => vec![C::zero(); co * m],
        };
        match self.mixing {
            Mixing::PerMode => {
                for k in 0..m {
                    let block = &self.weights[k * co * ci..(k + 1) * co * ci];
                    for o in 0..co {
                        let row = &block[o * ci..(o + 1) * ci];
                        let mut acc = C::zero();
                        for i in 0..ci {
                            acc += row[i] * z[i * m + k];
                        }
                        u[o * m + k] += acc;
                    }
                }
            }
            Mixing::Dense => {
                for o in 0..co {
                    for i in 0..ci {
                        let zi = &z[i * m..(i + 1) * m];
                        let block = &self.weights[(o * ci + i) * m * m..(o * ci + i + 1) * m * m];
                        for k in 0..m {
                            let row = &block[k * m..(k + 1) * m];
                            let acc = row.iter().zip(zi).fold(C::zero(), |a, (&w, &x)| a + w * x);
                            u[o * m + k] += acc;
                        }
                    }
                }
            }
        }
        u
    }

    pub fn activate(&self, u: &[C]) -> Vec<C> {
        match self.activation {
            Activation::None => u.to_vec(),
            Activation::Gelu => u.iter().map(|&v| v.gelu()).collect(),
        }
    }

    /// Pulls `g_u` (gradient w.r.t. `A z + b`) back to the input, accumulating
    /// parameter gradients into `g_weights` / `g_bias`.
    pub fn backward(
        &self,
        z: &[C],
        g_u: &[C],
        g_weights: &mut [C],
        g_bias: Option<&mut [C]>,
    ) -> Vec<C> {
        let (m, ci, co) = (self.m, self.c_in, self.c_out);
        let mut g_z = vec![C::zero(); ci * m];
        if let Some(gb) = g_bias {
            for (a, &b) in gb.iter_mut().zip(g_u) {
                *a += b;
            }
        }
        match self.mixing {
            Mixing::PerMode => {
                for k in 0..m {
                    for o in 0..co {
                        let g = g_u[o * m + k];
                        let base = (k * co + o) * ci;
                        for i in 0..ci {
                            g_weights[base + i] += g * z[i * m + k].conj();
                            g_z[i * m + k] += self.weights[base + i].conj() * g;
                        }
                    }
                }
            }
            Mixing::Dense => {
                for o in 0..co {
                    for i in 0..ci {
                        let base = (o * ci + i) * m * m;
                        for k in 0..m {
                            let g = g_u[o * m + k];
                            for j in 0..m {
                                g_weights[base + k * m + j] += g * z[i * m + j].conj();
                                g_z[i * m + j] += self.weights[base + k * m + j].conj() * g;
                            }
                        }
                    }
                }
            }
        }
        g_z
    }
}
