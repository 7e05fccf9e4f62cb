use serde::{Deserialize, Serialize};

use super::layer::{Activation, KSpaceLayer, Mixing};
use super::selector::ModeSelector;
use crate::error::{invalid, shape_err, Error, Result};
use crate::rng::{streams, Stream};
use crate::scalar::{gelu, gelu_derivative, Coef};
use crate::transforms::{Shape, TransformKind, TransformOperator};

/// Where the transforms sit in a stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wiring {
    /// A forward and an inverse transform around every layer, with an
    /// n-space residual and the activation after the inverse.
    FnoStyle,
    /// One forward transform; every layer works on reduced coefficients.
    T1,
}

impl Wiring {
    pub fn tag(self) -> u32 {
        match self {
            Wiring::T1 => 0,
            Wiring::FnoStyle => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Wiring::T1),
            1 => Some(Wiring::FnoStyle),
            _ => None,
        }
    }
}

/// Weight initialization for a whole stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Variance-preserving scaling on truncating layers (the first layer
    /// of a T1 stack, every layer of an FNO-style stack), Xavier elsewhere.
    Vp,
    /// `N(0, 1/fan_in)` everywhere.
    Xavier,
}

/// Stack hyperparameters, mirroring the `modes / nlayers / width` blocks of
/// typical operator-learning configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub wiring: Wiring,
    pub transform: TransformKind,
    pub depth: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub in_channels: usize,
    #[serde(default = "one")]
    pub out_channels: usize,
    #[serde(default = "per_mode")]
    pub mixing: Mixing,
    #[serde(default = "gelu_act")]
    pub activation: Activation,
    #[serde(default)]
    pub bias: bool,
    /// n-space residual `g`; FNO-style only.
    #[serde(default)]
    pub residual: bool,
}

fn one() -> usize {
    1
}
fn per_mode() -> Mixing {
    Mixing::PerMode
}
fn gelu_act() -> Activation {
    Activation::Gelu
}

impl Architecture {
    pub fn channels(&self) -> Vec<usize> {
        let mut c = vec![self.in_channels];
        c.extend(std::iter::repeat_n(
            self.width,
            self.depth.saturating_sub(1),
        ));
        c.push(self.out_channels);
        c
    }
}

/// Trainable parameters (or gradients) of a [`SpectralModel`], in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<C> {
    pub weights: Vec<Vec<C>>,
    pub biases: Vec<Option<Vec<C>>>,
    /// Row-major `c_out x c_in` n-space residual per layer (FNO-style only).
    pub residuals: Vec<Vec<f64>>,
}

impl<C: Coef> ParamSet<C> {
    pub fn zeros_like(&self) -> Self {
        ParamSet {
            weights: self
                .weights
                .iter()
                .map(|w| vec![C::zero(); w.len()])
                .collect(),
            biases: self
                .biases
                .iter()
                .map(|b| b.as_ref().map(|b| vec![C::zero(); b.len()]))
                .collect(),
            residuals: self.residuals.iter().map(|r| vec![0.0; r.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            if let (Some(a), Some(b)) = (a, b) {
                for (x, &y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
        }
        for (a, b) in self.residuals.iter_mut().zip(&other.residuals) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in self.weights.iter_mut().flatten() {
            *w = w.scale(s);
        }
        for b in self.biases.iter_mut().flatten().flatten() {
            *b = b.scale(s);
        }
        for r in self.residuals.iter_mut().flatten() {
            *r *= s;
        }
    }

    /// Real parameter vector: per layer weights then bias (complex values as
    /// `re, im`), then residual matrices.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for &v in w.iter().chain(b.iter().flatten()) {
                v.push_parts(&mut out);
            }
        }
        for r in &self.residuals {
            out.extend_from_slice(r);
        }
        out
    }

    pub fn len_flat(&self) -> usize {
        let coefs: usize = self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().flatten().map(Vec::len).sum::<usize>();
        coefs * C::PARTS + self.residuals.iter().map(Vec::len).sum::<usize>()
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len_flat() {
            return shape_err(self.len_flat(), flat.len());
        }
        let mut pos = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut().chain(b.iter_mut().flatten()) {
                *v = C::from_parts(&flat[pos..pos + C::PARTS]);
                pos += C::PARTS;
            }
        }
        for r in self.residuals.iter_mut() {
            let len = r.len();
            r.copy_from_slice(&flat[pos..pos + len]);
            pos += len;
        }
        Ok(())
    }
}

/// A stack of k-space layers over a fixed grid and mode selector.
#[derive(Clone, Debug)]
pub struct SpectralModel<C: Coef> {
    wiring: Wiring,
    selector: ModeSelector,
    layers: Vec<KSpaceLayer<C>>,
    residuals: Vec<Vec<f64>>,
    op: TransformOperator,
}

/// Intermediate values of a T1 pass kept for the backward sweep.
pub struct T1Trace<C> {
    /// Input of each layer.
    zs: Vec<Vec<C>>,
    /// `A z + b` of each layer.
    us: Vec<Vec<C>>,
    pub output: Vec<C>,
}

/// Intermediate values of an FNO-style pass kept for the backward sweep.
pub struct FnoTrace<C> {
    hs: Vec<Vec<f64>>,
    zs: Vec<Vec<C>>,
    rs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl<C: Coef> SpectralModel<C> {
    pub fn new(
        wiring: Wiring,
        selector: ModeSelector,
        layers: Vec<KSpaceLayer<C>>,
        residuals: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return invalid("a model needs depth >= 1");
        }
        selector.check_for(C::KIND)?;
        for (l, layer) in layers.iter().enumerate() {
            if layer.m != selector.m() {
                return invalid(format!(
                    "layer {l} expects m={}, selector has m={}",
                    layer.m,
                    selector.m()
                ));
            }
            if l > 0 && layer.c_in != layers[l - 1].c_out {
                return invalid(format!(
                    "layer {l} takes {} channels, previous layer gives {}",
                    layer.c_in,
                    layers[l - 1].c_out
                ));
            }
        }
        match wiring {
            Wiring::T1 if !residuals.is_empty() => {
                return invalid("T1 stacks have no n-space residual path");
            }
            Wiring::FnoStyle if !residuals.is_empty() => {
                if residuals.len() != layers.len() {
                    return invalid("one residual map per layer required");
                }
                for (l, (r, layer)) in residuals.iter().zip(&layers).enumerate() {
                    if r.len() != layer.c_in * layer.c_out {
                        return invalid(format!(
                            "residual {l} must be {}x{}",
                            layer.c_out, layer.c_in
                        ));
                    }
                }
            }
            _ => {}
        }
        let op = TransformOperator::new(C::KIND, selector.shape())?;
        Ok(SpectralModel {
            wiring,
            selector,
            layers,
            residuals,
            op,
        })
    }

    /// Builds a zero-initialized stack and then initializes it with `policy`.
    pub fn build(
        arch: &Architecture,
        selector: ModeSelector,
        policy: InitPolicy,
        seed: u64,
    ) -> Result<Self> {
        if arch.transform != C::KIND {
            return Err(Error::KindMismatch {
                expected: C::KIND,
                got: arch.transform,
            });
        }
        if arch.depth == 0 || arch.width == 0 || arch.in_channels == 0 || arch.out_channels == 0 {
            return invalid("depth, width and channel counts must be positive");
        }
        if arch.residual && arch.wiring == Wiring::T1 {
            return invalid("T1 stacks have no n-space residual path");
        }
        let chans = arch.channels();
        let m = selector.m();
        let layers = (0..arch.depth)
            .map(|l| {
                let act = if l + 1 < arch.depth {
                    arch.activation
                } else {
                    Activation::None
                };
                KSpaceLayer::zeros(arch.mixing, chans[l], chans[l + 1], m, arch.bias, act)
            })
            .collect();
        let residuals = if arch.residual {
            (0..arch.depth)
                .map(|l| vec![0.0; chans[l] * chans[l + 1]])
                .collect()
        } else {
            Vec::new()
        };
        let mut model = SpectralModel::new(arch.wiring, selector, layers, residuals)?;
        model.initialize(policy, seed);
        Ok(model)
    }

    /// Draws every weight tensor from its own random stream; biases are zeroed.
    pub fn initialize(&mut self, policy: InitPolicy, seed: u64) {
        let n = self.selector.n() as f64;
        let m = self.selector.m() as f64;
        let parts = C::PARTS as f64;
        let wiring = self.wiring;
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let truncating = l == 0 || wiring == Wiring::FnoStyle;
            let var = match (policy, truncating) {
                (InitPolicy::Vp, true) => match layer.mixing {
                    Mixing::PerMode => n / (m * layer.c_in as f64),
                    Mixing::Dense => n / (m * m * layer.c_in as f64),
                },
                _ => 1.0 / layer.fan_in() as f64,
            } / parts;
            let mut rng = Stream::new(seed, streams::LAYER_BASE + 4 * l as u64);
            layer.fill_gaussian(var, &mut rng);
            if let Some(b) = layer.bias.as_mut() {
                b.fill(C::zero());
            }
        }
        for (l, r) in self.residuals.iter_mut().enumerate() {
            let c_in = self.layers[l].c_in as f64;
            let mut rng = Stream::new(seed, streams::LAYER_BASE + 4 * l as u64 + 2);
            rng.fill_normal(r, (1.0 / c_in).sqrt());
        }
    }

    pub fn wiring(&self) -> Wiring {
        self.wiring
    }
    pub fn kind(&self) -> TransformKind {
        C::KIND
    }
    pub fn shape(&self) -> Shape {
        self.selector.shape()
    }
    pub fn selector(&self) -> &ModeSelector {
        &self.selector
    }
    pub fn layers(&self) -> &[KSpaceLayer<C>] {
        &self.layers
    }
    pub fn layers_mut(&mut self) -> &mut [KSpaceLayer<C>] {
        &mut self.layers
    }
    pub fn residuals(&self) -> &[Vec<f64>] {
        &self.residuals
    }
    pub fn depth(&self) -> usize {
        self.layers.len()
    }
    pub fn in_channels(&self) -> usize {
        self.layers[0].c_in
    }
    pub fn out_channels(&self) -> usize {
        self.layers[self.layers.len() - 1].c_out
    }
    pub fn operator(&self) -> &TransformOperator {
        &self.op
    }

    pub fn params(&self) -> ParamSet<C> {
        ParamSet {
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.bias.clone()).collect(),
            residuals: self.residuals.clone(),
        }
    }

    pub fn set_params(&mut self, p: &ParamSet<C>) -> Result<()> {
        let same = p.weights.len() == self.layers.len()
            && p.residuals.len() == self.residuals.len()
            && self
                .layers
                .iter()
                .zip(&p.weights)
                .all(|(l, w)| l.weights.len() == w.len())
            && self
                .layers
                .iter()
                .zip(&p.biases)
                .all(|(l, b)| l.bias.as_ref().map(Vec::len) == b.as_ref().map(Vec::len))
            && self
                .residuals
                .iter()
                .zip(&p.residuals)
                .all(|(a, b)| a.len() == b.len());
        if !same {
            return invalid("parameter set does not match model structure");
        }
        for ((layer, w), b) in self.layers.iter_mut().zip(&p.weights).zip(&p.biases) {
            layer.weights.clone_from(w);
            layer.bias.clone_from(b);
        }
        self.residuals.clone_from(&p.residuals);
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.params().len_flat()
    }

    fn check_input(&self, x: &[f64], channels: usize) -> Result<()> {
        let want = channels * self.selector.n();
        if x.len() != want {
            return shape_err(
                format!("{channels} channels x {}", self.shape()),
                format!("{} values", x.len()),
            );
        }
        Ok(())
    }

    fn require(&self, wiring: Wiring) -> Result<()> {
        if self.wiring != wiring {
            return invalid(format!(
                "operation requires {wiring:?} wiring, model is {:?}",
                self.wiring
            ));
        }
        Ok(())
    }

    /// `S_m T x` for every input channel, one forward pass.
    pub fn reduce(&self, x: &[f64]) -> Vec<C> {
        let spec = self.op.analyze::<C>(x);
        spec.chunks_exact(self.selector.n())
            .flat_map(|ch| self.selector.gather(ch))
            .collect()
    }

    /// `S_m T y` of a target signal; identical to [`SpectralModel::reduce`].
    pub fn reduce_target(&self, y: &[f64]) -> Vec<C> {
        self.reduce(y)
    }

    /// Embeds reduced coefficients and inverts, one inverse pass.
    pub fn expand(&self, reduced: &[C]) -> Vec<f64> {
        let m = self.selector.m();
        let full: Vec<C> = reduced
            .chunks_exact(m)
            .flat_map(|ch| self.selector.embed_coeffs(ch))
            .collect();
        self.op.synthesize(&full)
    }

    /// Runs the k-space layers on already reduced input coefficients.
    pub fn t1_trace(&self, z0: &[C]) -> T1Trace<C> {
        let mut zs = Vec::with_capacity(self.layers.len());
        let mut us = Vec::with_capacity(self.layers.len());
        let mut z = z0.to_vec();
        for layer in &self.layers {
            let u = layer.apply(&z);
            let next = layer.activate(&u);
            zs.push(z);
            us.push(u);
            z = next;
        }
        T1Trace { zs, us, output: z }
    }

    /// Reduced prediction `Y_hat = gamma(S_m T x)`; exactly one forward transform.
    pub fn t1_forward(&self, x: &[f64]) -> Result<Vec<C>> {
        self.require(Wiring::T1)?;
        self.check_input(x, self.in_channels())?;
        Ok(self.t1_trace(&self.reduce(x)).output)
    }

    /// n-space prediction `T^-1 S_m^T Y_hat`; one forward and one inverse transform.
    pub fn t1_predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.t1_forward(x)?;
        Ok(self.expand(&y))
    }

    /// A zero gradient with this model's parameter layout.
    pub fn zero_grads(&self) -> ParamSet<C> {
        ParamSet {
            weights: self
                .layers
                .iter()
                .map(|l| vec![C::zero(); l.weights.len()])
                .collect(),
            biases: self
                .layers
                .iter()
                .map(|l| l.bias.as_ref().map(|b| vec![C::zero(); b.len()]))
                .collect(),
            residuals: self.residuals.iter().map(|r| vec![0.0; r.len()]).collect(),
        }
    }

    /// Gradients of a loss on the reduced output, given `dL/dY_hat`.
    pub fn t1_backward(&self, trace: &T1Trace<C>, g_out: &[C]) -> ParamSet<C> {
        let mut grads = self.zero_grads();
        self.t1_backward_into(trace, g_out, &mut grads);
        grads
    }

    /// [`Self::t1_backward`], adding into `grads`.
    pub fn t1_backward_into(&self, trace: &T1Trace<C>, g_out: &[C], grads: &mut ParamSet<C>) {
        let mut g = g_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let g_u: Vec<C> = match layer.activation {
                Activation::None => g,
                Activation::Gelu => trace.us[l]
                    .iter()
                    .zip(&g)
                    .map(|(&u, &gv)| u.gelu_backward(gv))
                    .collect(),
            };
            let (gw, gb) = (&mut grads.weights[l], grads.biases[l].as_deref_mut());
            g = layer.backward(&trace.zs[l], &g_u, gw, gb);
        }
    }

    /// One FNO-style layer: `act(T^-1 S_m^T (A S_m T h + b) + g h)`.
    fn fno_layer(&self, l: usize, h: &[f64]) -> (Vec<C>, Vec<f64>, Vec<f64>) {
        let layer = &self.layers[l];
        let n = self.selector.n();
        let z = self.reduce(h);
        let u = layer.apply(&z);
        let mut r = self.expand(&u);
        if let Some(res) = self.residuals.get(l) {
            let (ci, co) = (layer.c_in, layer.c_out);
            for o in 0..co {
                let out = &mut r[o * n..(o + 1) * n];
                for i in 0..ci {
                    let w = res[o * ci + i];
                    for (acc, &v) in out.iter_mut().zip(&h[i * n..(i + 1) * n]) {
                        *acc += w * v;
                    }
                }
            }
        }
        let next = match layer.activation {
            Activation::None => r.clone(),
            Activation::Gelu => r.iter().map(|&v| gelu(v)).collect(),
        };
        (z, r, next)
    }

    pub fn fno_trace(&self, x: &[f64]) -> FnoTrace<C> {
        let mut hs = Vec::with_capacity(self.layers.len());
        let mut zs = Vec::with_capacity(self.layers.len());
        let mut rs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for l in 0..self.layers.len() {
            let (z, r, next) = self.fno_layer(l, &h);
            hs.push(h);
            zs.push(z);
            rs.push(r);
            h = next;
        }
        FnoTrace {
            hs,
            zs,
            rs,
            output: h,
        }
    }

    /// `d` sequential FDM layers; `d` forward and `d` inverse transforms.
    pub fn fno_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.require(Wiring::FnoStyle)?;
        self.check_input(x, self.in_channels())?;
        Ok(self.fno_trace(x).output)
    }

    /// Gradients of a loss on the n-space output, given `dL/dy_hat`.
    pub fn fno_backward(&self, trace: &FnoTrace<C>, g_out: &[f64]) -> ParamSet<C> {
        let mut grads = self.zero_grads();
        self.fno_backward_into(trace, g_out, &mut grads);
        grads
    }

    /// [`Self::fno_backward`], adding into `grads`.
    pub fn fno_backward_into(&self, trace: &FnoTrace<C>, g_out: &[f64], grads: &mut ParamSet<C>) {
        let n = self.selector.n();
        let m = self.selector.m();
        let mut g = g_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (ci, co) = (layer.c_in, layer.c_out);
            let g_r: Vec<f64> = match layer.activation {
                Activation::None => g,
                Activation::Gelu => trace.rs[l]
                    .iter()
                    .zip(&g)
                    .map(|(&r, &gv)| gv * gelu_derivative(r))
                    .collect(),
            };
            let h = &trace.hs[l];
            let mut g_h = vec![0.0; ci * n];
            if let Some(res) = self.residuals.get(l) {
                let gres = &mut grads.residuals[l];
                for o in 0..co {
                    let gr = &g_r[o * n..(o + 1) * n];
                    for i in 0..ci {
                        let hi = &h[i * n..(i + 1) * n];
                        gres[o * ci + i] += gr.iter().zip(hi).map(|(a, b)| a * b).sum::<f64>();
                        let w = res[o * ci + i];
                        for (acc, &v) in g_h[i * n..(i + 1) * n].iter_mut().zip(gr) {
                            *acc += w * v;
                        }
                    }
                }
            }
            // adjoint of T^-1 S_m^T is S_m^T* T
            let g_spec = self.op.analyze::<C>(&g_r);
            let g_u: Vec<C> = g_spec
                .chunks_exact(n)
                .flat_map(|ch| self.selector.embed_adjoint(ch))
                .collect();
            let (gw, gb) = (&mut grads.weights[l], grads.biases[l].as_deref_mut());
            let g_z = layer.backward(&trace.zs[l], &g_u, gw, gb);
            // adjoint of S_m T is T^* S_m^T (plain scatter)
            let g_full: Vec<C> = g_z
                .chunks_exact(m)
                .flat_map(|ch| self.selector.scatter(ch))
                .collect();
            let back = self.op.synthesize(&g_full);
            for (a, b) in g_h.iter_mut().zip(back) {
                *a += b;
            }
            g = g_h;
        }
    }

    /// n-space output for either wiring.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.wiring {
            Wiring::T1 => self.t1_predict(x),
            Wiring::FnoStyle => self.fno_forward(x),
        }
    }

    /// Number of transform passes one n-space prediction performs,
    /// measured with the operator's counters.
    pub fn count_transforms(&self, x: &[f64], n_space_output: bool) -> Result<(usize, usize)> {
        self.op.reset_counts();
        match (self.wiring, n_space_output) {
            (Wiring::T1, false) => {
                self.t1_forward(x)?;
            }
            _ => {
                self.predict(x)?;
            }
        }
        let c = self.op.counts();
        self.op.reset_counts();
        Ok((c.forward, c.inverse))
    }
}
