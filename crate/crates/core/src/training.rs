//! Losses, reverse-mode gradients, AdamW training and rollouts.
//!
//! T1 models are trained on their k-space objective: inputs and targets are
//! transformed and truncated once, up front, and every step runs on reduced
//! coefficients. FNO-style models are trained on the n-space relative L2,
//! which equals the full-spectrum k-space objective by Parseval.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, shape_err, Error, Result};
use crate::layers::{AnyModel, ModeSelector, ParamSet, SpectralModel, Wiring};
use crate::rng::{streams, Stream};
use crate::scalar::Coef;
use crate::transforms::Signal;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    None,
    /// Multiplies the rate by `gamma` every `step_size` epochs.
    Step {
        step_size: usize,
        gamma: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutOrder {
    /// The model predicts the next state.
    Zero,
    /// The model predicts `x_{t+1} - x_t`.
    First,
    /// The model predicts `x_{t+1} - 2 x_t + x_{t-1}`.
    Second,
}

impl RolloutOrder {
    /// Past frames the update formula reads besides the current one.
    pub fn lookback(self) -> usize {
        match self {
            RolloutOrder::Zero | RolloutOrder::First => 0,
            RolloutOrder::Second => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(alias = "rel_l2", alias = "RelativeL2Loss")]
    RelL2,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_one() -> usize {
    1
}
fn default_schedule() -> Schedule {
    Schedule::None
}
fn default_order() -> RolloutOrder {
    RolloutOrder::Zero
}
fn default_loss() -> LossKind {
    LossKind::RelL2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_schedule")]
    pub lr_schedule: Schedule,
    pub seed: u64,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_order")]
    pub rollout_order: RolloutOrder,
    /// Frames preceding the current one that the model also reads.
    #[serde(default)]
    pub history_size: usize,
    /// Frames between input and target.
    #[serde(default = "default_one")]
    pub target_steps: usize,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, learning_rate: f64, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            learning_rate,
            weight_decay: 0.0,
            lr_schedule: Schedule::None,
            seed,
            loss: LossKind::RelL2,
            rollout_order: RolloutOrder::Zero,
            history_size: 0,
            target_steps: 1,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.target_steps == 0 {
            return invalid("epochs, batch_size and target_steps must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return invalid("learning_rate must be positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return invalid("weight_decay must be nonnegative");
        }
        if let Schedule::Step { step_size, gamma } = self.lr_schedule {
            if step_size == 0 || !(gamma > 0.0 && gamma <= 1.0) {
                return invalid("step schedule needs step_size > 0 and gamma in (0, 1]");
            }
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return invalid("betas must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            Schedule::None => self.learning_rate,
            Schedule::Step { step_size, gamma } => {
                self.learning_rate * gamma.powi((epoch / step_size) as i32)
            }
        }
    }

    /// Input channels a model needs under this config.
    pub fn in_channels(&self) -> usize {
        self.history_size + 1
    }
}

/// One supervised example; channels are laid out back to back, the current
/// frame first.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Frames are spaced `target_steps` apart: the input holds `x_t, x_{t-s},
/// ..., x_{t-h s}` and the target is built from `x_{t+s}` per the rollout
/// order.
pub fn make_samples(
    ds: &Dataset,
    range: std::ops::Range<usize>,
    cfg: &TrainConfig,
) -> Result<Vec<Sample>> {
    let s = cfg.target_steps;
    let back = cfg.history_size.max(cfg.rollout_order.lookback()) * s;
    if back + s >= ds.frames() {
        return invalid(format!(
            "{} frames per sample cannot cover history {} and step {s}",
            ds.frames(),
            cfg.history_size
        ));
    }
    if range.end > ds.count() {
        return shape_err(format!("at most {} samples", ds.count()), range.end);
    }
    let mut out = Vec::new();
    for i in range {
        for t in back..ds.frames() - s {
            let input: Vec<f64> = (0..=cfg.history_size)
                .flat_map(|h| ds.frame(i, t - h * s).iter().copied())
                .collect();
            let (cur, next) = (ds.frame(i, t), ds.frame(i, t + s));
            let target = match cfg.rollout_order {
                RolloutOrder::Zero => next.to_vec(),
                RolloutOrder::First => next.iter().zip(cur).map(|(a, b)| a - b).collect(),
                RolloutOrder::Second => {
                    let prev = ds.frame(i, t - s);
                    next.iter()
                        .zip(cur)
                        .zip(prev)
                        .map(|((a, b), c)| a - 2.0 * b + c)
                        .collect()
                }
            };
            out.push(Sample { input, target });
        }
    }
    Ok(out)
}

/// `||pred - target|| / ||target||`.
pub fn relative_l2_loss<C: Coef>(pred: &[C], target: &[C]) -> Result<f64> {
    Ok(weighted_rel_l2(pred, target, None)?.0)
}

/// Mean of [`relative_l2_loss`] over a batch.
pub fn relative_l2_batch<C: Coef>(preds: &[Vec<C>], targets: &[Vec<C>]) -> Result<f64> {
    if preds.len() != targets.len() || preds.is_empty() {
        return shape_err(format!("{} predictions", targets.len()), preds.len());
    }
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        total += relative_l2_loss(p, t)?;
    }
    Ok(total / preds.len() as f64)
}

/// Loss and its gradient with respect to `pred`; `w` weights each squared
/// coefficient error. The gradient at zero error is taken as zero.
fn weighted_rel_l2<C: Coef>(pred: &[C], target: &[C], w: Option<&[f64]>) -> Result<(f64, Vec<C>)> {
    if pred.len() != target.len() {
        return shape_err(target.len(), pred.len());
    }
    let weight = |i: usize| w.map_or(1.0, |w| w[i % w.len()]);
    let mut den = 0.0;
    let mut num = 0.0;
    for (i, (&p, &t)) in pred.iter().zip(target).enumerate() {
        den += weight(i) * t.norm_sqr();
        num += weight(i) * (p - t).norm_sqr();
    }
    if !(den > 0.0) {
        return invalid("relative loss needs a target with nonzero norm");
    }
    let (num, den) = (num.sqrt(), den.sqrt());
    let loss = num / den;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {loss}")));
    }
    let grad = if num > 0.0 {
        pred.iter()
            .zip(target)
            .enumerate()
            .map(|(i, (&p, &t))| (p - t).scale(weight(i) / (num * den)))
            .collect()
    } else {
        vec![C::zero(); pred.len()]
    };
    Ok((loss, grad))
}

/// How often each reduced coefficient appears in the full spectrum: 2 for a
/// DFT mode whose conjugate partner is filled in on embed, 1 otherwise.
/// Weighting squared errors by it makes reduced norms equal full-grid norms.
pub fn mode_multiplicity<C: Coef>(selector: &ModeSelector) -> Vec<f64> {
    let kept = selector.kept_mask(C::KIND);
    let n = kept.iter().filter(|&&k| k).count();
    if n == selector.m() {
        return vec![1.0; selector.m()];
    }
    selector
        .indices()
        .iter()
        .map(|&i| {
            if selector.shape().mirror(i) == i {
                1.0
            } else {
                2.0
            }
        })
        .collect()
}

/// Training examples in the form the model's wiring consumes.
enum Prepared<'a, C> {
    /// `real_only` marks self-conjugate modes, whose imaginary part the
    /// inverse transform discards.
    T1 {
        pairs: Vec<(Vec<C>, Vec<C>)>,
        weights: Vec<f64>,
        real_only: Vec<bool>,
    },
    Fno(&'a [Sample]),
}

/// Samples per gradient accumulator within a batch.
const GRAD_CHUNK: usize = 8;

impl<'a, C: Coef> Prepared<'a, C> {
    fn new(model: &SpectralModel<C>, samples: &'a [Sample]) -> Result<Self> {
        let n = model.shape().len();
        for s in samples {
            if s.input.len() != model.in_channels() * n
                || s.target.len() != model.out_channels() * n
            {
                return shape_err(
                    format!(
                        "{} input and {} output channels of {}",
                        model.in_channels(),
                        model.out_channels(),
                        model.shape()
                    ),
                    format!("{} and {} values", s.input.len(), s.target.len()),
                );
            }
        }
        Ok(match model.wiring() {
            Wiring::T1 => Prepared::T1 {
                pairs: samples
                    .par_iter()
                    .map(|s| (model.reduce(&s.input), model.reduce_target(&s.target)))
                    .collect(),
                weights: mode_multiplicity::<C>(model.selector()),
                real_only: model
                    .selector()
                    .indices()
                    .iter()
                    .map(|&i| model.shape().mirror(i) == i)
                    .collect(),
            },
            Wiring::FnoStyle => Prepared::Fno(samples),
        })
    }

    fn len(&self) -> usize {
        match self {
            Prepared::T1 { pairs, .. } => pairs.len(),
            Prepared::Fno(s) => s.len(),
        }
    }

    /// Loss of sample `i`, adding its gradient into `grads` when given.
    fn loss_grad(
        &self,
        model: &SpectralModel<C>,
        i: usize,
        grads: Option<&mut ParamSet<C>>,
    ) -> Result<f64> {
        match self {
            Prepared::T1 {
                pairs,
                weights,
                real_only,
            } => {
                let (z0, y) = &pairs[i];
                let trace = model.t1_trace(z0);
                let project = |v: &[C]| -> Vec<C> {
                    v.iter()
                        .enumerate()
                        .map(|(j, &c)| {
                            if real_only[j % real_only.len()] {
                                c.real_part()
                            } else {
                                c
                            }
                        })
                        .collect()
                };
                let (loss, g) = weighted_rel_l2(&project(&trace.output), y, Some(weights))?;
                if let Some(acc) = grads {
                    model.t1_backward_into(&trace, &project(&g), acc);
                }
                Ok(loss)
            }
            Prepared::Fno(samples) => {
                let s = &samples[i];
                let trace = model.fno_trace(&s.input);
                let (loss, g) = weighted_rel_l2(&trace.output, &s.target, None)?;
                if let Some(acc) = grads {
                    model.fno_backward_into(&trace, &g, acc);
                }
                Ok(loss)
            }
        }
    }

    /// Mean loss and gradient over `idx`, reduced in index order.
    fn batch(
        &self,
        model: &SpectralModel<C>,
        idx: &[usize],
        want_grad: bool,
    ) -> Result<(f64, Option<ParamSet<C>>)> {
        // fixed chunks summed in index order keep results independent of
        // the thread count
        let parts = idx
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut acc = want_grad.then(|| model.zero_grads());
                let mut loss = 0.0;
                for &i in chunk {
                    loss += self.loss_grad(model, i, acc.as_mut())?;
                }
                Ok((loss, acc))
            })
            .collect::<Result<Vec<_>>>()?;
        let scale = 1.0 / idx.len() as f64;
        let mut loss = 0.0;
        let mut grad: Option<ParamSet<C>> = None;
        for (l, g) in parts {
            loss += l;
            if let Some(g) = g {
                match grad.as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => grad = Some(g),
                }
            }
        }
        if let Some(g) = grad.as_mut() {
            g.scale(scale);
        }
        Ok((loss * scale, grad))
    }
}

/// Mean loss over `samples` (k-space for T1, n-space for FNO-style).
pub fn loss<C: Coef>(model: &SpectralModel<C>, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return invalid("empty batch");
    }
    let prep = Prepared::new(model, samples)?;
    let idx: Vec<usize> = (0..prep.len()).collect();
    Ok(prep.batch(model, &idx, false)?.0)
}

/// Mean loss and its exact gradient over `samples`.
pub fn loss_and_grad<C: Coef>(
    model: &SpectralModel<C>,
    samples: &[Sample],
) -> Result<(f64, ParamSet<C>)> {
    if samples.is_empty() {
        return invalid("empty batch");
    }
    let prep = Prepared::new(model, samples)?;
    let idx: Vec<usize> = (0..prep.len()).collect();
    let (l, g) = prep.batch(model, &idx, true)?;
    Ok((l, g.expect("gradient requested")))
}

/// Adam moments with decoupled weight decay over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        AdamW {
            beta1,
            beta2,
            eps,
            weight_decay,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *p -= lr * self.weight_decay * *p;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean of the batch losses seen during the epoch.
    pub train_loss: f64,
    /// n-space N-MSE on the validation samples (absent without them).
    pub val_nmse: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    /// Loss over the whole training set before the first update.
    pub initial_train_loss: f64,
    /// Loss over the whole training set after the last update.
    pub final_train_loss: f64,
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    /// Learning curve without wall-clock columns, so reruns match byte for byte.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,val_nmse\n");
        for e in &self.epochs {
            let val = e.val_nmse.map(|v| format!("{v:.12e}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:e},{:.12e},{}\n",
                e.epoch, e.lr, e.train_loss, val
            ));
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("epoch,seconds\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{:.6}\n", e.epoch, e.seconds));
        }
        out
    }
}

const DIVERGENCE: f64 = 1e6;

/// Minibatch AdamW on the wiring's objective. Bitwise deterministic for a
/// given config regardless of thread count.
pub fn train<C: Coef>(
    model: &mut SpectralModel<C>,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return invalid("training set is empty");
    }
    let prep = Prepared::new(model, train_set)?;
    let all: Vec<usize> = (0..prep.len()).collect();
    let initial_train_loss = prep.batch(model, &all, false)?.0;
    let mut params = model.params();
    let mut flat = params.flatten();
    let mut opt = AdamW::new(flat.len(), cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let lr = cfg.lr_at(epoch);
        let mut order = all.clone();
        Stream::new(cfg.seed, streams::SHUFFLE + epoch as u64).shuffle(&mut order);
        let mut total = 0.0;
        let mut batches = 0;
        for idx in order.chunks(cfg.batch_size) {
            let (l, g) = prep.batch(model, idx, true)?;
            if !(l <= DIVERGENCE) {
                return Err(Error::Numerical(format!(
                    "training diverged at epoch {epoch}: loss {l}"
                )));
            }
            total += l;
            batches += 1;
            opt.step(&mut flat, &g.expect("gradient requested").flatten(), lr);
            params.load_flat(&flat)?;
            model.set_params(&params)?;
        }
        let val_nmse = if val_set.is_empty() {
            None
        } else {
            Some(evaluate_nspace(model, val_set)?)
        };
        let stats = EpochStats {
            epoch,
            lr,
            train_loss: total / batches as f64,
            val_nmse,
            seconds: start.elapsed().as_secs_f64(),
        };
        observer(&stats);
        epochs.push(stats);
    }
    let final_train_loss = prep.batch(model, &all, false)?.0;
    Ok(TrainReport {
        initial_train_loss,
        final_train_loss,
        epochs,
    })
}

/// Mean `||y_hat - y||^2 / ||y||^2` of n-space predictions.
pub fn evaluate_nspace<C: Coef>(model: &SpectralModel<C>, samples: &[Sample]) -> Result<f64> {
    nmse_with(|x| model.predict(x), samples)
}

pub fn nmse_with(
    predict: impl Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    samples: &[Sample],
) -> Result<f64> {
    if samples.is_empty() {
        return invalid("empty dataset");
    }
    let errs = samples
        .par_iter()
        .map(|s| {
            let y = predict(&s.input)?;
            let den: f64 = s.target.iter().map(|v| v * v).sum();
            if !(den > 0.0) {
                return invalid("N-MSE needs targets with nonzero norm");
            }
            let num: f64 = y.iter().zip(&s.target).map(|(a, b)| (a - b).powi(2)).sum();
            Ok(num / den)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

pub fn train_any(
    model: &mut AnyModel,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    observer: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    match model {
        AnyModel::Dct(m) => train(m, train_set, val_set, cfg, observer),
        AnyModel::Dft(m) => train(m, train_set, val_set, cfg, observer),
    }
}

pub fn evaluate_any(model: &AnyModel, samples: &[Sample]) -> Result<f64> {
    nmse_with(|x| model.predict(x), samples)
}

/// Iterates a one-step model from `history` (oldest first, frames spaced
/// as in training) and returns the `steps` predicted frames.
pub fn rollout(
    step: impl Fn(&[f64]) -> Result<Vec<f64>>,
    history: &[Signal],
    steps: usize,
    order: RolloutOrder,
    history_size: usize,
) -> Result<Vec<Signal>> {
    let need = history_size.max(order.lookback()) + 1;
    if history.len() < need {
        return invalid(format!(
            "rollout needs {need} history frames, got {}",
            history.len()
        ));
    }
    let shape = history[0].shape();
    if history.iter().any(|h| h.shape() != shape) {
        return invalid("history frames differ in shape");
    }
    let mut frames: Vec<Vec<f64>> = history.iter().map(|h| h.values().to_vec()).collect();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let t = frames.len() - 1;
        let input: Vec<f64> = (0..=history_size)
            .flat_map(|h| frames[t - h].iter().copied())
            .collect();
        let h = step(&input)?;
        if h.len() != shape.len() {
            return shape_err(shape.len(), h.len());
        }
        let next: Vec<f64> = match order {
            RolloutOrder::Zero => h,
            RolloutOrder::First => frames[t].iter().zip(&h).map(|(x, d)| x + d).collect(),
            RolloutOrder::Second => frames[t]
                .iter()
                .zip(&frames[t - 1])
                .zip(&h)
                .map(|((x, p), d)| 2.0 * x - p + d)
                .collect(),
        };
        out.push(Signal::new(shape, next.clone())?);
        frames.push(next);
    }
    Ok(out)
}
