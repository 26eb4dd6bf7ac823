//! Imitation-learning loop, optimizers and finite-difference gradient checks.

use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::model::{EpisodeInputs, ModelError, Sampling, SiteFeatures, WebVlnNet};
use crate::tensor::{Matrix, Real};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite gradient for `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    AdamW,
    Sgd,
}

/// Multiply the learning rate by `factor` every `every` fraction of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub factor: f64,
    pub every: f64,
}

impl Default for StepDecay {
    fn default() -> Self {
        StepDecay { factor: 0.5, every: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub lambda: f64,
    pub seed: u64,
    pub lr_decay: StepDecay,
    pub checkpoint_every: usize,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            iterations: 5000,
            batch_size: 4,
            eta: 1.0,
            lambda: 1.0,
            seed: 0,
            lr_decay: StepDecay::default(),
            checkpoint_every: 1000,
            optimizer: OptimizerKind::AdamW,
            weight_decay: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.iterations == 0 || self.batch_size == 0 || self.checkpoint_every == 0 {
            return bad("iterations, batch_size and checkpoint_every must be positive");
        }
        if !(self.eta >= 0.0 && self.lambda >= 0.0) {
            return bad("eta and lambda must be non-negative");
        }
        if !(self.lr_decay.factor > 0.0 && self.lr_decay.every > 0.0) {
            return bad("lr_decay factor and interval must be positive");
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }

    /// Learning rate in effect at 0-based iteration `iter`.
    pub fn lr_at(&self, iter: usize) -> f64 {
        let every = ((self.iterations as f64 * self.lr_decay.every).round() as usize).max(1);
        let k = (iter / every) as i32;
        self.learning_rate * Float::powi(self.lr_decay.factor, k)
    }
}

/// First-order optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer<F> {
    Sgd,
    AdamW { beta1: f64, beta2: f64, eps: f64, weight_decay: f64, t: u64, m: Vec<Matrix<F>>, v: Vec<Matrix<F>> },
}

impl<F: Real> Optimizer<F> {
    pub fn sgd() -> Self {
        Optimizer::Sgd
    }

    pub fn adamw(params: &[Matrix<F>], weight_decay: f64) -> Self {
        let zeros: Vec<Matrix<F>> = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Optimizer::AdamW { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, t: 0, m: zeros.clone(), v: zeros }
    }

    pub fn for_config(config: &TrainConfig, params: &[Matrix<F>]) -> Self {
        match config.optimizer {
            OptimizerKind::Sgd => Self::sgd(),
            OptimizerKind::AdamW => Self::adamw(params, config.weight_decay),
        }
    }

    /// Applies one update. Tensors without a gradient are left untouched.
    pub fn step(&mut self, params: &mut [Matrix<F>], grads: &[Option<Matrix<F>>], lr: f64) {
        match self {
            Optimizer::Sgd => {
                let lr = F::of(lr);
                for (p, g) in params.iter_mut().zip(grads) {
                    if let Some(g) = g {
                        p.data_mut().iter_mut().zip(g.data()).for_each(|(x, &d)| *x -= lr * d);
                    }
                }
            }
            Optimizer::AdamW { beta1, beta2, eps, weight_decay, t, m, v } => {
                *t += 1;
                let bc1 = 1.0 - Float::powi(*beta1, *t as i32);
                let bc2 = 1.0 - Float::powi(*beta2, *t as i32);
                let (b1, b2) = (F::of(*beta1), F::of(*beta2));
                let (one_b1, one_b2) = (F::of(1.0 - *beta1), F::of(1.0 - *beta2));
                let step = F::of(lr / bc1);
                let inv_bc2 = F::of(1.0 / bc2);
                let e = F::of(*eps);
                let decay = F::of(lr * *weight_decay);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let Some(g) = g else { continue };
                    let (mi, vi) = (m[i].data_mut(), v[i].data_mut());
                    for (j, x) in p.data_mut().iter_mut().enumerate() {
                        let d = g.data()[j];
                        mi[j] = b1 * mi[j] + one_b1 * d;
                        vi[j] = b2 * vi[j] + one_b2 * d * d;
                        *x -= decay * *x;
                        *x -= step * mi[j] / ((vi[j] * inv_bc2).sqrt() + e);
                    }
                }
            }
        }
    }
}

/// Losses of one optimisation step, averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub iter: usize,
    pub loss: f64,
    pub l_nav: f64,
    pub l_ans: f64,
}

/// Batch-mean loss and gradients. Records are processed in order and
/// their gradients summed before averaging, so results do not depend on
/// any parallel schedule.
pub fn batch_gradients<F: Real>(
    net: &WebVlnNet<F>,
    batch: &[&EpisodeInputs],
    site: &SiteFeatures,
    rng: &mut ChaCha8Rng,
    eta: f64,
    lambda: f64,
) -> Result<(StepStats, Vec<Option<Matrix<F>>>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut grads: Vec<Option<Matrix<F>>> = alloc::vec![None; net.params().tensors().len()];
    let mut stats = StepStats { iter: 0, loss: 0.0, l_nav: 0.0, l_ans: 0.0 };
    for inputs in batch {
        let mut tape = Tape::new(net.params().tensors());
        let l = net.episode_loss(&mut tape, inputs, site, Sampling::Draw(rng), F::of(eta), F::of(lambda))?;
        let total = tape.scalar(l.total).as_f64();
        if !total.is_finite() {
            return Err(TrainError::NonFiniteLoss);
        }
        stats.loss += total;
        stats.l_nav += l.l_nav;
        stats.l_ans += l.l_ans;
        for (acc, g) in grads.iter_mut().zip(tape.backward(l.total)) {
            match (acc.as_mut(), g) {
                (Some(a), Some(g)) => a.add_assign(&g),
                (None, Some(g)) => *acc = Some(g),
                _ => {}
            }
        }
    }
    let n = batch.len() as f64;
    stats.loss /= n;
    stats.l_nav /= n;
    stats.l_ans /= n;
    let inv = F::of(1.0 / n);
    for (i, g) in grads.iter_mut().enumerate() {
        if let Some(g) = g {
            g.scale(inv);
            if !g.is_finite() {
                return Err(TrainError::NonFiniteGradient(net.params().names()[i].clone()));
            }
        }
    }
    Ok((stats, grads))
}

/// Drives training: seeded batch order (reshuffled every epoch), seeded
/// action sampling, step-decayed learning rate.
#[derive(Debug, Clone)]
pub struct Trainer<F> {
    config: TrainConfig,
    optimizer: Optimizer<F>,
    rng: ChaCha8Rng,
    iter: usize,
    order: Vec<usize>,
    cursor: usize,
}

impl<F: Real> Trainer<F> {
    pub fn new(config: TrainConfig, net: &WebVlnNet<F>) -> Result<Self, TrainError> {
        config.validate()?;
        Ok(Trainer {
            optimizer: Optimizer::for_config(&config, net.params().tensors()),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            iter: 0,
            order: Vec::new(),
            cursor: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Number of completed steps.
    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn finished(&self) -> bool {
        self.iter >= self.config.iterations
    }

    fn next_batch(&mut self, n: usize) -> Vec<usize> {
        let size = self.config.batch_size.min(n);
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor >= self.order.len() || self.order.len() != n {
                self.order = (0..n).collect();
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }

    /// One update on the next batch drawn from `data`.
    pub fn step(&mut self, net: &mut WebVlnNet<F>, data: &[EpisodeInputs], site: &SiteFeatures) -> Result<StepStats, TrainError> {
        if data.is_empty() {
            return Err(TrainError::EmptyBatch);
        }
        let idx = self.next_batch(data.len());
        let batch: Vec<&EpisodeInputs> = idx.iter().map(|&i| &data[i]).collect();
        self.step_on(net, &batch, site)
    }

    /// One update on an explicit batch.
    pub fn step_on(&mut self, net: &mut WebVlnNet<F>, batch: &[&EpisodeInputs], site: &SiteFeatures) -> Result<StepStats, TrainError> {
        let (mut stats, grads) = batch_gradients(net, batch, site, &mut self.rng, self.config.eta, self.config.lambda)?;
        let lr = self.config.lr_at(self.iter);
        self.optimizer.step(net.params_mut().tensors_mut(), &grads, lr);
        stats.iter = self.iter;
        self.iter += 1;
        Ok(stats)
    }
}

/// Loss of one record with fixed sampled actions (no randomness).
pub fn fixed_loss<F: Real>(
    net: &WebVlnNet<F>,
    inputs: &EpisodeInputs,
    site: &SiteFeatures,
    sampled: &[usize],
    eta: f64,
    lambda: f64,
) -> Result<f64, TrainError> {
    let mut tape = Tape::new(net.params().tensors());
    let l = net.episode_loss(&mut tape, inputs, site, Sampling::Fixed(sampled), F::of(eta), F::of(lambda))?;
    Ok(tape.scalar(l.total).as_f64())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Random subset size; `None` checks every coordinate.
    pub samples: Option<usize>,
    pub seed: u64,
    /// Tensors whose every coordinate is checked in addition to the subset.
    pub include: Vec<usize>,
    /// Multiply the analytic gradient of one tensor (negative control).
    pub corrupt: Option<(usize, f64)>,
    pub eta: f64,
    pub lambda: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { eps: 1e-5, samples: Some(600), seed: 0, include: Vec::new(), corrupt: None, eta: 1.0, lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates: usize,
    pub worst_parameter: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient of the total loss against central
/// differences. Sampled actions are drawn once and then held fixed.
pub fn grad_check(net: &WebVlnNet<f64>, inputs: &EpisodeInputs, site: &SiteFeatures, opts: &GradCheckOptions) -> Result<GradCheckReport, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut tape = Tape::new(net.params().tensors());
    let l = net.episode_loss(&mut tape, inputs, site, Sampling::Draw(&mut rng), opts.eta, opts.lambda)?;
    let sampled = l.sampled.clone();
    let mut grads = tape.backward(l.total);
    drop(tape);
    if let Some((idx, factor)) = opts.corrupt {
        if let Some(g) = grads.get_mut(idx).and_then(Option::as_mut) {
            g.scale(factor);
        }
    }
    for (i, g) in grads.iter().enumerate() {
        if g.as_ref().is_some_and(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteGradient(net.params().names()[i].clone()));
        }
    }

    let total = net.params().num_scalars();
    let mut coords: Vec<usize> = match opts.samples {
        Some(k) if k < total => rand::seq::index::sample(&mut rng, total, k).into_vec(),
        _ => (0..total).collect(),
    };
    let mut offset = 0;
    for (i, t) in net.params().tensors().iter().enumerate() {
        if opts.include.contains(&i) {
            coords.extend(offset..offset + t.len());
        }
        offset += t.len();
    }
    coords.sort_unstable();
    coords.dedup();

    let mut work = net.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        coordinates: coords.len(),
        worst_parameter: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for &k in &coords {
        let (ti, off) = net.params().locate(k).expect("coordinate in range");
        let orig = net.params().tensors()[ti].data()[off];
        work.params_mut().tensors_mut()[ti].data_mut()[off] = orig + opts.eps;
        let plus = fixed_loss(&work, inputs, site, &sampled, opts.eta, opts.lambda)?;
        work.params_mut().tensors_mut()[ti].data_mut()[off] = orig - opts.eps;
        let minus = fixed_loss(&work, inputs, site, &sampled, opts.eta, opts.lambda)?;
        work.params_mut().tensors_mut()[ti].data_mut()[off] = orig;
        let numeric = (plus - minus) / (2.0 * opts.eps);
        let analytic = grads[ti].as_ref().map_or(0.0, |g| g.data()[off]);
        let err = relative_error(analytic, numeric);
        if err.is_nan() || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_parameter = alloc::format!("{}[{off}]", net.params().names()[ti]);
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}
