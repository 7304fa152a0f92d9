//! Offline noise learning on a frozen split network.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collector::{
    fit_laplace, histogram_sse, wilson_interval, CollectorConfig, DistributionCollection,
    LaplaceParams, DEFAULT_SSE_BINS, DEFAULT_SSE_THRESHOLD,
};
use crate::data::{Dataset, Example};
use crate::error::{Error, Result};
use crate::network::{Network, NetworkSpec, Split, Weights};
use crate::tensor_core::{cross_entropy, cross_entropy_with_grad, forward, grad_wrt_noise, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Initial weight of the noise-magnitude reward.
    pub alpha: f64,
    /// Weight of the private-task cross-entropy (0 disables it).
    pub gamma: f64,
    pub learning_rate: f64,
    pub alpha_decay: f64,
    pub alpha_period: usize,
    pub batch_size: usize,
    /// Laplace scale of the initial noise.
    pub init_scale: f64,
    /// Largest tolerated holdout accuracy drop.
    pub epsilon: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub target_collection_size: usize,
    pub eval_interval: usize,
    /// Steps per round; 0 lets a round run until it yields an entry.
    pub round_iterations: usize,
    pub selection: Selection,
    /// Total iterations over all rounds before giving up.
    pub max_iterations: usize,
    pub sse_threshold: f64,
    pub sse_bins: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.01,
            gamma: 0.0,
            learning_rate: 0.01,
            alpha_decay: 0.1,
            alpha_period: 500,
            batch_size: 16,
            init_scale: 1.0,
            epsilon: 0.02,
            holdout_fraction: 0.1,
            seed: 0,
            target_collection_size: 20,
            eval_interval: 100,
            round_iterations: 400,
            selection: Selection::Best,
            max_iterations: 20_000,
            sse_threshold: DEFAULT_SSE_THRESHOLD,
            sse_bins: DEFAULT_SSE_BINS,
        }
    }
}

/// Which passing checkpoint of a round is collected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// The first checkpoint that passes both gates ends the round.
    First,
    /// The round runs for `round_iterations` steps and the passing
    /// checkpoint with the highest 1/SNR is collected.
    Best,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.alpha_decay > 0.0 && self.alpha_decay <= 1.0) {
            return bad(format!(
                "alpha decay must be in (0, 1], got {}",
                self.alpha_decay
            ));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction <= 0.5) {
            return bad(format!(
                "holdout fraction must be in (0, 0.5], got {}",
                self.holdout_fraction
            ));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad(format!(
                "initial noise scale must be positive, got {}",
                self.init_scale
            ));
        }
        if !(self.epsilon >= 0.0) {
            return bad(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            ));
        }
        if self.selection == Selection::Best && self.round_iterations == 0 {
            return bad("best-checkpoint selection needs a positive round length".into());
        }
        if self.alpha_period == 0 || self.batch_size == 0 || self.eval_interval == 0 {
            return bad("alpha period, batch size and eval interval must be positive".into());
        }
        if self.target_collection_size == 0 || self.target_collection_size > u16::MAX as usize {
            return bad(format!(
                "target collection size must be in 1..=65535, got {}",
                self.target_collection_size
            ));
        }
        Ok(())
    }

    pub fn collector(&self) -> CollectorConfig {
        CollectorConfig {
            sse_threshold: self.sse_threshold,
            bins: self.sse_bins,
        }
    }
}

/// `α₀ · decay^⌊iteration / period⌋`.
pub fn alpha_at(iteration: usize, cfg: &TrainConfig) -> f64 {
    cfg.alpha * cfg.alpha_decay.powi((iteration / cfg.alpha_period) as i32)
}

/// IID Laplace(0, `scale`) noise.
pub fn init_noise(shape: &[usize], scale: f64, seed: u64) -> Result<Tensor> {
    let dist = LaplaceParams::new(0.0, scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| dist.sample(&mut rng) as f32).collect(),
    )
}

/// `CE − α·Σ|n|`.
pub fn loss_no_private(logits: &Tensor, label: usize, n: &Tensor, alpha: f64) -> Result<f64> {
    Ok(cross_entropy(logits, label)? - alpha * n.l1_norm())
}

/// `CE_primary − γ·CE_private − α·Σ|n|`.
pub fn loss_private(
    primary_logits: &Tensor,
    primary_label: usize,
    private_logits: &Tensor,
    private_label: usize,
    n: &Tensor,
    alpha: f64,
    gamma: f64,
) -> Result<f64> {
    Ok(cross_entropy(primary_logits, primary_label)?
        - gamma * cross_entropy(private_logits, private_label)?
        - alpha * n.l1_norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shape: &[usize]) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Descends `grad` by one bias-corrected Adam step.
    pub fn update(&mut self, param: &mut Tensor, grad: &Tensor, lr: f64) -> Result<()> {
        param.expect_shape(self.m.shape(), "adam parameter")?;
        grad.expect_shape(self.m.shape(), "adam gradient")?;
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (m, v) = (self.m.data_mut(), self.v.data_mut());
        for (i, (p, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
            let g = g as f64;
            let mi = self.beta1 * m[i] as f64 + (1.0 - self.beta1) * g;
            let vi = self.beta2 * v[i] as f64 + (1.0 - self.beta2) * g * g;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + self.eps);
            *p = (*p as f64 - update) as f32;
        }
        Ok(())
    }
}

/// Frozen classifier for the private task, fed the noisy activation.
#[derive(Debug, Clone)]
pub struct PrivateHead {
    network: Network,
}

impl PrivateHead {
    pub fn new(spec: NetworkSpec, weights: &Weights) -> Result<Self> {
        Ok(PrivateHead {
            network: Network::new(spec, weights)?,
        })
    }

    pub fn load(spec_path: impl AsRef<Path>, weights_path: impl AsRef<Path>) -> Result<Self> {
        Ok(PrivateHead {
            network: Network::load(spec_path, weights_path)?,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn classes(&self) -> usize {
        self.network.classes()
    }

    /// Fails unless the head consumes the split's activation shape.
    pub fn check_split(&self, split: &Split) -> Result<()> {
        if self.network.input_shape() != split.activation_shape() {
            return Err(Error::shape(
                "private head input",
                split.activation_shape(),
                self.network.input_shape(),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, noisy: &Tensor) -> Result<Tensor> {
        self.network.forward(noisy)
    }
}

/// Edge outputs for a fixed dataset. The edge is frozen, so they are
/// computed once.
#[derive(Debug, Clone)]
pub struct EdgeCache {
    pub activations: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub private_labels: Vec<Option<usize>>,
    /// `E[a²]` over every element of every cached activation.
    pub signal_power: f64,
}

impl EdgeCache {
    pub fn build(split: &Split, examples: &[Example]) -> Result<Self> {
        let activations = examples
            .iter()
            .map(|e| split.run_edge(&e.input))
            .collect::<Result<Vec<_>>>()?;
        let elements: usize = activations.iter().map(Tensor::len).sum();
        let signal_power = if elements == 0 {
            0.0
        } else {
            activations
                .iter()
                .map(|a| a.mean_square() * a.len() as f64)
                .sum::<f64>()
                / elements as f64
        };
        Ok(EdgeCache {
            activations,
            labels: examples.iter().map(|e| e.label).collect(),
            private_labels: examples.iter().map(|e| e.private_label).collect(),
            signal_power,
        })
    }

    pub fn len(&self) -> usize {
        self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }

    /// Top-1 accuracy of the cloud on `a + noise`.
    pub fn accuracy(&self, split: &Split, noise: &Tensor) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("accuracy over an empty set".into()));
        }
        let mut correct = 0usize;
        for (a, &label) in self.activations.iter().zip(&self.labels) {
            if split.run_cloud(&a.add(noise)?)?.argmax() == label {
                correct += 1;
            }
        }
        Ok(correct as f64 / self.len() as f64)
    }
}

/// Top-1 accuracy on `holdout` with `noise` added at the cut.
pub fn holdout_accuracy(split: &Split, noise: &Tensor, holdout: &[Example]) -> Result<f64> {
    if holdout.is_empty() {
        return Err(Error::InvalidArgument("holdout set is empty".into()));
    }
    EdgeCache::build(split, holdout)?.accuracy(split, noise)
}

/// `σ²(n) / signal_power`.
pub fn inverse_snr(noise: &Tensor, signal_power: f64) -> f64 {
    noise.variance() / signal_power
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    /// Batch-mean loss including the noise-magnitude term.
    pub loss: f64,
    pub inv_snr: f64,
    pub batch_accuracy: f64,
}

/// One Adam step on `noise` from the listed cached examples.
fn step_cached(
    split: &Split,
    head: Option<&PrivateHead>,
    cache: &EdgeCache,
    batch: &[usize],
    noise: &mut Tensor,
    adam: &mut AdamState,
    alpha: f64,
    cfg: &TrainConfig,
) -> Result<StepMetrics> {
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0f64; noise.len()];
    let mut ce_sum = 0.0;
    let mut correct = 0usize;
    let use_private = cfg.gamma > 0.0 && head.is_some();
    for &i in batch {
        let a = &cache.activations[i];
        let label = cache.labels[i];
        let g = grad_wrt_noise(split.cloud_layers(), a, noise, |logits| {
            let (ce, d) = cross_entropy_with_grad(logits, label)?;
            Ok((ce * scale, d.map(|v| (v as f64 * scale) as f32)))
        })?;
        ce_sum += g.loss;
        correct += usize::from(g.logits.argmax() == label);
        for (acc, &v) in grad.iter_mut().zip(g.grad.data()) {
            *acc += v as f64;
        }
        if use_private {
            let head = head.expect("checked");
            let private = cache.private_labels[i].ok_or_else(|| {
                Error::InvalidArgument(format!("example {i} has no private label"))
            })?;
            let w = cfg.gamma * scale;
            let g = grad_wrt_noise(head.network.layers(), a, noise, |logits| {
                let (ce, d) = cross_entropy_with_grad(logits, private)?;
                Ok((-w * ce, d.map(|v| (-w * v as f64) as f32)))
            })?;
            ce_sum += g.loss;
            for (acc, &v) in grad.iter_mut().zip(g.grad.data()) {
                *acc += v as f64;
            }
        }
    }
    let l1 = noise.l1_norm();
    let loss = ce_sum - alpha * l1;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "training loss {loss} (cross-entropy {ce_sum}, noise L1 {l1})"
        )));
    }
    let grad: Vec<f32> = grad
        .iter()
        .zip(noise.data())
        .map(|(&g, &n)| (g - alpha * sign(n)) as f32)
        .collect();
    let grad = Tensor::new(noise.shape().to_vec(), grad)?;
    adam.update(noise, &grad, cfg.learning_rate)?;
    noise.ensure_finite("noise after update")?;
    Ok(StepMetrics {
        loss,
        inv_snr: inverse_snr(noise, cache.signal_power),
        batch_accuracy: correct as f64 / batch.len() as f64,
    })
}

fn sign(v: f32) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One Adam step on `noise` for `batch`. The network is only read; the
/// returned 1/SNR is relative to the batch's activation power.
pub fn train_step(
    split: &Split,
    noise: &mut Tensor,
    batch: &[Example],
    alpha: f64,
    cfg: &TrainConfig,
    adam: &mut AdamState,
    head: Option<&PrivateHead>,
) -> Result<StepMetrics> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    noise.expect_shape(split.activation_shape(), "noise tensor")?;
    let cache = EdgeCache::build(split, batch)?;
    let idx: Vec<usize> = (0..batch.len()).collect();
    step_cached(split, head, &cache, &idx, noise, adam, alpha, cfg)
}

/// One noise-learning round: a noise tensor, its optimizer state and a
/// shuffled stream over the training cache.
pub struct Round<'a> {
    split: &'a Split,
    head: Option<&'a PrivateHead>,
    cache: &'a EdgeCache,
    cfg: &'a TrainConfig,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    pub noise: Tensor,
    pub adam: AdamState,
    /// Steps taken in this round.
    pub iteration: usize,
    pub seed: u64,
}

impl<'a> Round<'a> {
    pub fn new(
        split: &'a Split,
        head: Option<&'a PrivateHead>,
        cache: &'a EdgeCache,
        cfg: &'a TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        if cache.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = init_noise(split.activation_shape(), cfg.init_scale, rng.next_u64())?;
        let mut order: Vec<usize> = (0..cache.len()).collect();
        order.shuffle(&mut rng);
        Ok(Round {
            split,
            head,
            cache,
            cfg,
            rng,
            order,
            cursor: 0,
            adam: AdamState::new(noise.shape()),
            noise,
            iteration: 0,
            seed,
        })
    }

    pub fn inv_snr(&self) -> f64 {
        inverse_snr(&self.noise, self.cache.signal_power)
    }

    pub fn step(&mut self) -> Result<StepMetrics> {
        let mut batch = Vec::with_capacity(self.cfg.batch_size);
        while batch.len() < self.cfg.batch_size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        let alpha = alpha_at(self.iteration, self.cfg);
        let m = step_cached(
            self.split,
            self.head,
            self.cache,
            &batch,
            &mut self.noise,
            &mut self.adam,
            alpha,
            self.cfg,
        )
        .map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!(
                "{msg} at round seed {} iteration {}",
                self.seed, self.iteration
            )),
            other => other,
        })?;
        self.iteration += 1;
        Ok(m)
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub iteration: usize,
    pub round: usize,
    pub round_iteration: usize,
    pub loss: f64,
    pub inv_snr: f64,
    pub holdout_accuracy: Option<f64>,
}

/// A noise tensor that passed the accuracy gate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateEvent {
    pub round: usize,
    pub round_seed: u64,
    pub round_iteration: usize,
    pub holdout_accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub inv_snr: f64,
    pub sse: f64,
    /// Whether the Laplace fit passed the SSE gate.
    pub fit_ok: bool,
    /// Whether this checkpoint became a collection entry.
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub collection: DistributionCollection,
    pub clean_accuracy: f64,
    pub metrics: Vec<MetricRow>,
    pub candidates: Vec<CandidateEvent>,
    pub iterations: usize,
    pub samples_seen: usize,
    pub train_size: usize,
}

impl TrainOutcome {
    pub fn epochs(&self) -> f64 {
        self.samples_seen as f64 / self.train_size as f64
    }

    pub fn write_metrics_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(path, &self.metrics)
    }

    pub fn write_candidates_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(path, &self.candidates)
    }
}

pub(crate) fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Splits off the trailing holdout slice.
pub fn holdout_split(data: Dataset, fraction: f64) -> Result<(Dataset, Dataset)> {
    let holdout = ((data.len() as f64) * fraction).ceil() as usize;
    if holdout == 0 || holdout >= data.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot hold out {fraction} of {} examples",
            data.len()
        )));
    }
    let at = data.len() - holdout;
    Ok(data.split_at(at))
}

/// Learns noise tensors until `cfg.target_collection_size` have passed both
/// the accuracy gate and the Laplace fit gate.
///
/// Each round starts from fresh Laplace noise. Holdout accuracy is checked
/// every `eval_interval` steps; a check within `epsilon` of the clean
/// accuracy yields a candidate, which is then fitted and checked against the
/// SSE gate. [`Selection`] decides which passing candidate of a round is
/// collected. A round without one is discarded.
pub fn train_noise(
    split: &Split,
    data: Dataset,
    cfg: &TrainConfig,
    head: Option<&PrivateHead>,
) -> Result<TrainOutcome> {
    train_noise_with(split, data, cfg, head, |_| {})
}

/// [`train_noise`] with a callback invoked on every candidate.
pub fn train_noise_with(
    split: &Split,
    data: Dataset,
    cfg: &TrainConfig,
    head: Option<&PrivateHead>,
    mut on_candidate: impl FnMut(&CandidateEvent),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.gamma > 0.0 {
        match head {
            Some(h) => h.check_split(split)?,
            None => {
                return Err(Error::InvalidArgument(
                    "gamma > 0 requires a private head".into(),
                ))
            }
        }
    }
    let (train, holdout) = holdout_split(data, cfg.holdout_fraction)?;
    let train_cache = EdgeCache::build(split, &train.examples)?;
    let holdout_cache = EdgeCache::build(split, &holdout.examples)?;
    let zero = Tensor::zeros(split.activation_shape());
    let clean_accuracy = holdout_cache.accuracy(split, &zero)?;
    let required = clean_accuracy - cfg.epsilon;

    let mut collection = DistributionCollection::for_split(split);
    let collector = cfg.collector();
    let mut metrics = Vec::new();
    let mut candidates = Vec::new();
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut total = 0usize;
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut round_index = 0usize;
    let exhausted = |total: usize, accepted: usize, best_accuracy: f64| Error::BudgetExhausted {
        iterations: total,
        accepted,
        target: cfg.target_collection_size,
        best_accuracy,
        required_accuracy: required,
    };

    while collection.len() < cfg.target_collection_size {
        let mut round = Round::new(split, head, &train_cache, cfg, seeds.next_u64())?;
        metrics.push(MetricRow {
            iteration: total,
            round: round_index,
            round_iteration: 0,
            loss: f64::NAN,
            inv_snr: round.inv_snr(),
            holdout_accuracy: None,
        });
        let mut events: Vec<CandidateEvent> = Vec::new();
        // Best passing checkpoint so far: (event index, noise).
        let mut best: Option<(usize, Tensor)> = None;
        let mut done = false;
        while !done {
            if cfg.round_iterations > 0 && round.iteration >= cfg.round_iterations {
                break;
            }
            if total >= cfg.max_iterations {
                return Err(exhausted(total, collection.len(), best_accuracy));
            }
            let m = round.step()?;
            total += 1;
            if round.iteration % cfg.eval_interval != 0 {
                continue;
            }
            let acc = holdout_cache.accuracy(split, &round.noise)?;
            best_accuracy = best_accuracy.max(acc);
            metrics.push(MetricRow {
                iteration: total,
                round: round_index,
                round_iteration: round.iteration,
                loss: m.loss,
                inv_snr: m.inv_snr,
                holdout_accuracy: Some(acc),
            });
            if acc < required {
                continue;
            }
            let params = fit_laplace(&round.noise)?;
            let sse = histogram_sse(&round.noise, &params, collector.bins)?;
            let (ci_low, ci_high) = wilson_interval(acc, holdout_cache.len());
            let fit_ok = sse <= collector.sse_threshold;
            events.push(CandidateEvent {
                round: round_index,
                round_seed: round.seed,
                round_iteration: round.iteration,
                holdout_accuracy: acc,
                ci_low,
                ci_high,
                inv_snr: m.inv_snr,
                sse,
                fit_ok,
                accepted: false,
            });
            if !fit_ok {
                continue;
            }
            let idx = events.len() - 1;
            match cfg.selection {
                Selection::First => {
                    best = Some((idx, round.noise.clone()));
                    done = true;
                }
                Selection::Best => {
                    if best
                        .as_ref()
                        .is_none_or(|(b, _)| m.inv_snr > events[*b].inv_snr)
                    {
                        best = Some((idx, round.noise.clone()));
                    }
                }
            }
        }
        if let Some((idx, noise)) = best {
            collection.try_collect(
                &noise,
                events[idx].holdout_accuracy,
                events[idx].round_seed,
                &collector,
            )?;
            events[idx].accepted = true;
        }
        for e in &events {
            on_candidate(e);
        }
        candidates.extend(events);
        round_index += 1;
    }

    Ok(TrainOutcome {
        collection,
        clean_accuracy,
        metrics,
        candidates,
        iterations: total,
        samples_seen: total * cfg.batch_size,
        train_size: train.len(),
    })
}

/// Mean of `f(noise)` where the noise for each example is drawn fresh.
pub fn noisy_accuracy(
    split: &Split,
    cache: &EdgeCache,
    mut draw: impl FnMut() -> Result<Tensor>,
) -> Result<f64> {
    if cache.is_empty() {
        return Err(Error::InvalidArgument("accuracy over an empty set".into()));
    }
    let mut correct = 0usize;
    for (a, &label) in cache.activations.iter().zip(&cache.labels) {
        let noisy = a.add(&draw()?)?;
        if forward(split.cloud_layers(), &noisy)?.argmax() == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / cache.len() as f64)
}
