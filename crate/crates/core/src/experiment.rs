//! End-to-end privacy evaluation and the trade-off sweeps built on it.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Example};
use crate::error::{Error, Result};
use crate::learner::{
    noisy_accuracy, train_noise, EdgeCache, PrivateHead, TrainConfig, TrainOutcome,
};
use crate::metrics::{estimate_mi_with, BlockNorm, SampleMatrix};
use crate::network::{valid_cuts, Network, Split};
use crate::planner::DeviceProfile;
use crate::runtime::NoiseSource;
use crate::tensor_core::Tensor;

/// Settings of the mutual information estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiConfig {
    /// Leading evaluation examples fed to the estimator.
    pub samples: usize,
    pub k: usize,
    pub norm: BlockNorm,
    /// Seed of the sampler used during evaluation.
    pub seed: u64,
}

impl Default for MiConfig {
    fn default() -> Self {
        MiConfig {
            samples: 1000,
            k: 3,
            norm: BlockNorm::Euclidean,
            seed: 1,
        }
    }
}

/// Clean and noisy information leakage and accuracy on one evaluation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacyReport {
    pub clean_mi_bits: f64,
    pub noisy_mi_bits: f64,
    /// `1 - noisy / clean`.
    pub reduction: f64,
    pub clean_accuracy: f64,
    pub noisy_accuracy: f64,
    pub accuracy_loss: f64,
    pub mi_samples: usize,
    pub eval_size: usize,
}

/// Inputs and clean activations shared by every evaluation of one split.
pub struct Baseline {
    cache: EdgeCache,
    inputs: SampleMatrix,
    clean_mi_bits: f64,
    clean_accuracy: f64,
    mi: MiConfig,
}

impl Baseline {
    pub fn new(split: &Split, eval: &[Example], mi: &MiConfig) -> Result<Self> {
        if mi.samples < mi.k + 1 || mi.samples > eval.len() {
            return Err(Error::InvalidArgument(format!(
                "MI sample count {} must be in {}..={}",
                mi.samples,
                mi.k + 1,
                eval.len()
            )));
        }
        let cache = EdgeCache::build(split, eval)?;
        let inputs = SampleMatrix::from_tensors(eval[..mi.samples].iter().map(|e| &e.input))?;
        let clean = SampleMatrix::from_tensors(cache.activations[..mi.samples].iter())?;
        let clean_mi_bits = estimate_mi_with(&inputs, &clean, mi.k, mi.norm)?.bits;
        let zero = Tensor::zeros(split.activation_shape());
        let clean_accuracy = cache.accuracy(split, &zero)?;
        Ok(Baseline {
            cache,
            inputs,
            clean_mi_bits,
            clean_accuracy,
            mi: mi.clone(),
        })
    }

    pub fn clean_mi_bits(&self) -> f64 {
        self.clean_mi_bits
    }

    pub fn clean_accuracy(&self) -> f64 {
        self.clean_accuracy
    }

    /// Noisy accuracy over the full set, then MI over the leading samples,
    /// drawing fresh noise for every example.
    pub fn evaluate(&self, split: &Split, noise: &mut NoiseSource) -> Result<PrivacyReport> {
        let mut draw = |a: &Tensor| noise.perturb(a);
        let zero = Tensor::zeros(split.activation_shape());
        let noisy_accuracy = noisy_accuracy(split, &self.cache, || draw(&zero))?;
        let noisy: Vec<Tensor> = self.cache.activations[..self.mi.samples]
            .iter()
            .map(&mut draw)
            .collect::<Result<_>>()?;
        let noisy = SampleMatrix::from_tensors(noisy.iter())?;
        let noisy_mi_bits = estimate_mi_with(&self.inputs, &noisy, self.mi.k, self.mi.norm)?.bits;
        let reduction = if self.clean_mi_bits > 0.0 {
            1.0 - noisy_mi_bits / self.clean_mi_bits
        } else {
            0.0
        };
        Ok(PrivacyReport {
            clean_mi_bits: self.clean_mi_bits,
            noisy_mi_bits,
            reduction,
            clean_accuracy: self.clean_accuracy,
            noisy_accuracy,
            accuracy_loss: self.clean_accuracy - noisy_accuracy,
            mi_samples: self.mi.samples,
            eval_size: self.cache.len(),
        })
    }
}

/// One-shot [`Baseline::new`] followed by [`Baseline::evaluate`].
pub fn evaluate_privacy(
    split: &Split,
    noise: &mut NoiseSource,
    eval: &[Example],
    mi: &MiConfig,
) -> Result<PrivacyReport> {
    Baseline::new(split, eval, mi)?.evaluate(split, noise)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub entries: usize,
    pub iterations: usize,
    pub epochs: f64,
    pub clean_mi_bits: f64,
    pub noisy_mi_bits: f64,
    pub reduction: f64,
    pub clean_accuracy: f64,
    pub noisy_accuracy: f64,
    pub accuracy_loss: f64,
}

fn epsilon_row(epsilon: f64, out: &TrainOutcome, r: &PrivacyReport) -> EpsilonRow {
    EpsilonRow {
        epsilon,
        entries: out.collection.len(),
        iterations: out.iterations,
        epochs: out.epochs(),
        clean_mi_bits: r.clean_mi_bits,
        noisy_mi_bits: r.noisy_mi_bits,
        reduction: r.reduction,
        clean_accuracy: r.clean_accuracy,
        noisy_accuracy: r.noisy_accuracy,
        accuracy_loss: r.accuracy_loss,
    }
}

/// Trains a collection per `epsilon` from the same seed and evaluates each
/// on `eval`.
pub fn sweep_epsilon(
    split: &Split,
    train: &Dataset,
    eval: &[Example],
    base: &TrainConfig,
    epsilons: &[f64],
    mi: &MiConfig,
    head: Option<&PrivateHead>,
) -> Result<Vec<EpsilonRow>> {
    if epsilons.is_empty() {
        return Err(Error::InvalidArgument("epsilon sweep is empty".into()));
    }
    let baseline = Baseline::new(split, eval, mi)?;
    let mut rows = Vec::with_capacity(epsilons.len());
    for &epsilon in epsilons {
        let cfg = TrainConfig {
            epsilon,
            ..base.clone()
        };
        let out = train_noise(split, train.clone(), &cfg, head)?;
        let mut noise = NoiseSource::sampled(out.collection.clone(), split, mi.seed)?;
        let report = baseline.evaluate(split, &mut noise)?;
        rows.push(epsilon_row(epsilon, &out, &report));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutRow {
    pub cut: usize,
    pub activation_len: usize,
    /// Edge compute in milliseconds, from the profile when one is given and
    /// measured otherwise.
    pub edge_ms: f64,
    pub entries: usize,
    pub reduction: f64,
    pub clean_mi_bits: f64,
    pub noisy_mi_bits: f64,
    pub accuracy_loss: f64,
}

/// Resolves the requested cuts against the topology. An empty request
/// selects every valid cut.
pub fn resolve_cuts(network: &Network, requested: &[usize]) -> Result<Vec<usize>> {
    let valid = valid_cuts(network.spec());
    if requested.is_empty() {
        return Ok(valid);
    }
    for &c in requested {
        if !valid.contains(&c) {
            return Err(Error::InvalidSplit(format!(
                "cut {c} is not valid; valid cuts are {valid:?}"
            )));
        }
    }
    Ok(requested.to_vec())
}

fn measured_edge_ms(split: &Split, eval: &[Example]) -> Result<f64> {
    let n = eval.len().min(200);
    let start = Instant::now();
    for e in &eval[..n] {
        split.run_edge(&e.input)?;
    }
    Ok(start.elapsed().as_secs_f64() * 1000.0 / n.max(1) as f64)
}

/// Trains and evaluates a collection at each cut with the same settings.
pub fn sweep_cuts(
    network: Arc<Network>,
    cuts: &[usize],
    train: &Dataset,
    eval: &[Example],
    cfg: &TrainConfig,
    mi: &MiConfig,
    profile: Option<&DeviceProfile>,
) -> Result<Vec<CutRow>> {
    let cuts = resolve_cuts(&network, cuts)?;
    let mut rows = Vec::with_capacity(cuts.len());
    for cut in cuts {
        let split = Split::new(Arc::clone(&network), cut)?;
        let edge_ms = match profile {
            Some(p) => p
                .edge_ms
                .get(..cut)
                .map(|v| v.iter().sum())
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("profile has fewer than {cut} layers"))
                })?,
            None => measured_edge_ms(&split, eval)?,
        };
        let out = train_noise(&split, train.clone(), cfg, None)?;
        let mut noise = NoiseSource::sampled(out.collection.clone(), &split, mi.seed)?;
        let r = evaluate_privacy(&split, &mut noise, eval, mi)?;
        rows.push(CutRow {
            cut,
            activation_len: split.activation_shape().iter().product(),
            edge_ms,
            entries: out.collection.len(),
            reduction: r.reduction,
            clean_mi_bits: r.clean_mi_bits,
            noisy_mi_bits: r.noisy_mi_bits,
            accuracy_loss: r.accuracy_loss,
        });
    }
    Ok(rows)
}

/// Paths of an experiment. Relative paths resolve against the directory of
/// the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub spec: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub private_labels: Option<PathBuf>,
    pub head_spec: Option<PathBuf>,
    pub head_weights: Option<PathBuf>,
    pub collection: Option<PathBuf>,
    pub profile: Option<PathBuf>,
}

/// Half-open example ranges of the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Noise training examples; the trailing holdout fraction gates
    /// acceptance.
    pub train: [usize; 2],
    pub eval: [usize; 2],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: [0, 8000],
            eval: [8000, 10000],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    /// Empty means every valid cut.
    pub cuts: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: PathsConfig,
    pub data: DataConfig,
    /// Cut position; the planner chooses one when absent.
    pub cut: Option<usize>,
    pub train: TrainConfig,
    pub mi: MiConfig,
    pub sweep: SweepConfig,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::format("experiment config", e.to_string()))?;
        if let Some(base) = base {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text, path.parent())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.spec,
            &mut p.weights,
            &mut p.images,
            &mut p.labels,
            &mut p.private_labels,
            &mut p.head_spec,
            &mut p.head_weights,
            &mut p.collection,
            &mut p.profile,
            &mut self.out_dir,
        ] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        for [lo, hi] in [self.data.train, self.data.eval] {
            if lo >= hi {
                return Err(Error::InvalidArgument(format!(
                    "example range [{lo}, {hi}) is empty"
                )));
            }
        }
        if self.sweep.epsilons.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::InvalidArgument(
                "sweep epsilons must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Slices the dataset into the training and evaluation ranges.
    pub fn split_data(&self, data: &Dataset) -> Result<(Dataset, Dataset)> {
        let slice = |[lo, hi]: [usize; 2]| -> Result<Dataset> {
            if hi > data.len() {
                return Err(Error::InvalidArgument(format!(
                    "range [{lo}, {hi}) exceeds the {} loaded examples",
                    data.len()
                )));
            }
            Ok(Dataset {
                examples: data.examples[lo..hi].to_vec(),
                classes: data.classes,
                private_classes: data.private_classes,
            })
        };
        Ok((slice(self.data.train)?, slice(self.data.eval)?))
    }
}
