//! Classifier training used to produce bundled weights and test fixtures.
//! Noise learning never calls into this module.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::data::{synthetic_dual_label, Dataset, Example};
use crate::error::{Error, Result};
use crate::network::{Network, NetworkSpec, Split, Weights};
use crate::tensor_core::{cross_entropy_with_grad, LayerKind, Tape, Tensor};

pub const LENET5_TOML: &str = include_str!("../../../assets/lenet5.toml");
pub const DUAL_NET_TOML: &str = include_str!("../../../assets/dual/net.toml");
pub const DUAL_HEAD_TOML: &str = include_str!("../../../assets/dual/head.toml");

pub fn lenet5_spec() -> NetworkSpec {
    NetworkSpec::from_toml_str(LENET5_TOML).expect("bundled topology parses")
}

/// Uniform He-style initialization with zero biases.
pub fn init_weights(spec: &NetworkSpec, seed: u64) -> Result<Weights> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Weights::new();
    for layer in &spec.layers {
        let fan_in = match layer.kind {
            LayerKind::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            LayerKind::Fc { in_features, .. } => in_features,
            _ => continue,
        };
        let limit = (6.0 / fan_in as f64).sqrt();
        let shapes = layer.param_shapes();
        let (wname, wshape) = &shapes[0];
        let (bname, bshape) = &shapes[1];
        let n: usize = wshape.iter().product();
        let data = (0..n)
            .map(|_| rng.random_range(-limit..limit) as f32)
            .collect();
        w.insert(wname.clone(), Tensor::new(wshape.clone(), data)?);
        w.insert(bname.clone(), Tensor::zeros(bshape));
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            epochs: 4,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 0,
        }
    }
}

/// Mini-batch SGD with momentum on every parameter of `net`. Returns the
/// mean training loss of each epoch.
pub fn train_classifier(net: &mut Network, data: &[Example], cfg: &SgdConfig) -> Result<Vec<f64>> {
    if data.is_empty() || cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("empty training set or batch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity: Vec<Option<(Vec<f32>, Vec<f32>)>> = net
        .layers()
        .iter()
        .map(|l| {
            l.params()
                .map(|p| (vec![0.0; p.weight.len()], vec![0.0; p.bias.len()]))
        })
        .collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let scale = 1.0 / chunk.len() as f32;
            let mut grads: Vec<Option<(Vec<f32>, Vec<f32>)>> = velocity
                .iter()
                .map(|v| {
                    v.as_ref()
                        .map(|(w, b)| (vec![0.0; w.len()], vec![0.0; b.len()]))
                })
                .collect();
            for &i in chunk {
                let ex = &data[i];
                let mut tape = Tape::new();
                let x = tape.leaf(ex.input.clone());
                let out = tape.layers(net.layers(), x)?;
                let (loss, seed) = cross_entropy_with_grad(tape.value(out), ex.label)?;
                epoch_loss += loss;
                let g = tape.backward(out, seed, true)?;
                for (li, slot) in grads.iter_mut().enumerate() {
                    if let (Some((gw, gb)), Some(p)) = (slot.as_mut(), g.params(li + 1)) {
                        for (a, &v) in gw.iter_mut().zip(p.weight.data()) {
                            *a += v * scale;
                        }
                        for (a, &v) in gb.iter_mut().zip(p.bias.data()) {
                            *a += v * scale;
                        }
                    }
                }
            }
            let (lr, mu) = (cfg.learning_rate as f32, cfg.momentum as f32);
            for ((layer, vel), grad) in net.layers_mut().iter_mut().zip(&mut velocity).zip(&grads) {
                let (Some(p), Some((vw, vb)), Some((gw, gb))) =
                    (layer.params_mut(), vel.as_mut(), grad.as_ref())
                else {
                    continue;
                };
                for ((w, v), &g) in p.weight.data_mut().iter_mut().zip(vw.iter_mut()).zip(gw) {
                    *v = mu * *v + g;
                    *w -= lr * *v;
                }
                for ((b, v), &g) in p.bias.data_mut().iter_mut().zip(vb.iter_mut()).zip(gb) {
                    *v = mu * *v + g;
                    *b -= lr * *v;
                }
            }
        }
        history.push(epoch_loss / data.len() as f64);
    }
    for layer in net.layers() {
        if let Some(p) = layer.params() {
            p.weight.ensure_finite(layer.name())?;
            p.bias.ensure_finite(layer.name())?;
        }
    }
    net.refresh_hash()?;
    Ok(history)
}

/// Examples `[0, LENET5_TRAIN)` of the bundled MNIST subset train the
/// classifier; the next 800 are never seen by it and serve as the noise
/// learner's holdout, and `[8000, 10000)` is the test split.
pub const LENET5_TRAIN: usize = 7200;

/// The recipe behind the bundled LeNet-5 weights.
pub fn train_lenet5(train: &[Example], seed: u64, epochs: usize) -> Result<Network> {
    let spec = lenet5_spec();
    let weights = init_weights(&spec, seed)?;
    let mut net = Network::new(spec, &weights)?;
    for epoch in 0..epochs {
        let cfg = SgdConfig {
            epochs: 1,
            batch_size: 32,
            learning_rate: 0.05 * 0.6f64.powi(epoch as i32),
            momentum: 0.9,
            seed: seed.wrapping_add(epoch as u64),
        };
        train_classifier(&mut net, train, &cfg)?;
    }
    Ok(net)
}

pub fn accuracy(net: &Network, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("accuracy over an empty set".into()));
    }
    let mut correct = 0usize;
    for ex in data {
        correct += usize::from(net.forward(&ex.input)?.argmax() == ex.label);
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Examples whose input is the given edge activation and whose label is the
/// private label, for fitting a private head.
pub fn private_head_examples(
    edge: impl Fn(&Tensor) -> Result<Tensor>,
    data: &Dataset,
) -> Result<Vec<Example>> {
    data.examples
        .iter()
        .map(|e| {
            let label = e
                .private_label
                .ok_or_else(|| Error::InvalidArgument("example has no private label".into()))?;
            Ok(Example {
                input: edge(&e.input)?,
                label,
                private_label: None,
            })
        })
        .collect()
}

/// Cut of the dual-label fixture network.
pub const DUAL_CUT: usize = 4;
pub const DUAL_EXAMPLES: usize = 1200;
pub const DUAL_TRAIN: usize = 1000;

/// Writes the dual-label fixture into `dir`: topologies, IDX data with
/// private labels, trained classifier and private-head weights.
///
/// The classifier and the head are trained on the quantized data read back
/// from disk, so both see exactly what the CLI later loads.
pub fn write_dual_fixture(dir: &Path, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("net.toml"), DUAL_NET_TOML)?;
    fs::write(dir.join("head.toml"), DUAL_HEAD_TOML)?;
    let images = dir.join("images-idx3-ubyte.gz");
    let labels = dir.join("labels-idx1-ubyte.gz");
    let private = dir.join("private-labels-idx1-ubyte.gz");
    synthetic_dual_label(DUAL_EXAMPLES, seed).save_idx(&images, &labels, Some(&private))?;
    let data = Dataset::load_idx(&images, &labels)?.with_private_labels(&private)?;
    let train = &data.examples[..DUAL_TRAIN];

    let spec = NetworkSpec::from_toml_str(DUAL_NET_TOML)?;
    let mut net = Network::new(spec.clone(), &init_weights(&spec, seed)?)?;
    let cfg = SgdConfig {
        epochs: 6,
        seed,
        ..Default::default()
    };
    train_classifier(&mut net, train, &cfg)?;
    net.weights().save(dir.join("net.weights"))?;

    let split = Split::new(Arc::new(net), DUAL_CUT)?;
    let head_examples = private_head_examples(
        |x| split.run_edge(x),
        &Dataset {
            examples: train.to_vec(),
            classes: data.classes,
            private_classes: data.private_classes,
        },
    )?;
    let head_spec = NetworkSpec::from_toml_str(DUAL_HEAD_TOML)?;
    let mut head = Network::new(head_spec.clone(), &init_weights(&head_spec, seed + 1)?)?;
    let cfg = SgdConfig {
        epochs: 10,
        learning_rate: 0.02,
        seed: seed + 1,
        ..Default::default()
    };
    train_classifier(&mut head, &head_examples, &cfg)?;
    head.weights().save(dir.join("head.weights"))?;
    Ok(())
}
