//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use splitnoise::fixture::init_weights;
use splitnoise::network::{valid_cuts, Network, NetworkSpec, Split};
use splitnoise::tensor_core::{Layer, LayerKind, Tensor};

pub fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

pub fn lenet() -> Arc<Network> {
    let a = assets();
    Arc::new(Network::load(a.join("lenet5.toml"), a.join("lenet5.weights")).unwrap())
}

/// Dense f64 array with a shape, row-major.
#[derive(Debug, Clone)]
pub struct Arr {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Arr {
    pub fn from_tensor(t: &Tensor) -> Self {
        Arr {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }
}

fn f64s(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// One layer evaluated in f64 with naive loops.
pub fn ref_layer(layer: &Layer, x: &Arr) -> Arr {
    match *layer.kind() {
        LayerKind::Conv2d {
            in_channels: c,
            out_channels: o,
            kernel: k,
            stride: s,
            padding: p,
        } => {
            let (h, w) = (x.shape[1], x.shape[2]);
            let oh = (h + 2 * p - k) / s + 1;
            let ow = (w + 2 * p - k) / s + 1;
            let params = layer.params().unwrap();
            let wt = f64s(&params.weight);
            let b = f64s(&params.bias);
            let mut out = vec![0.0; o * oh * ow];
            for oc in 0..o {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = b[oc];
                        for ic in 0..c {
                            for di in 0..k {
                                for dj in 0..k {
                                    let r = (i * s + di) as isize - p as isize;
                                    let q = (j * s + dj) as isize - p as isize;
                                    if r < 0 || q < 0 || r >= h as isize || q >= w as isize {
                                        continue;
                                    }
                                    let xv = x.data[ic * h * w + r as usize * w + q as usize];
                                    acc += wt[((oc * c + ic) * k + di) * k + dj] * xv;
                                }
                            }
                        }
                        out[(oc * oh + i) * ow + j] = acc;
                    }
                }
            }
            Arr {
                shape: vec![o, oh, ow],
                data: out,
            }
        }
        LayerKind::Fc {
            in_features,
            out_features,
        } => {
            let params = layer.params().unwrap();
            let wt = f64s(&params.weight);
            let b = f64s(&params.bias);
            let data = (0..out_features)
                .map(|r| {
                    b[r] + (0..in_features)
                        .map(|c| wt[r * in_features + c] * x.data[c])
                        .sum::<f64>()
                })
                .collect();
            Arr {
                shape: vec![out_features],
                data,
            }
        }
        LayerKind::Relu => Arr {
            shape: x.shape.clone(),
            data: x.data.iter().map(|&v| v.max(0.0)).collect(),
        },
        LayerKind::MaxPool2d {
            kernel: k,
            stride: s,
        } => {
            let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
            let oh = (h - k) / s + 1;
            let ow = (w - k) / s + 1;
            let mut out = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut m = f64::NEG_INFINITY;
                        for di in 0..k {
                            for dj in 0..k {
                                m = m.max(x.data[ch * h * w + (i * s + di) * w + j * s + dj]);
                            }
                        }
                        out.push(m);
                    }
                }
            }
            Arr {
                shape: vec![c, oh, ow],
                data: out,
            }
        }
        LayerKind::Flatten => Arr {
            shape: vec![x.data.len()],
            data: x.data.clone(),
        },
    }
}

pub fn ref_forward(layers: &[Layer], x: &Arr) -> Arr {
    layers.iter().fold(x.clone(), |acc, l| ref_layer(l, &acc))
}

/// Forward pass that also records the active branch of every ReLU and the
/// winning index of every pooling window.
pub fn ref_forward_pattern(layers: &[Layer], x: &Arr) -> (Arr, Vec<usize>) {
    let mut pattern = Vec::new();
    let mut cur = x.clone();
    for l in layers {
        match *l.kind() {
            LayerKind::Relu => pattern.extend(cur.data.iter().map(|&v| usize::from(v > 0.0))),
            LayerKind::MaxPool2d {
                kernel: k,
                stride: s,
            } => {
                let (c, h, w) = (cur.shape[0], cur.shape[1], cur.shape[2]);
                for ch in 0..c {
                    for i in 0..(h - k) / s + 1 {
                        for j in 0..(w - k) / s + 1 {
                            let mut best = (f64::NEG_INFINITY, 0);
                            for di in 0..k {
                                for dj in 0..k {
                                    let idx = ch * h * w + (i * s + di) * w + j * s + dj;
                                    if cur.data[idx] > best.0 {
                                        best = (cur.data[idx], idx);
                                    }
                                }
                            }
                            pattern.push(best.1);
                        }
                    }
                }
            }
            _ => {}
        }
        cur = ref_layer(l, &cur);
    }
    (cur, pattern)
}

/// Central differences of the f64 cross-entropy with respect to `n`, where
/// the cloud input is `a + n`. Elements whose ±h perturbations land on
/// different ReLU/pool branches are reported as `None`.
pub fn fd_noise_gradient(
    cloud: &[Layer],
    a: &Tensor,
    n: &Tensor,
    label: usize,
    h: f64,
) -> Vec<Option<f64>> {
    let base: Vec<f64> = a
        .data()
        .iter()
        .zip(n.data())
        .map(|(&x, &y)| x as f64 + y as f64)
        .collect();
    let shape = a.shape().to_vec();
    let eval = |delta: f64, i: usize| {
        let mut d = base.clone();
        d[i] += delta;
        let (out, pattern) = ref_forward_pattern(
            cloud,
            &Arr {
                shape: shape.clone(),
                data: d,
            },
        );
        (ref_cross_entropy(&out.data, label), pattern)
    };
    (0..base.len())
        .map(|i| {
            let (lp, pp) = eval(h, i);
            let (lm, pm) = eval(-h, i);
            (pp == pm).then(|| (lp - lm) / (2.0 * h))
        })
        .collect()
}

/// Cross-entropy in f64 from the log-sum-exp definition.
pub fn ref_cross_entropy(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}

pub fn random_tensor(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (scale * z) as f32
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// A random small conv/fc network as TOML, with at least one valid cut.
pub fn random_spec_toml(rng: &mut impl Rng) -> String {
    let channels = rng.random_range(1..=2);
    let side = rng.random_range(6..=9);
    let classes = rng.random_range(2..=4);
    let mut s = format!(
        "name = \"random\"\ninput_shape = [{channels}, {side}, {side}]\nclasses = {classes}\n"
    );
    let mut layer = |body: String| s.push_str(&format!("\n[[layer]]\n{body}\n"));
    let k = rng.random_range(2..=3);
    let padding = rng.random_range(0..=1);
    layer(format!(
        "kind = \"conv2d\"\nout_channels = {}\nkernel = {k}\npadding = {padding}",
        rng.random_range(1..=3)
    ));
    layer("kind = \"relu\"".into());
    if rng.random_bool(0.5) {
        layer("kind = \"maxpool2d\"\nkernel = 2".into());
    }
    if rng.random_bool(0.5) {
        layer(format!(
            "kind = \"conv2d\"\nout_channels = {}\nkernel = 2",
            rng.random_range(1..=3)
        ));
        layer("kind = \"relu\"".into());
    }
    layer("kind = \"flatten\"".into());
    if rng.random_bool(0.6) {
        layer(format!(
            "kind = \"fc\"\nout_features = {}",
            rng.random_range(3..=8)
        ));
        layer("kind = \"relu\"".into());
    }
    layer(format!("kind = \"fc\"\nout_features = {classes}"));
    s
}

/// Random network, random valid cut, random initial weights.
pub fn random_split(seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = NetworkSpec::from_toml_str(&random_spec_toml(&mut rng)).unwrap();
    let weights = init_weights(&spec, seed).unwrap();
    let cuts = valid_cuts(&spec);
    let cut = cuts[rng.random_range(0..cuts.len())];
    Split::new(Arc::new(Network::new(spec, &weights).unwrap()), cut).unwrap()
}

/// `n` pairs from a standard bivariate Gaussian with correlation `rho`.
pub fn gaussian_pairs(rho: f64, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (1.0 - rho * rho).sqrt();
    (0..n)
        .map(|_| {
            let u: f64 = StandardNormal.sample(&mut rng);
            let v: f64 = StandardNormal.sample(&mut rng);
            (u, rho * u + c * v)
        })
        .unzip()
}

/// Closed-form mutual information of a bivariate Gaussian, in bits.
pub fn gaussian_mi_bits(rho: f64) -> f64 {
    -0.5 * (1.0 - rho * rho).log2()
}

/// Median and mean absolute deviation about it, computed by full sort.
pub fn median_mad(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let med = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    let mad = v.iter().map(|x| (x - med).abs()).sum::<f64>() / n as f64;
    (med, mad)
}

/// Laplace draws by inverting the statrs CDF at uniform points.
pub fn laplace_draws(mu: f64, b: f64, n: usize, seed: u64) -> Vec<f32> {
    use statrs::distribution::{ContinuousCDF, Laplace};
    let d = Laplace::new(mu, b).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| d.inverse_cdf(rng.random_range(1e-12..1.0 - 1e-12)) as f32)
        .collect()
}

/// Everything an experiment config points at, loaded.
pub struct Loaded {
    pub cfg: splitnoise::experiment::ExperimentConfig,
    pub split: Split,
    pub train: splitnoise::data::Dataset,
    pub eval: splitnoise::data::Dataset,
    pub head: Option<splitnoise::learner::PrivateHead>,
}

pub fn load_experiment(name: &str) -> Loaded {
    use splitnoise::data::Dataset;
    use splitnoise::experiment::ExperimentConfig;
    use splitnoise::learner::PrivateHead;
    let cfg = ExperimentConfig::load(assets().join("experiments").join(name)).unwrap();
    let p = &cfg.paths;
    let net = Network::load(p.spec.as_ref().unwrap(), p.weights.as_ref().unwrap()).unwrap();
    let split = Split::new(Arc::new(net), cfg.cut.unwrap()).unwrap();
    let mut data =
        Dataset::load_idx(p.images.as_ref().unwrap(), p.labels.as_ref().unwrap()).unwrap();
    if let Some(private) = &p.private_labels {
        data = data.with_private_labels(private).unwrap();
    }
    let head = match (&p.head_spec, &p.head_weights) {
        (Some(s), Some(w)) => Some(PrivateHead::load(s, w).unwrap()),
        _ => None,
    };
    let (train, eval) = cfg.split_data(&data).unwrap();
    Loaded {
        cfg,
        split,
        train,
        eval,
        head,
    }
}
