use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Kind and hyperparameters of one sequential layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    /// Cross-correlation over a `[C, H, W]` input with a `[O, C, K, K]` kernel.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Affine map over a rank-1 input with a `[out, in]` weight.
    Fc {
        in_features: usize,
        out_features: usize,
    },
    Relu,
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    Flatten,
}

impl LayerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::Fc { .. } => "fc",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool2d { .. } => "maxpool2d",
            LayerKind::Flatten => "flatten",
        }
    }

    /// Conv and fc layers carry parameters and count as computational.
    pub fn is_computational(&self) -> bool {
        matches!(self, LayerKind::Conv2d { .. } | LayerKind::Fc { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    /// Declared `(name, shape)` of each parameter tensor.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        match self.kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                (
                    self.weight_name(),
                    vec![out_channels, in_channels, kernel, kernel],
                ),
                (self.bias_name(), vec![out_channels]),
            ],
            LayerKind::Fc {
                in_features,
                out_features,
            } => vec![
                (self.weight_name(), vec![out_features, in_features]),
                (self.bias_name(), vec![out_features]),
            ],
            _ => Vec::new(),
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: Vec<usize>| {
            Error::shape(
                format!("layer `{}` ({})", self.name, self.kind.tag()),
                &expected,
                input,
            )
        };
        match self.kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 3 || input[0] != in_channels {
                    return Err(mismatch(vec![in_channels, 0, 0]));
                }
                let out_h = conv_extent(input[1], kernel, stride, padding);
                let out_w = conv_extent(input[2], kernel, stride, padding);
                match (out_h, out_w) {
                    (Some(h), Some(w)) => Ok(vec![out_channels, h, w]),
                    _ => Err(mismatch(vec![in_channels, kernel, kernel])),
                }
            }
            LayerKind::Fc {
                in_features,
                out_features,
            } => {
                if input != [in_features] {
                    return Err(mismatch(vec![in_features]));
                }
                Ok(vec![out_features])
            }
            LayerKind::Relu => Ok(input.to_vec()),
            LayerKind::MaxPool2d { kernel, stride } => {
                if input.len() != 3 {
                    return Err(mismatch(vec![0, kernel, kernel]));
                }
                match (
                    conv_extent(input[1], kernel, stride, 0),
                    conv_extent(input[2], kernel, stride, 0),
                ) {
                    (Some(h), Some(w)) => Ok(vec![input[0], h, w]),
                    _ => Err(mismatch(vec![input[0], kernel, kernel])),
                }
            }
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

fn conv_extent(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || size + 2 * padding < kernel {
        return None;
    }
    Some((size + 2 * padding - kernel) / stride + 1)
}

/// Weight and bias of a computational layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// A layer with resolved shapes and, for conv/fc, its frozen parameters.
#[derive(Debug, Clone)]
pub struct Layer {
    spec: LayerSpec,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    params: Option<LayerParams>,
}

impl Layer {
    pub fn new(
        spec: LayerSpec,
        input_shape: &[usize],
        params: Option<LayerParams>,
    ) -> Result<Self> {
        let output_shape = spec.output_shape(input_shape)?;
        let declared = spec.param_shapes();
        match (&params, declared.as_slice()) {
            (None, []) => {}
            (Some(p), [(wname, wshape), (bname, bshape)]) => {
                p.weight.expect_shape(wshape, wname)?;
                p.bias.expect_shape(bshape, bname)?;
            }
            (None, [(wname, _), ..]) => return Err(Error::MissingParameter(wname.clone())),
            (Some(_), _) => {
                return Err(Error::InvalidArgument(format!(
                    "layer `{}` ({}) takes no parameters",
                    spec.name,
                    spec.kind.tag()
                )))
            }
        }
        Ok(Layer {
            spec,
            input_shape: input_shape.to_vec(),
            output_shape,
            params,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn kind(&self) -> &LayerKind {
        &self.spec.kind
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn params(&self) -> Option<&LayerParams> {
        self.params.as_ref()
    }

    pub(crate) fn params_mut(&mut self) -> Option<&mut LayerParams> {
        self.params.as_mut()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        input.expect_shape(
            &self.input_shape,
            &format!(
                "input of layer `{}` ({})",
                self.spec.name,
                self.spec.kind.tag()
            ),
        )
    }
}

/// Forward values a layer needs for its backward pass.
#[derive(Debug, Clone)]
pub(crate) enum Saved {
    Input(Tensor),
    ReluMask(Vec<bool>),
    PoolArgmax(Vec<usize>),
    Nothing,
}

/// Evaluates one layer.
pub fn forward_layer(layer: &Layer, input: &Tensor) -> Result<Tensor> {
    forward_saved(layer, input).map(|(out, _)| out)
}

pub(crate) fn forward_saved(layer: &Layer, input: &Tensor) -> Result<(Tensor, Saved)> {
    layer.check_input(input)?;
    let (data, saved) = match layer.spec.kind {
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let p = layer.params.as_ref().expect("validated at construction");
            let geom = ConvGeometry {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                in_h: layer.input_shape[1],
                in_w: layer.input_shape[2],
                out_h: layer.output_shape[1],
                out_w: layer.output_shape[2],
            };
            (
                conv2d_forward(&geom, input.data(), p),
                Saved::Input(input.clone()),
            )
        }
        LayerKind::Fc {
            in_features,
            out_features,
        } => {
            let p = layer.params.as_ref().expect("validated at construction");
            let w = p.weight.data();
            let b = p.bias.data();
            let x = input.data();
            let out = (0..out_features)
                .map(|o| {
                    let row = &w[o * in_features..(o + 1) * in_features];
                    let acc = row
                        .iter()
                        .zip(x)
                        .fold(b[o] as f64, |acc, (&wi, &xi)| acc + wi as f64 * xi as f64);
                    acc as f32
                })
                .collect();
            (out, Saved::Input(input.clone()))
        }
        LayerKind::Relu => {
            let mask: Vec<bool> = input.data().iter().map(|&v| v > 0.0).collect();
            let out = input
                .data()
                .iter()
                .zip(&mask)
                .map(|(&v, &keep)| if keep { v } else { 0.0 })
                .collect();
            (out, Saved::ReluMask(mask))
        }
        LayerKind::MaxPool2d { kernel, stride } => {
            let (out, argmax) = maxpool_forward(
                input.data(),
                &layer.input_shape,
                &layer.output_shape,
                kernel,
                stride,
            );
            (out, Saved::PoolArgmax(argmax))
        }
        LayerKind::Flatten => (input.data().to_vec(), Saved::Nothing),
    };
    let out = Tensor::new(layer.output_shape.clone(), data)?;
    out.ensure_finite(&format!("forward of layer `{}`", layer.spec.name))?;
    Ok((out, saved))
}

/// Propagates `grad_out` back through one layer. Parameter gradients are only
/// accumulated when `want_params` is set.
pub(crate) fn backward_layer(
    layer: &Layer,
    saved: &Saved,
    grad_out: &Tensor,
    want_params: bool,
) -> Result<(Tensor, Option<LayerParams>)> {
    grad_out.expect_shape(
        &layer.output_shape,
        &format!("gradient of layer `{}`", layer.spec.name),
    )?;
    let g = grad_out.data();
    let (grad_in, param_grad) = match (&layer.spec.kind, saved) {
        (
            &LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            },
            Saved::Input(x),
        ) => {
            let p = layer.params.as_ref().expect("validated at construction");
            let geom = ConvGeometry {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                in_h: layer.input_shape[1],
                in_w: layer.input_shape[2],
                out_h: layer.output_shape[1],
                out_w: layer.output_shape[2],
            };
            conv2d_backward(&geom, x.data(), p, g, want_params)
        }
        (
            &LayerKind::Fc {
                in_features,
                out_features,
            },
            Saved::Input(x),
        ) => {
            let p = layer.params.as_ref().expect("validated at construction");
            let w = p.weight.data();
            let mut grad_in = vec![0.0f64; in_features];
            for (o, &go) in g.iter().enumerate() {
                let go = go as f64;
                let row = &w[o * in_features..(o + 1) * in_features];
                for (acc, &wi) in grad_in.iter_mut().zip(row) {
                    *acc += wi as f64 * go;
                }
            }
            let params = want_params.then(|| {
                let xs = x.data();
                let mut gw = Vec::with_capacity(out_features * in_features);
                for &go in g {
                    gw.extend(xs.iter().map(|&xi| go * xi));
                }
                (gw, g.to_vec())
            });
            (grad_in.into_iter().map(|v| v as f32).collect(), params)
        }
        (LayerKind::Relu, Saved::ReluMask(mask)) => (
            g.iter()
                .zip(mask)
                .map(|(&v, &keep)| if keep { v } else { 0.0 })
                .collect(),
            None,
        ),
        (LayerKind::MaxPool2d { .. }, Saved::PoolArgmax(argmax)) => {
            let mut grad_in = vec![0.0f32; layer.input_shape.iter().product()];
            for (&src, &v) in argmax.iter().zip(g) {
                grad_in[src] += v;
            }
            (grad_in, None)
        }
        (LayerKind::Flatten, Saved::Nothing) => (g.to_vec(), None),
        _ => unreachable!("saved state does not match layer kind"),
    };
    let grad_in = Tensor::new(layer.input_shape.clone(), grad_in)?;
    grad_in.ensure_finite(&format!("backward of layer `{}`", layer.spec.name))?;
    let param_grad = match param_grad {
        Some((gw, gb)) => {
            let p = layer
                .params
                .as_ref()
                .expect("only computational layers yield grads");
            Some(LayerParams {
                weight: Tensor::new(p.weight.shape().to_vec(), gw)?,
                bias: Tensor::new(p.bias.shape().to_vec(), gb)?,
            })
        }
        None => None,
    };
    Ok((grad_in, param_grad))
}

struct ConvGeometry {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeometry {
    /// Input coordinate hit by output `o` and kernel offset `k`, if inside.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k).checked_sub(self.padding)?;
        (pos < extent).then_some(pos)
    }
}

fn conv2d_forward(geom: &ConvGeometry, x: &[f32], p: &LayerParams) -> Vec<f32> {
    let k = geom.kernel;
    let w = p.weight.data();
    let b = p.bias.data();
    let mut out = Vec::with_capacity(geom.out_channels * geom.out_h * geom.out_w);
    for o in 0..geom.out_channels {
        for oh in 0..geom.out_h {
            for ow in 0..geom.out_w {
                let mut acc = b[o] as f64;
                for c in 0..geom.in_channels {
                    let wbase = (o * geom.in_channels + c) * k * k;
                    let xbase = c * geom.in_h * geom.in_w;
                    for kh in 0..k {
                        let Some(ih) = geom.source(oh, kh, geom.in_h) else {
                            continue;
                        };
                        for kw in 0..k {
                            let Some(iw) = geom.source(ow, kw, geom.in_w) else {
                                continue;
                            };
                            acc += w[wbase + kh * k + kw] as f64
                                * x[xbase + ih * geom.in_w + iw] as f64;
                        }
                    }
                }
                out.push(acc as f32);
            }
        }
    }
    out
}

type ParamGradBuffers = (Vec<f32>, Vec<f32>);

fn conv2d_backward(
    geom: &ConvGeometry,
    x: &[f32],
    p: &LayerParams,
    g: &[f32],
    want_params: bool,
) -> (Vec<f32>, Option<ParamGradBuffers>) {
    let k = geom.kernel;
    let w = p.weight.data();
    let mut grad_in = vec![0.0f64; geom.in_channels * geom.in_h * geom.in_w];
    let mut grad_w = if want_params {
        vec![0.0f64; w.len()]
    } else {
        Vec::new()
    };
    let mut grad_b = if want_params {
        vec![0.0f64; geom.out_channels]
    } else {
        Vec::new()
    };
    for o in 0..geom.out_channels {
        for oh in 0..geom.out_h {
            for ow in 0..geom.out_w {
                let go = g[(o * geom.out_h + oh) * geom.out_w + ow] as f64;
                if go == 0.0 {
                    continue;
                }
                if want_params {
                    grad_b[o] += go;
                }
                for c in 0..geom.in_channels {
                    let wbase = (o * geom.in_channels + c) * k * k;
                    let xbase = c * geom.in_h * geom.in_w;
                    for kh in 0..k {
                        let Some(ih) = geom.source(oh, kh, geom.in_h) else {
                            continue;
                        };
                        for kw in 0..k {
                            let Some(iw) = geom.source(ow, kw, geom.in_w) else {
                                continue;
                            };
                            let xi = xbase + ih * geom.in_w + iw;
                            let wi = wbase + kh * k + kw;
                            grad_in[xi] += w[wi] as f64 * go;
                            if want_params {
                                grad_w[wi] += x[xi] as f64 * go;
                            }
                        }
                    }
                }
            }
        }
    }
    let grad_in = grad_in.into_iter().map(|v| v as f32).collect();
    let params = want_params.then(|| {
        (
            grad_w.into_iter().map(|v| v as f32).collect(),
            grad_b.into_iter().map(|v| v as f32).collect(),
        )
    });
    (grad_in, params)
}

fn maxpool_forward(
    x: &[f32],
    input_shape: &[usize],
    output_shape: &[usize],
    kernel: usize,
    stride: usize,
) -> (Vec<f32>, Vec<usize>) {
    let (channels, in_h, in_w) = (input_shape[0], input_shape[1], input_shape[2]);
    let (out_h, out_w) = (output_shape[1], output_shape[2]);
    let mut out = Vec::with_capacity(channels * out_h * out_w);
    let mut argmax = Vec::with_capacity(out.capacity());
    for c in 0..channels {
        for oh in 0..out_h {
            for ow in 0..out_w {
                // Row-major scan with strict comparison: ties keep the lowest flat index.
                let mut best = (c * in_h + oh * stride) * in_w + ow * stride;
                for kh in 0..kernel {
                    for kw in 0..kernel {
                        let idx = (c * in_h + oh * stride + kh) * in_w + ow * stride + kw;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    (out, argmax)
}
