//! The frozen pre-trained network and its edge/cloud split.

mod spec;
mod weights;

use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

pub use spec::NetworkSpec;
pub(crate) use weights::{decode_tensor, encode_tensor};
pub use weights::{Weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use crate::error::{Error, Result};
use crate::tensor_core::{forward, Layer, LayerParams, Tensor};

/// A network with resolved layers and frozen parameters.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    hash: [u8; 32],
}

impl Network {
    /// Binds every parameter named by `spec` to a tensor of `weights`.
    pub fn new(spec: NetworkSpec, weights: &Weights) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (layer_spec, input_shape) in spec.layers.iter().zip(&shapes) {
            let params = match layer_spec.param_shapes().as_slice() {
                [] => None,
                [(wname, _), (bname, _)] => {
                    let lookup = |name: &str| {
                        weights
                            .get(name)
                            .cloned()
                            .ok_or_else(|| Error::MissingParameter(name.to_string()))
                    };
                    Some(LayerParams {
                        weight: lookup(wname)?,
                        bias: lookup(bname)?,
                    })
                }
                _ => unreachable!("layers carry zero or two parameter tensors"),
            };
            layers.push(Layer::new(layer_spec.clone(), input_shape, params)?);
        }
        let mut net = Network {
            spec,
            layers,
            hash: [0; 32],
        };
        net.hash = net.compute_hash()?;
        Ok(net)
    }

    pub fn load(spec_path: impl AsRef<Path>, weights_path: impl AsRef<Path>) -> Result<Self> {
        let spec = NetworkSpec::load(spec_path)?;
        let weights = Weights::load(weights_path)?;
        Self::new(spec, &weights)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.spec.input_shape
    }

    /// Shape of the activation at boundary `position` (0 = raw input).
    pub fn activation_shape(&self, position: usize) -> &[usize] {
        match position {
            0 => &self.spec.input_shape,
            p => self.layers[p - 1].output_shape(),
        }
    }

    /// The parameters currently bound to the layers, in layer order.
    pub fn weights(&self) -> Weights {
        let mut w = Weights::new();
        for layer in &self.layers {
            if let Some(p) = layer.params() {
                w.insert(layer.spec().weight_name(), p.weight.clone());
                w.insert(layer.spec().bias_name(), p.bias.clone());
            }
        }
        w
    }

    /// SHA-256 over the canonical topology text and the encoded parameters.
    pub fn hash(&self) -> [u8; 32] {
        self.hash
    }

    /// SHA-256 of the in-memory parameter buffers alone.
    pub fn parameter_checksum(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for layer in &self.layers {
            if let Some(p) = layer.params() {
                h.update(p.weight.to_le_bytes());
                h.update(p.bias.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    fn compute_hash(&self) -> Result<[u8; 32]> {
        let mut h = Sha256::new();
        h.update(b"splitnoise-network\0");
        h.update(self.spec.to_toml_string().as_bytes());
        h.update(self.weights().encode()?);
        Ok(h.finalize().into())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        forward(&self.layers, x)
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub(crate) fn refresh_hash(&mut self) -> Result<()> {
        self.hash = self.compute_hash()?;
        Ok(())
    }
}

/// Boundary positions at which the network may be cut.
///
/// Position `p` runs layers `[0, p)` on the edge and `[p, K)` on the cloud. A
/// valid cut keeps at least one conv/fc layer on the edge and starts the cloud
/// partition with a conv/fc layer, so the raw input (`p = 0`) is never valid.
pub fn valid_cuts(spec: &NetworkSpec) -> Vec<usize> {
    let mut seen_computational = false;
    let mut cuts = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        if seen_computational && layer.kind.is_computational() {
            cuts.push(i);
        }
        seen_computational |= layer.kind.is_computational();
    }
    cuts
}

/// An edge/cloud partition of a shared network.
#[derive(Debug, Clone)]
pub struct Split {
    network: Arc<Network>,
    cut: usize,
}

impl Split {
    pub fn new(network: Arc<Network>, cut: usize) -> Result<Self> {
        let valid = valid_cuts(network.spec());
        if !valid.contains(&cut) {
            let reason = if cut == 0 {
                "position 0 would transmit the raw input".to_string()
            } else if cut >= network.layers().len() {
                format!("position {cut} leaves no layers on the cloud")
            } else if !network.layers()[cut].kind().is_computational() {
                format!(
                    "cloud partition would start with `{}` ({}), not conv/fc",
                    network.layers()[cut].name(),
                    network.layers()[cut].kind().tag()
                )
            } else {
                format!("edge partition [0, {cut}) has no conv/fc layer")
            };
            return Err(Error::InvalidSplit(format!(
                "{reason}; valid cut positions: {valid:?}"
            )));
        }
        Ok(Split { network, cut })
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.network
    }

    pub fn cut(&self) -> usize {
        self.cut
    }

    pub fn edge_layers(&self) -> &[Layer] {
        &self.network.layers()[..self.cut]
    }

    pub fn cloud_layers(&self) -> &[Layer] {
        &self.network.layers()[self.cut..]
    }

    /// Shape of the transmitted activation (and of the noise tensor).
    pub fn activation_shape(&self) -> &[usize] {
        self.network.activation_shape(self.cut)
    }

    pub fn run_edge(&self, x: &Tensor) -> Result<Tensor> {
        forward(self.edge_layers(), x)
    }

    pub fn run_cloud(&self, noisy: &Tensor) -> Result<Tensor> {
        noisy.expect_shape(self.activation_shape(), "cloud partition input")?;
        forward(self.cloud_layers(), noisy)
    }
}

/// Convenience wrapper for [`Split::new`].
pub fn make_split(network: Arc<Network>, cut: usize) -> Result<Split> {
    Split::new(network, cut)
}
