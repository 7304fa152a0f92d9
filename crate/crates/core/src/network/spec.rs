//! Text topology format.
//!
//! A network file is TOML with a header and one `[[layer]]` table per layer,
//! in evaluation order:
//!
//! ```toml
//! name = "lenet5"
//! input_shape = [1, 28, 28]
//! classes = 10
//!
//! [[layer]]
//! kind = "conv2d"
//! name = "conv1"
//! out_channels = 6
//! kernel = 5
//!
//! [[layer]]
//! kind = "relu"
//! ```
//!
//! Input extents (`in_channels`, `in_features`) may be omitted; they are
//! inferred from the running shape and checked when present.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_core::{LayerKind, LayerSpec};

/// Topology of a sequential classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub name: String,
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    name: String,
    input_shape: Vec<usize>,
    classes: usize,
    #[serde(rename = "layer", default)]
    layers: Vec<LayerDecl>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum LayerDecl {
    Conv2d {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        in_channels: Option<usize>,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Fc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        in_features: Option<usize>,
        out_features: usize,
    },
    Relu {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Maxpool2d {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        kernel: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stride: Option<usize>,
    },
    Flatten {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
}

fn one() -> usize {
    1
}

impl NetworkSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SpecFile =
            toml::from_str(text).map_err(|e| Error::format("network spec", e.to_string()))?;
        Self::resolve(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Fully resolved text form; every extent is spelled out.
    pub fn to_toml_string(&self) -> String {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let name = Some(l.name.clone());
                match l.kind {
                    LayerKind::Conv2d {
                        in_channels,
                        out_channels,
                        kernel,
                        stride,
                        padding,
                    } => LayerDecl::Conv2d {
                        name,
                        in_channels: Some(in_channels),
                        out_channels,
                        kernel,
                        stride,
                        padding,
                    },
                    LayerKind::Fc {
                        in_features,
                        out_features,
                    } => LayerDecl::Fc {
                        name,
                        in_features: Some(in_features),
                        out_features,
                    },
                    LayerKind::Relu => LayerDecl::Relu { name },
                    LayerKind::MaxPool2d { kernel, stride } => LayerDecl::Maxpool2d {
                        name,
                        kernel,
                        stride: Some(stride),
                    },
                    LayerKind::Flatten => LayerDecl::Flatten { name },
                }
            })
            .collect();
        let file = SpecFile {
            name: self.name.clone(),
            input_shape: self.input_shape.clone(),
            classes: self.classes,
            layers,
        };
        toml::to_string(&file).expect("spec serializes")
    }

    /// Activation shape after each layer; entry `i` is the input of layer `i`,
    /// the last entry is the logit shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn computational_layers(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.kind.is_computational())
            .count()
    }

    fn resolve(file: SpecFile) -> Result<Self> {
        if file.input_shape.is_empty() || file.input_shape.contains(&0) {
            return Err(Error::format(
                "network spec",
                format!("input_shape must be positive, got {:?}", file.input_shape),
            ));
        }
        if file.classes < 2 {
            return Err(Error::format("network spec", "classes must be at least 2"));
        }
        let mut shape = file.input_shape.clone();
        let mut layers = Vec::with_capacity(file.layers.len());
        let mut names = HashSet::new();
        for (index, decl) in file.layers.into_iter().enumerate() {
            let spec = resolve_layer(index, decl, &shape)?;
            if !names.insert(spec.name.clone()) {
                return Err(Error::format(
                    "network spec",
                    format!("duplicate layer name `{}`", spec.name),
                ));
            }
            shape = spec.output_shape(&shape)?;
            layers.push(spec);
        }
        if shape != [file.classes] {
            return Err(Error::format(
                "network spec",
                format!(
                    "last layer must produce {} logits, produces shape {shape:?}",
                    file.classes
                ),
            ));
        }
        Ok(NetworkSpec {
            name: file.name,
            input_shape: file.input_shape,
            classes: file.classes,
            layers,
        })
    }
}

fn resolve_layer(index: usize, decl: LayerDecl, input: &[usize]) -> Result<LayerSpec> {
    let default_name = |tag: &str| format!("{tag}{index}");
    let check = |declared: Option<usize>, actual: usize, field: &str, name: &str| match declared {
        Some(d) if d != actual => Err(Error::format(
            "network spec",
            format!("layer `{name}` declares {field} = {d} but receives {actual}"),
        )),
        _ => Ok(()),
    };
    let spec = match decl {
        LayerDecl::Conv2d {
            name,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let name = name.unwrap_or_else(|| default_name("conv"));
            if input.len() != 3 {
                return Err(Error::shape(
                    format!("input of layer `{name}`"),
                    &[0, 0, 0],
                    input,
                ));
            }
            check(in_channels, input[0], "in_channels", &name)?;
            LayerSpec::new(
                name,
                LayerKind::Conv2d {
                    in_channels: input[0],
                    out_channels,
                    kernel,
                    stride,
                    padding,
                },
            )
        }
        LayerDecl::Fc {
            name,
            in_features,
            out_features,
        } => {
            let name = name.unwrap_or_else(|| default_name("fc"));
            if input.len() != 1 {
                return Err(Error::shape(
                    format!("input of layer `{name}`"),
                    &[0],
                    input,
                ));
            }
            check(in_features, input[0], "in_features", &name)?;
            LayerSpec::new(
                name,
                LayerKind::Fc {
                    in_features: input[0],
                    out_features,
                },
            )
        }
        LayerDecl::Relu { name } => LayerSpec::new(
            name.unwrap_or_else(|| default_name("relu")),
            LayerKind::Relu,
        ),
        LayerDecl::Maxpool2d {
            name,
            kernel,
            stride,
        } => LayerSpec::new(
            name.unwrap_or_else(|| default_name("pool")),
            LayerKind::MaxPool2d {
                kernel,
                stride: stride.unwrap_or(kernel),
            },
        ),
        LayerDecl::Flatten { name } => LayerSpec::new(
            name.unwrap_or_else(|| default_name("flatten")),
            LayerKind::Flatten,
        ),
    };
    Ok(spec)
}
