//! Cut selection from a per-layer cost profile.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{valid_cuts, NetworkSpec};
use crate::wire::activation_frame_len;

/// Per-layer compute times and link parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    #[serde(default)]
    pub name: String,
    /// Milliseconds per layer on the edge device, in layer order.
    pub edge_ms: Vec<f64>,
    /// Milliseconds per layer on the cloud server, in layer order.
    pub cloud_ms: Vec<f64>,
    pub bandwidth_bytes_per_s: f64,
    /// Fixed per-message latency.
    pub latency_ms: f64,
}

impl DeviceProfile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let p: DeviceProfile =
            toml::from_str(text).map_err(|e| Error::format("device profile", e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if let Some((i, v)) = self
            .edge_ms
            .iter()
            .chain(&self.cloud_ms)
            .enumerate()
            .find(|(_, v)| !positive(**v))
        {
            return Err(Error::InvalidArgument(format!(
                "profile time #{i} must be positive, got {v}"
            )));
        }
        if !positive(self.bandwidth_bytes_per_s) {
            return Err(Error::InvalidArgument("bandwidth must be positive".into()));
        }
        if !(self.latency_ms >= 0.0 && self.latency_ms.is_finite()) {
            return Err(Error::InvalidArgument(
                "latency must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Multiplies every time by `c` and divides the bandwidth by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        DeviceProfile {
            name: self.name.clone(),
            edge_ms: self.edge_ms.iter().map(|v| v * c).collect(),
            cloud_ms: self.cloud_ms.iter().map(|v| v * c).collect(),
            bandwidth_bytes_per_s: self.bandwidth_bytes_per_s / c,
            latency_ms: self.latency_ms * c,
        }
    }

    /// Milliseconds to move `bytes` over the link, latency included.
    pub fn transmit_ms(&self, bytes: usize) -> f64 {
        self.latency_ms + bytes as f64 / self.bandwidth_bytes_per_s * 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub cut: usize,
    /// Name of the last edge layer, or `input` for position 0.
    pub after_layer: String,
    pub edge_ms: f64,
    pub transmit_bytes: usize,
    pub transmit_ms: f64,
    pub cloud_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    /// One row per valid cut, in increasing cut order.
    pub rows: Vec<CostRow>,
    /// Shipping the raw input and running everything remotely. Never a
    /// candidate; kept for comparison.
    pub input_baseline: CostRow,
}

fn cost_row(
    spec: &NetworkSpec,
    shapes: &[Vec<usize>],
    profile: &DeviceProfile,
    cut: usize,
) -> Result<CostRow> {
    let shape = shapes
        .get(cut)
        .ok_or_else(|| Error::InvalidArgument(format!("cut {cut} out of range")))?;
    let transmit_bytes = activation_frame_len(shape);
    let edge_ms: f64 = profile.edge_ms[..cut].iter().sum();
    let cloud_ms: f64 = profile.cloud_ms[cut..].iter().sum();
    let transmit_ms = profile.transmit_ms(transmit_bytes);
    Ok(CostRow {
        cut,
        after_layer: match cut {
            0 => "input".into(),
            c => spec.layers[c - 1].name.clone(),
        },
        edge_ms,
        transmit_bytes,
        transmit_ms,
        cloud_ms,
        total_ms: edge_ms + transmit_ms + cloud_ms,
    })
}

/// Modeled end-to-end cost of every valid cut.
pub fn build_cost_table(spec: &NetworkSpec, profile: &DeviceProfile) -> Result<CostTable> {
    profile.validate()?;
    let k = spec.layers.len();
    if profile.edge_ms.len() != k || profile.cloud_ms.len() != k {
        return Err(Error::InvalidArgument(format!(
            "profile covers {} edge and {} cloud layers but `{}` has {k}",
            profile.edge_ms.len(),
            profile.cloud_ms.len(),
            spec.name
        )));
    }
    let shapes = spec.shapes()?;
    let rows = valid_cuts(spec)
        .into_iter()
        .map(|cut| cost_row(spec, &shapes, profile, cut))
        .collect::<Result<Vec<_>>>()?;
    Ok(CostTable {
        rows,
        input_baseline: cost_row(spec, &shapes, profile, 0)?,
    })
}

/// Argmin of `total_ms`; ties go to the deeper cut.
pub fn choose_cut(table: &CostTable) -> Result<usize> {
    table
        .rows
        .iter()
        .reduce(|best, row| {
            if row.total_ms <= best.total_ms {
                row
            } else {
                best
            }
        })
        .map(|row| row.cut)
        .ok_or_else(|| Error::InvalidSplit("the topology has no valid cut".into()))
}
