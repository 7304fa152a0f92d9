//! Datasets: MNIST-format IDX files and a synthetic dual-label generator.

use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::Reader;
use crate::error::{Error, Result};
use crate::tensor_core::Tensor;

/// One labelled example. `private_label` is only set for dual-label data.
#[derive(Debug, Clone)]
pub struct Example {
    pub input: Tensor,
    pub label: usize,
    pub private_label: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub classes: usize,
    pub private_classes: Option<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Splits into `[0, at)` and `[at, len)`, preserving order.
    pub fn split_at(mut self, at: usize) -> (Dataset, Dataset) {
        let tail = self.examples.split_off(at.min(self.examples.len()));
        let head = Dataset {
            examples: self.examples,
            classes: self.classes,
            private_classes: self.private_classes,
        };
        let tail = Dataset {
            examples: tail,
            classes: self.classes,
            private_classes: self.private_classes,
        };
        (head, tail)
    }

    pub fn take(mut self, n: usize) -> Dataset {
        self.examples.truncate(n);
        self
    }

    /// Loads IDX image and label files (optionally gzip-compressed). Pixels
    /// are scaled to `[0, 1]` and shaped `[1, rows, cols]`.
    pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
        let (dims, pixels) = read_idx(images.as_ref())?;
        let (ldims, labels) = read_idx(labels.as_ref())?;
        if dims.len() != 3 {
            return Err(Error::format(
                "idx images",
                format!("expected 3 dimensions, found {}", dims.len()),
            ));
        }
        if ldims.len() != 1 || ldims[0] != dims[0] {
            return Err(Error::format(
                "idx labels",
                format!("label dims {ldims:?} do not match {} images", dims[0]),
            ));
        }
        let (rows, cols) = (dims[1], dims[2]);
        let stride = rows * cols;
        let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
        let examples = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| {
                let data = pixels[i * stride..(i + 1) * stride]
                    .iter()
                    .map(|&p| p as f32 / 255.0)
                    .collect();
                Ok(Example {
                    input: Tensor::new(vec![1, rows, cols], data)?,
                    label: label as usize,
                    private_label: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            examples,
            classes: classes.max(2),
            private_classes: None,
        })
    }

    /// Attaches private labels from an IDX label file.
    pub fn with_private_labels(mut self, labels: impl AsRef<Path>) -> Result<Dataset> {
        let (dims, labels) = read_idx(labels.as_ref())?;
        if dims.len() != 1 || dims[0] != self.len() {
            return Err(Error::format(
                "idx labels",
                format!(
                    "private label dims {dims:?} do not match {} examples",
                    self.len()
                ),
            ));
        }
        for (ex, &l) in self.examples.iter_mut().zip(&labels) {
            ex.private_label = Some(l as usize);
        }
        self.private_classes = labels.iter().copied().max().map(|m| m as usize + 1);
        Ok(self)
    }

    /// Writes images (quantized to u8) and labels as gzip IDX files.
    pub fn save_idx(
        &self,
        images: impl AsRef<Path>,
        labels: impl AsRef<Path>,
        private_labels: Option<&Path>,
    ) -> Result<()> {
        let first = self
            .examples
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot save an empty dataset".into()))?;
        let shape = first.input.shape();
        if shape.len() != 3 || shape[0] != 1 {
            return Err(Error::InvalidArgument(format!(
                "IDX images must be [1, rows, cols], got {shape:?}"
            )));
        }
        let mut pixels = Vec::with_capacity(self.len() * first.input.len());
        for ex in &self.examples {
            pixels.extend(
                ex.input
                    .data()
                    .iter()
                    .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
            );
        }
        write_idx(images.as_ref(), &[self.len(), shape[1], shape[2]], &pixels)?;
        let labels_u8: Vec<u8> = self.examples.iter().map(|e| e.label as u8).collect();
        write_idx(labels.as_ref(), &[self.len()], &labels_u8)?;
        if let Some(path) = private_labels {
            let private: Vec<u8> = self
                .examples
                .iter()
                .map(|e| e.private_label.unwrap_or(0) as u8)
                .collect();
            write_idx(path, &[self.len()], &private)?;
        }
        Ok(())
    }
}

/// Reads an unsigned-byte IDX file; gzip input is detected from its magic.
pub fn read_idx(path: &Path) -> Result<(Vec<usize>, Vec<u8>)> {
    let raw = fs::read(path)?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::format("idx file", format!("gzip: {e}")))?;
        out
    } else {
        raw
    };
    parse_idx(&bytes)
}

pub fn parse_idx(bytes: &[u8]) -> Result<(Vec<usize>, Vec<u8>)> {
    let mut r = Reader::new(bytes, "idx file");
    let magic = r.take(4)?;
    if magic[0] != 0 || magic[1] != 0 || magic[2] != 0x08 {
        return Err(r.error(format!("unsupported magic {magic:02x?} (u8 data only)")));
    }
    let ndims = magic[3] as usize;
    if ndims == 0 {
        return Err(r.error("zero dimensions"));
    }
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        let b = r.take(4)?;
        dims.push(u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize);
    }
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| r.error("size overflows"))?;
    let data = r.take(total)?.to_vec();
    r.finish()?;
    Ok((dims, data))
}

fn write_idx(path: &Path, dims: &[usize], data: &[u8]) -> Result<()> {
    let mut header = vec![0u8, 0, 0x08, dims.len() as u8];
    for &d in dims {
        header.extend_from_slice(&(d as u32).to_be_bytes());
    }
    let mut gz = GzEncoder::new(File::create(path)?, Compression::default());
    gz.write_all(&header)?;
    gz.write_all(data)?;
    gz.finish()?;
    Ok(())
}

/// Side length of the synthetic dual-label images.
pub const DUAL_SIDE: usize = 12;
pub const DUAL_PRIMARY_CLASSES: usize = 2;
pub const DUAL_PRIVATE_CLASSES: usize = 4;

/// Synthetic data with a primary and a private label.
///
/// Each `[1, 12, 12]` image holds a bar (primary label: 0 horizontal,
/// 1 vertical) at a random offset and a 3x3 blob in one of four quadrants
/// (private label), over Gaussian pixel noise.
pub fn synthetic_dual_label(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|_| {
            let label = rng.random_range(0..DUAL_PRIMARY_CLASSES);
            let private = rng.random_range(0..DUAL_PRIVATE_CLASSES);
            let mut img = vec![0.0f32; DUAL_SIDE * DUAL_SIDE];
            for v in img.iter_mut() {
                *v = (0.08 * gaussian(&mut rng)) as f32;
            }
            let offset = rng.random_range(2..DUAL_SIDE - 2);
            let start = rng.random_range(0..3);
            for t in start..start + 9 {
                let (r, c) = if label == 0 { (offset, t) } else { (t, offset) };
                img[r * DUAL_SIDE + c] += 0.8;
            }
            let (qr, qc) = (private / 2, private % 2);
            let base_r = qr * 6 + rng.random_range(1..3);
            let base_c = qc * 6 + rng.random_range(1..3);
            for dr in 0..3 {
                for dc in 0..3 {
                    img[(base_r + dr) * DUAL_SIDE + base_c + dc] += 0.6;
                }
            }
            Example {
                input: Tensor::new(vec![1, DUAL_SIDE, DUAL_SIDE], img).expect("fixed shape"),
                label,
                private_label: Some(private),
            }
        })
        .collect();
    Dataset {
        examples,
        classes: DUAL_PRIMARY_CLASSES,
        private_classes: Some(DUAL_PRIVATE_CLASSES),
    }
}

/// Standard normal draw (Box-Muller).
pub(crate) fn gaussian(rng: &mut impl Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            let v: f64 = rng.random();
            return (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos();
        }
    }
}
