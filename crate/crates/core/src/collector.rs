//! Laplace fitting of accepted noise tensors and the persisted collection of
//! (location, scale, element order, accuracy) entries.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::codec::Reader;
use crate::error::{Error, Result};
use crate::network::Split;
use crate::tensor_core::Tensor;

pub const COLLECTION_MAGIC: &[u8; 4] = b"SHRC";
pub const COLLECTION_VERSION: u8 = 0x01;

/// Default SSE gate on density-normalized histograms.
pub const DEFAULT_SSE_THRESHOLD: f64 = 0.05;
pub const DEFAULT_SSE_BINS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceParams {
    pub location: f64,
    pub scale: f64,
}

impl LaplaceParams {
    pub fn new(location: f64, scale: f64) -> Result<Self> {
        if !location.is_finite() || !scale.is_finite() || scale <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "Laplace parameters must be finite with positive scale, got ({location}, {scale})"
            )));
        }
        Ok(LaplaceParams { location, scale })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (-(x - self.location).abs() / self.scale).exp() / (2.0 * self.scale)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.location) / self.scale;
        if z < 0.0 {
            0.5 * z.exp()
        } else {
            1.0 - 0.5 * (-z).exp()
        }
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.scale * self.scale
    }

    /// One draw by inverting the CDF.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        loop {
            let u: f64 = rng.random::<f64>() - 0.5;
            if u != -0.5 {
                return self.location - self.scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
            }
        }
    }
}

/// Maximum-likelihood Laplace fit: the median and the mean absolute
/// deviation from it.
pub fn fit_laplace(noise: &Tensor) -> Result<LaplaceParams> {
    let mut values: Vec<f64> = noise.data().iter().map(|&v| v as f64).collect();
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n < 2 || values[0] == values[n - 1] {
        return Err(Error::InvalidArgument(
            "Laplace fit needs at least two distinct values".into(),
        ));
    }
    let location = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    let scale = values.iter().map(|v| (v - location).abs()).sum::<f64>() / n as f64;
    LaplaceParams::new(location, scale)
}

/// Sum of squared differences between the data's density histogram and the
/// fitted density at the bin centres, over equal-width bins spanning the
/// data's range.
pub fn histogram_sse(noise: &Tensor, params: &LaplaceParams, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidArgument("need at least 2 bins".into()));
    }
    let (lo, hi) = noise
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        });
    let width = (hi - lo) / bins as f64;
    if !(width > 0.0) {
        return Err(Error::InvalidArgument(
            "histogram of a constant tensor is undefined".into(),
        ));
    }
    let mut counts = vec![0usize; bins];
    for &v in noise.data() {
        let b = (((v as f64 - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let norm = noise.len() as f64 * width;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let centre = lo + (b as f64 + 0.5) * width;
            let diff = c as f64 / norm - params.pdf(centre);
            diff * diff
        })
        .sum())
}

/// Flat indices ordered by descending value; ties keep the lower index first.
pub fn descending_order(values: &[f32]) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..values.len() as u32).collect();
    idx.sort_by(|&i, &j| {
        values[j as usize]
            .total_cmp(&values[i as usize])
            .then(i.cmp(&j))
    });
    idx
}

/// 95% Wilson score interval for a proportion measured on `n` trials.
pub fn wilson_interval(p: f64, n: usize) -> (f64, f64) {
    const Z: f64 = 1.959_963_984_540_054;
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectorConfig {
    pub sse_threshold: f64,
    pub bins: usize,
}

impl Default for CollectorConfig {
    fn default() -> Self {
        CollectorConfig {
            sse_threshold: DEFAULT_SSE_THRESHOLD,
            bins: DEFAULT_SSE_BINS,
        }
    }
}

/// One collected distribution. The raw noise values are not kept.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionEntry {
    pub params: LaplaceParams,
    /// `order[k]` is the flat index that held the k-th largest value.
    pub order: Vec<u32>,
    /// Holdout accuracy measured when the tensor was accepted.
    pub accuracy: f64,
    pub sse: f64,
    /// Seed of the learning round that produced the tensor.
    pub seed: u64,
}

/// Append-only set of distributions learned for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionCollection {
    network_hash: [u8; 32],
    cut: u32,
    noise_shape: Vec<usize>,
    entries: Vec<DistributionEntry>,
}

impl DistributionCollection {
    pub fn new(network_hash: [u8; 32], cut: usize, noise_shape: &[usize]) -> Self {
        DistributionCollection {
            network_hash,
            cut: cut as u32,
            noise_shape: noise_shape.to_vec(),
            entries: Vec::new(),
        }
    }

    pub fn for_split(split: &Split) -> Self {
        Self::new(
            split.network().hash(),
            split.cut(),
            split.activation_shape(),
        )
    }

    pub fn entries(&self) -> &[DistributionEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn noise_shape(&self) -> &[usize] {
        &self.noise_shape
    }

    pub fn noise_len(&self) -> usize {
        self.noise_shape.iter().product()
    }

    pub fn network_hash(&self) -> [u8; 32] {
        self.network_hash
    }

    pub fn cut(&self) -> usize {
        self.cut as usize
    }

    /// Fits `noise`, applies the SSE gate and on success appends an entry
    /// holding only the fitted parameters, the element order, `accuracy` and
    /// the round `seed`.
    pub fn try_collect(
        &mut self,
        noise: &Tensor,
        accuracy: f64,
        seed: u64,
        cfg: &CollectorConfig,
    ) -> Result<&DistributionEntry> {
        noise.expect_shape(&self.noise_shape, "collected noise")?;
        let params = fit_laplace(noise)?;
        let sse = histogram_sse(noise, &params, cfg.bins)?;
        if !(sse <= cfg.sse_threshold) {
            return Err(Error::SseRejected {
                sse,
                threshold: cfg.sse_threshold,
            });
        }
        self.entries.push(DistributionEntry {
            params,
            order: descending_order(noise.data()),
            accuracy,
            sse,
            seed,
        });
        Ok(self.entries.last().expect("just pushed"))
    }

    /// Fails unless the collection was learned for this network and cut.
    pub fn check_matches(&self, split: &Split) -> Result<()> {
        if self.network_hash != split.network().hash() {
            return Err(Error::CollectionMismatch(format!(
                "network hash {} does not match loaded network {}",
                hex(&self.network_hash),
                hex(&split.network().hash())
            )));
        }
        if self.cut() != split.cut() {
            return Err(Error::CollectionMismatch(format!(
                "collection was learned at cut {} but the split cuts at {}",
                self.cut,
                split.cut()
            )));
        }
        if self.noise_shape != split.activation_shape() {
            return Err(Error::shape(
                "collection noise shape",
                split.activation_shape(),
                &self.noise_shape,
            ));
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let count = u16::try_from(self.entries.len())
            .map_err(|_| Error::InvalidArgument("more than 65535 entries".into()))?;
        let rank = u8::try_from(self.noise_shape.len())
            .map_err(|_| Error::InvalidArgument("noise rank too large".into()))?;
        let mut out = Vec::new();
        out.extend_from_slice(COLLECTION_MAGIC);
        out.push(COLLECTION_VERSION);
        out.extend_from_slice(&self.network_hash);
        out.extend_from_slice(&self.cut.to_le_bytes());
        out.push(rank);
        for &d in &self.noise_shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&count.to_le_bytes());
        for e in &self.entries {
            for v in [e.params.location, e.params.scale, e.accuracy, e.sse] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&e.seed.to_le_bytes());
            for &i in &e.order {
                out.extend_from_slice(&i.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "collection file");
        if r.take(4)? != COLLECTION_MAGIC {
            return Err(r.error("bad magic"));
        }
        let version = r.u8()?;
        if version != COLLECTION_VERSION {
            return Err(r.error(format!("unsupported version {version:#04x}")));
        }
        let network_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let cut = r.u32()?;
        let rank = r.u8()? as usize;
        if rank == 0 {
            return Err(r.error("noise rank 0"));
        }
        let mut noise_shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = r.u32()? as usize;
            if d == 0 {
                return Err(r.error("zero extent"));
            }
            noise_shape.push(d);
        }
        let p = noise_shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| r.error("noise size overflows"))?;
        let count = r.u16()? as usize;
        let mut entries = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let location = r.f64()?;
            let scale = r.f64()?;
            let accuracy = r.f64()?;
            let sse = r.f64()?;
            let seed = r.u64()?;
            let params = LaplaceParams::new(location, scale).map_err(|e| r.error(e))?;
            if p.checked_mul(4).is_none_or(|bytes| bytes > r.remaining()) {
                return Err(r.error("truncated element order"));
            }
            let mut order = Vec::with_capacity(p);
            let mut seen = vec![false; p];
            for _ in 0..p {
                let i = r.u32()?;
                match seen.get_mut(i as usize) {
                    Some(s) if !*s => *s = true,
                    _ => return Err(r.error(format!("element order is not a permutation ({i})"))),
                }
                order.push(i);
            }
            entries.push(DistributionEntry {
                params,
                order,
                accuracy,
                sse,
                seed,
            });
        }
        r.finish()?;
        Ok(DistributionCollection {
            network_hash,
            cut,
            noise_shape,
            entries,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    /// Loads and checks the collection against the active split.
    pub fn load_for(path: impl AsRef<Path>, split: &Split) -> Result<Self> {
        let c = Self::load(path)?;
        c.check_matches(split)?;
        Ok(c)
    }
}

/// Lowercase hexadecimal rendering of a digest.
pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
