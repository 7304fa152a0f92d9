//! Inference-time noise: fresh Laplace draws arranged in a stored rank order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::collector::DistributionCollection;
use crate::error::{Error, Result};
use crate::tensor_core::Tensor;

#[derive(Debug, Clone)]
pub struct SampledNoise {
    pub values: Tensor,
    /// Index of the collection entry the draw came from.
    pub entry: usize,
    /// Seed of the stream that produced the values.
    pub seed: u64,
}

/// Draws one noise tensor: picks an entry uniformly, draws one Laplace value
/// per element, sorts them in descending order and writes the k-th largest
/// to flat index `order[k]`.
pub fn sample_noise(
    collection: &DistributionCollection,
    rng: &mut impl Rng,
) -> Result<SampledNoise> {
    if collection.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot sample from an empty collection".into(),
        ));
    }
    let entry = rng.random_range(0..collection.len());
    let seed = rng.next_u64();
    let mut draw_rng = ChaCha8Rng::seed_from_u64(seed);
    let e = &collection.entries()[entry];
    let mut draws: Vec<f32> = (0..e.order.len())
        .map(|_| e.params.sample(&mut draw_rng) as f32)
        .collect();
    draws.sort_by(|a, b| b.total_cmp(a));
    // f32 ties would make the descending argsort ambiguous
    for k in 1..draws.len() {
        if draws[k] >= draws[k - 1] {
            draws[k] = draws[k - 1].next_down();
        }
    }
    let mut flat = vec![0.0f32; draws.len()];
    for (&value, &target) in draws.iter().zip(&e.order) {
        flat[target as usize] = value;
    }
    Ok(SampledNoise {
        values: Tensor::new(collection.noise_shape().to_vec(), flat)?,
        entry,
        seed,
    })
}

/// `a + noise`, elementwise. The activation itself is never reordered.
pub fn add_noise(a: &Tensor, noise: &SampledNoise) -> Result<Tensor> {
    a.add(&noise.values)
}

/// A collection paired with its own random stream.
#[derive(Debug, Clone)]
pub struct Sampler {
    collection: DistributionCollection,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(collection: DistributionCollection, seed: u64) -> Result<Self> {
        if collection.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot sample from an empty collection".into(),
            ));
        }
        Ok(Sampler {
            collection,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Seeds the stream from process-local entropy (hashing randomness and
    /// the clock).
    pub fn from_entropy(collection: DistributionCollection) -> Result<Self> {
        use std::collections::hash_map::RandomState;
        use std::hash::{BuildHasher, Hasher};
        let mut h = RandomState::new().build_hasher();
        if let Ok(d) = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH) {
            h.write_u128(d.as_nanos());
        }
        h.write_u32(std::process::id());
        Self::new(collection, h.finish())
    }

    pub fn collection(&self) -> &DistributionCollection {
        &self.collection
    }

    pub fn sample(&mut self) -> Result<SampledNoise> {
        sample_noise(&self.collection, &mut self.rng)
    }
}
