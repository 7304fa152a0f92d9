//! Browser bindings for three pieces of the noise pipeline: order-preserving
//! resampling, the Laplace fit and its histogram check, and the KSG mutual
//! information estimate on correlated Gaussians.
//!
//! The computations live in [`ops`] so they can be tested natively; the
//! exported functions only convert errors.

use wasm_bindgen::prelude::*;

pub mod ops {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use splitnoise::collector::{
        descending_order, fit_laplace as fit, histogram_sse, CollectorConfig,
        DistributionCollection, LaplaceParams,
    };
    use splitnoise::metrics::{estimate_mi, SampleMatrix};
    use splitnoise::sampler::sample_noise;
    use splitnoise::tensor_core::Tensor;

    pub type Result<T> = std::result::Result<T, String>;

    fn tensor(values: &[f32]) -> Result<Tensor> {
        Tensor::new(vec![values.len()], values.to_vec()).map_err(|e| e.to_string())
    }

    pub fn rank_order(values: &[f32]) -> Vec<u32> {
        descending_order(values)
    }

    /// `[location, scale, sse]`.
    pub fn fit_laplace(values: &[f32], bins: usize) -> Result<Vec<f64>> {
        let t = tensor(values)?;
        let p = fit(&t).map_err(|e| e.to_string())?;
        let sse = histogram_sse(&t, &p, bins).map_err(|e| e.to_string())?;
        Ok(vec![p.location, p.scale, sse])
    }

    /// Fresh Laplace draws with the fitted parameters of `values`, arranged
    /// in its rank order.
    pub fn resample(values: &[f32], seed: u64) -> Result<Vec<f32>> {
        let t = tensor(values)?;
        let mut c = DistributionCollection::new([0; 32], 1, &[values.len()]);
        let gate = CollectorConfig {
            sse_threshold: f64::INFINITY,
            bins: 2,
        };
        c.try_collect(&t, 1.0, 0, &gate)
            .map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sample_noise(&c, &mut rng).map_err(|e| e.to_string())?;
        Ok(s.values.into_data())
    }

    pub fn laplace_draws(location: f64, scale: f64, n: usize, seed: u64) -> Result<Vec<f32>> {
        let p = LaplaceParams::new(location, scale).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n).map(|_| p.sample(&mut rng) as f32).collect())
    }

    /// `[estimate, exact]` in bits for a bivariate Gaussian with correlation
    /// `rho`.
    pub fn gaussian_mi(rho: f64, n: usize, k: usize, seed: u64) -> Result<Vec<f64>> {
        if !(-1.0 < rho && rho < 1.0) {
            return Err(format!("rho must be in (-1, 1), got {rho}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = (1.0 - rho * rho).sqrt();
        let (mut x, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let u: f64 = StandardNormal.sample(&mut rng);
            let v: f64 = StandardNormal.sample(&mut rng);
            x.push(u);
            y.push(rho * u + c * v);
        }
        let x = SampleMatrix::from_columns(&[x]).map_err(|e| e.to_string())?;
        let y = SampleMatrix::from_columns(&[y]).map_err(|e| e.to_string())?;
        let est = estimate_mi(&x, &y, k).map_err(|e| e.to_string())?;
        Ok(vec![est.bits, -0.5 * (1.0 - rho * rho).log2()])
    }
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen(js_name = rankOrder)]
pub fn rank_order(values: &[f32]) -> Vec<u32> {
    ops::rank_order(values)
}

#[wasm_bindgen(js_name = fitLaplace)]
pub fn fit_laplace(values: &[f32], bins: usize) -> Result<Vec<f64>, JsError> {
    ops::fit_laplace(values, bins).map_err(js)
}

#[wasm_bindgen]
pub fn resample(values: &[f32], seed: u32) -> Result<Vec<f32>, JsError> {
    ops::resample(values, seed.into()).map_err(js)
}

#[wasm_bindgen(js_name = laplaceDraws)]
pub fn laplace_draws(location: f64, scale: f64, n: usize, seed: u32) -> Result<Vec<f32>, JsError> {
    ops::laplace_draws(location, scale, n, seed.into()).map_err(js)
}

#[wasm_bindgen(js_name = gaussianMi)]
pub fn gaussian_mi(rho: f64, n: usize, k: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    ops::gaussian_mi(rho, n, k, seed.into()).map_err(js)
}
