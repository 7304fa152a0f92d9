//! Privacy measures: k-nearest-neighbour mutual information and entropy
//! estimates, signal-to-noise ratio and the log-scale surrogate objective.
//!
//! All information quantities are reported in bits.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::tensor_core::Tensor;

/// Default neighbour count for the kNN estimators.
pub const DEFAULT_K: usize = 3;

/// Amplitude of the deterministic per-element perturbation that separates
/// duplicate rows.
const JITTER: f64 = 1e-10;

/// `rows` observations of a `cols`-dimensional variable, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl SampleMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols != data.len() {
            return Err(Error::InvalidArgument(format!(
                "sample matrix {rows}x{cols} cannot hold {} values",
                data.len()
            )));
        }
        Ok(SampleMatrix { rows, cols, data })
    }

    /// One row per tensor, flattened. All tensors must have the same length.
    pub fn from_tensors<'a>(tensors: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let mut data = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for t in tensors {
            match cols {
                None => cols = Some(t.len()),
                Some(c) if c != t.len() => {
                    return Err(Error::shape("sample matrix row", &[c], &[t.len()]))
                }
                _ => {}
            }
            data.extend_from_slice(t.data());
            rows += 1;
        }
        Self::new(rows, cols.unwrap_or(0), data)
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in columns {
                data.push(c[r] as f32);
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mean of the squared entries.
    pub fn mean_square(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / self.data.len() as f64
    }

    /// Returns a matrix with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        SampleMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.rows, self.cols], self.data.clone()).expect("validated dims")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [rows, cols] => Self::new(rows, cols, t.data().to_vec()),
            [rows] => Self::new(rows, 1, t.data().to_vec()),
            _ => Err(Error::InvalidArgument(format!(
                "sample matrix tensors are rank 1 or 2, got {:?}",
                t.shape()
            ))),
        }
    }
}

/// Norm used within each variable's block. The joint space always takes the
/// maximum over the two block distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockNorm {
    #[default]
    #[serde(alias = "max")]
    Chebyshev,
    #[serde(alias = "l2")]
    Euclidean,
}

impl BlockNorm {
    pub fn name(self) -> &'static str {
        match self {
            BlockNorm::Chebyshev => "max",
            BlockNorm::Euclidean => "l2",
        }
    }

    /// `ln` of the unit-ball volume in `dim` dimensions.
    fn ln_unit_ball(self, dim: usize) -> f64 {
        let d = dim as f64;
        match self {
            BlockNorm::Chebyshev => d * LN_2,
            BlockNorm::Euclidean => 0.5 * d * PI.ln() - ln_gamma(0.5 * d + 1.0),
        }
    }
}

impl std::str::FromStr for BlockNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" | "chebyshev" => Ok(BlockNorm::Chebyshev),
            "l2" | "euclidean" => Ok(BlockNorm::Euclidean),
            other => Err(Error::InvalidArgument(format!("unknown norm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub bits: f64,
    pub estimator: &'static str,
    pub k: usize,
    pub n: usize,
}

/// Jittered, column-filtered `f64` copy of a sample matrix.
struct Block {
    cols: usize,
    data: Vec<f64>,
}

impl Block {
    /// Drops zero-variance columns and applies the duplicate-separating jitter.
    fn prepare(m: &SampleMatrix, salt: u64, drop_constant: bool) -> Block {
        let keep: Vec<usize> = (0..m.cols)
            .filter(|&c| {
                !drop_constant || {
                    let first = m.data[c];
                    (1..m.rows).any(|r| m.data[r * m.cols + c] != first)
                }
            })
            .collect();
        let mut data = Vec::with_capacity(m.rows * keep.len());
        for r in 0..m.rows {
            for &c in &keep {
                let v = m.data[r * m.cols + c] as f64;
                data.push(v + JITTER * jitter_unit(salt, r as u64, c as u64));
            }
        }
        Block {
            cols: keep.len(),
            data,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Distances from row `i` to every row (including itself, at index `i`).
    fn distances_from(&self, i: usize, norm: BlockNorm, out: &mut Vec<f64>) {
        out.clear();
        let xi = self.row(i);
        let rows = self.data.len() / self.cols.max(1);
        for j in 0..rows {
            let xj = self.row(j);
            let d = match norm {
                BlockNorm::Chebyshev => xi
                    .iter()
                    .zip(xj)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())),
                BlockNorm::Euclidean => xi
                    .iter()
                    .zip(xj)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
            };
            out.push(d);
        }
    }
}

/// Deterministic value in `[-1, 1)` keyed to (salt, row, column).
fn jitter_unit(salt: u64, row: u64, col: u64) -> f64 {
    let mut z = salt
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(row.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(col.wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

fn check_k(rows: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if rows < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "{rows} samples are too few for k = {k}"
        )));
    }
    Ok(())
}

/// Kraskov–Stögbauer–Grassberger estimate (first algorithm) of `I(X; Y)`
/// with max-norm blocks.
pub fn estimate_mi(x: &SampleMatrix, y: &SampleMatrix, k: usize) -> Result<MiEstimate> {
    estimate_mi_with(x, y, k, BlockNorm::Chebyshev)
}

/// [`estimate_mi`] with a chosen within-block norm. The joint-space distance
/// is the larger of the two block distances.
pub fn estimate_mi_with(
    x: &SampleMatrix,
    y: &SampleMatrix,
    k: usize,
    norm: BlockNorm,
) -> Result<MiEstimate> {
    if x.rows != y.rows {
        return Err(Error::InvalidArgument(format!(
            "row counts differ: {} vs {}",
            x.rows, y.rows
        )));
    }
    let n = x.rows;
    check_k(n, k)?;
    let estimate = |bits| MiEstimate {
        bits,
        estimator: "ksg1",
        k,
        n,
    };
    let bx = Block::prepare(x, 0x51, true);
    let by = Block::prepare(y, 0xA7, true);
    if bx.cols == 0 || by.cols == 0 {
        // A constant variable shares no information.
        return Ok(estimate(0.0));
    }

    let mut dx = Vec::with_capacity(n);
    let mut dy = Vec::with_capacity(n);
    let mut joint = Vec::with_capacity(n);
    let mut acc = 0.0;
    for i in 0..n {
        bx.distances_from(i, norm, &mut dx);
        by.distances_from(i, norm, &mut dy);
        joint.clear();
        joint.extend(
            dx.iter()
                .zip(&dy)
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, (a, b))| a.max(*b)),
        );
        let (_, kth, _) = joint.select_nth_unstable_by(k - 1, f64::total_cmp);
        let eps = *kth;
        let count = |d: &[f64]| {
            d.iter()
                .enumerate()
                .filter(|&(j, &v)| j != i && v < eps)
                .count()
        };
        let nx = count(&dx);
        let ny = count(&dy);
        acc += digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0);
    }
    let nats = digamma(k as f64) + digamma(n as f64) - acc / n as f64;
    Ok(estimate((nats / LN_2).max(0.0)))
}

/// Kozachenko–Leonenko differential entropy estimate with max-norm balls.
pub fn estimate_entropy(x: &SampleMatrix, k: usize) -> Result<f64> {
    estimate_entropy_with(x, k, BlockNorm::Chebyshev)
}

pub fn estimate_entropy_with(x: &SampleMatrix, k: usize, norm: BlockNorm) -> Result<f64> {
    let n = x.rows;
    check_k(n, k)?;
    let block = Block::prepare(x, 0x3D, false);
    let d = block.cols;
    let mut dist = Vec::with_capacity(n);
    let mut sum_ln = 0.0;
    for i in 0..n {
        block.distances_from(i, norm, &mut dist);
        dist.swap_remove(i);
        let (_, kth, _) = dist.select_nth_unstable_by(k - 1, f64::total_cmp);
        sum_ln += kth.max(f64::MIN_POSITIVE).ln();
    }
    let nats =
        digamma(n as f64) - digamma(k as f64) + norm.ln_unit_ball(d) + d as f64 * sum_ln / n as f64;
    Ok(nats / LN_2)
}

/// Description of the additive noise power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoisePower {
    Variance(f64),
    /// Laplace noise with scale `b`, variance `2 b²`.
    Laplace {
        scale: f64,
    },
}

impl NoisePower {
    pub fn variance(self) -> f64 {
        match self {
            NoisePower::Variance(v) => v,
            NoisePower::Laplace { scale } => 2.0 * scale * scale,
        }
    }
}

/// Signal-to-noise ratio `E[a²] / σ²(n)`.
pub fn snr(activations: &SampleMatrix, noise: NoisePower) -> Result<f64> {
    snr_from_power(activations.mean_square(), noise)
}

pub fn snr_from_power(signal_power: f64, noise: NoisePower) -> Result<f64> {
    let var = noise.variance();
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive and finite, got {var}"
        )));
    }
    Ok(signal_power / var)
}

/// `ln(b_y + b_w) - ln(b_w) + λ·ce_sum`, reported next to training metrics.
pub fn surrogate_objective(b_y: f64, b_w: f64, lambda: f64, ce_sum: f64) -> Result<f64> {
    if !(b_y > 0.0 && b_w > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scales must be positive, got b_y = {b_y}, b_w = {b_w}"
        )));
    }
    Ok((b_y + b_w).ln() - b_w.ln() + lambda * ce_sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gaussian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| gaussian(&mut rng)).collect()
    }

    #[test]
    fn snr_direct_formula_and_scale_law() {
        let a = SampleMatrix::new(2, 1, vec![2.0, -2.0]).unwrap();
        assert_eq!(snr(&a, NoisePower::Variance(2.0)).unwrap(), 2.0);
        let s1 = snr(&a, NoisePower::Laplace { scale: 1.0 }).unwrap();
        let s2 = snr(&a, NoisePower::Laplace { scale: 2.0 }).unwrap();
        assert!((s1 / s2 - 4.0).abs() < 1e-12);
        assert!(snr(&a, NoisePower::Variance(0.0)).is_err());
    }

    #[test]
    fn surrogate_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((surrogate_objective(1.0, 1.0, 0.0, 3.0).unwrap() - ln2).abs() < 1e-12);
        assert!((surrogate_objective(1.0, 1.0, 1.0, 0.5).unwrap() - (ln2 + 0.5)).abs() < 1e-12);
        assert!(surrogate_objective(1.0, 1e12, 0.0, 0.0).unwrap() < 1e-11);
        assert!(surrogate_objective(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(surrogate_objective(1.0, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn too_few_samples() {
        let x = SampleMatrix::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        assert!(estimate_mi(&x, &x, 3).is_err());
        assert!(estimate_entropy(&x, 3).is_err());
        assert!(estimate_mi(&x, &x, 0).is_err());
    }

    #[test]
    fn constant_variable_has_zero_information() {
        let x = SampleMatrix::from_columns(&[normals(200, 1)]).unwrap();
        let c = SampleMatrix::new(200, 2, vec![1.5; 400]).unwrap();
        assert_eq!(estimate_mi(&x, &c, 3).unwrap().bits, 0.0);
    }

    #[test]
    fn duplicate_rows_stay_finite() {
        let x = SampleMatrix::new(50, 1, vec![0.25; 50]).unwrap();
        let y = SampleMatrix::from_columns(&[normals(50, 2)]).unwrap();
        let h = estimate_entropy(&x, 3).unwrap();
        assert!(h.is_finite());
        assert!(estimate_mi(&y, &y, 3).unwrap().bits.is_finite());
    }

    #[test]
    fn dependent_beats_independent_small_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = normals(500, 5);
        let ys: Vec<f64> = xs.iter().map(|x| x + 0.3 * gaussian(&mut rng)).collect();
        let zs = normals(500, 6);
        let x = SampleMatrix::from_columns(&[xs]).unwrap();
        let dep = estimate_mi(&x, &SampleMatrix::from_columns(&[ys]).unwrap(), 3).unwrap();
        let ind = estimate_mi(&x, &SampleMatrix::from_columns(&[zs]).unwrap(), 3).unwrap();
        assert!(dep.bits > 1.0 && ind.bits < 0.1, "{dep:?} {ind:?}");
        let _: f64 = rng.random();
    }

    #[test]
    fn jitter_is_small_and_deterministic() {
        for r in 0..100 {
            let u = jitter_unit(1, r, 3);
            assert!((-1.0..1.0).contains(&u));
            assert_eq!(u, jitter_unit(1, r, 3));
        }
    }
}
