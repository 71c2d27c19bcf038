use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::PatchGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    #[default]
    Mean,
    Max,
}

/// Aggregates each `factor × factor` spatial block into one token, keeping
/// raster order of the blocks.
pub fn pool2d<S: Scalar>(grid: &PatchGrid<S>, factor: usize, mode: PoolMode) -> Result<PatchGrid<S>> {
    if factor == 0 || grid.side % factor != 0 {
        return Err(Error::shape("pool2d", format!("grid side {} not divisible by {factor}", grid.side)));
    }
    let (side, d) = (grid.side / factor, grid.width());
    let inv = S::of(1.0 / (factor * factor) as f64);
    let mut data = Vec::with_capacity(side * side * d);
    for by in 0..side {
        for bx in 0..side {
            let mut acc = match mode {
                PoolMode::Mean => vec![S::zero(); d],
                PoolMode::Max => vec![S::neg_infinity(); d],
            };
            for y in by * factor..(by + 1) * factor {
                for x in bx * factor..(bx + 1) * factor {
                    for (a, &v) in acc.iter_mut().zip(grid.token(y, x)) {
                        *a = match mode {
                            PoolMode::Mean => *a + v,
                            PoolMode::Max => a.max(v),
                        };
                    }
                }
            }
            if mode == PoolMode::Mean {
                acc.iter_mut().for_each(|a| *a *= inv);
            }
            data.extend(acc);
        }
    }
    PatchGrid::new(side, Tensor::new(vec![side * side, d], data)?)
}

/// Mean over each run of `factor` consecutive raster-order tokens.
pub fn pool1d<S: Scalar>(grid: &PatchGrid<S>, factor: usize) -> Result<Tensor<S>> {
    let n = grid.len();
    if factor == 0 || n % factor != 0 {
        return Err(Error::shape("pool1d", format!("{n} tokens not divisible by {factor}")));
    }
    let d = grid.width();
    let inv = S::of(1.0 / factor as f64);
    let mut data = vec![S::zero(); n / factor * d];
    for i in 0..n {
        for (a, &v) in data[(i / factor) * d..(i / factor + 1) * d].iter_mut().zip(grid.tokens.row(i)) {
            *a += v * inv;
        }
    }
    Tensor::new(vec![n / factor, d], data)
}

/// Replicates each token into a `factor × factor` block.
pub fn upsample<S: Scalar>(grid: &PatchGrid<S>, factor: usize) -> Result<PatchGrid<S>> {
    let side = grid.side * factor;
    let d = grid.width();
    let mut data = Vec::with_capacity(side * side * d);
    for y in 0..side {
        for x in 0..side {
            data.extend_from_slice(grid.token(y / factor, x / factor));
        }
    }
    PatchGrid::new(side, Tensor::new(vec![side * side, d], data)?)
}
