//! Spatial 2x2 pooling versus flat stride pooling on a block-structured
//! patch grid: 2D pooling keeps quadrants intact, 1D pooling mixes rows.

use hybrid_mllm::tensor::Tensor;
use hybrid_mllm::vision::{pool1d, pool2d, upsample, PatchGrid, PoolMode};

fn show(title: &str, side: usize, values: &[f64]) {
    println!("{title}");
    for row in values.chunks(side) {
        println!("  {}", row.iter().map(|v| format!("{v:5.1}")).collect::<String>());
    }
}

fn main() -> hybrid_mllm::Result<()> {
    let side = 4;
    // Quadrant ids 0..3 laid out as 2x2 blocks.
    let data: Vec<f64> = (0..side * side)
        .map(|i| ((i / side) / 2 * 2 + (i % side) / 2) as f64)
        .collect();
    let grid = PatchGrid::new(side, Tensor::<f64>::from_f64(&[side * side, 1], &data)?)?;
    show("grid", side, &data);
    let p2 = pool2d(&grid, 2, PoolMode::Mean)?;
    show("pool2d mean", p2.side, p2.tokens.data());
    show("pool2d max", p2.side, pool2d(&grid, 2, PoolMode::Max)?.tokens.data());
    show("pool1d stride 4", 4, pool1d(&grid, 4)?.data());
    let up = upsample(&p2, 2)?;
    show("upsample(pool2d)", up.side, up.tokens.data());
    Ok(())
}
