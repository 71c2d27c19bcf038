//! Analytic cost tables for the dense and mixture-of-experts presets, and
//! the image-count capacity curve over memory budgets.

use hybrid_mllm::bench::{
    calibrated_overhead, cost_table, max_images, max_images_closed_form, CostModelConfig, ImageBudget,
};

fn main() -> hybrid_mllm::Result<()> {
    for (name, cfg) in [("dense 9B", CostModelConfig::dense_9b()), ("MoE A13B", CostModelConfig::moe_a13b())] {
        println!("== {name}");
        for r in cost_table(&cfg)? {
            println!("  {:<12} {:>18.6} {:<7} {}", r.quantity, r.value, r.unit, r.inputs);
        }
    }
    let cfg = CostModelConfig::dense_9b();
    let overhead = calibrated_overhead(&cfg)?;
    println!("== capacity, dense 9B, int8 weights");
    println!("  fixed {:.3} GB, per image {:.3} MB", overhead.required(&cfg, 0) / 1e9, overhead.marginal(&cfg) / 1e6);
    for gb in [16.0, 24.0, 40.0, 48.0, 80.0, 160.0] {
        let budget = gb * 1e9;
        match max_images(budget, &cfg, &overhead) {
            ImageBudget::Fits(n) => println!(
                "  {gb:>5} GB: {n:>5} images (closed form {:.0})",
                max_images_closed_form(budget, &cfg, &overhead).unwrap_or(f64::NAN)
            ),
            ImageBudget::Infeasible { fixed_bytes } => {
                println!("  {gb:>5} GB: infeasible, fixed cost {:.1} GB", fixed_bytes / 1e9)
            }
        }
    }
    Ok(())
}
