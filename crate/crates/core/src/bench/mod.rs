//! Cost arithmetic and efficiency measurements.

mod cost;
mod measure;

pub use cost::{
    calibrated_overhead, cost_table, cost_table_csv, flops_estimate, kv_cache_bytes, max_images,
    max_images_closed_form, video_tokens, CostModelConfig, CostRow, ImageBudget, OverheadModel,
    CALIBRATION_BUDGET_BYTES, CALIBRATION_IMAGES,
};
pub use measure::{
    efficiency_ladder, emission_times, fit_exponent, fit_line, ladder_csv, measure_prefill, measure_throughput,
    median, prompt_tokens, session_bytes, sweep_tokens_per_image, throughput, toy_pair, write_series, Clock,
    EfficiencyReport, Measurement, Timing, StubClock, TokenBudgetRow, WallClock,
};
