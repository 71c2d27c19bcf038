//! Evaluation harness: runners, parameter grids and the needle and
//! in-context suites.

mod grid;
mod runner;

pub use grid::{
    gen_niah, gen_sampled_video, grid_points, icl_grid, needle_index, niah_grid, sample_frames, score_grid,
    sweep_frames, task_accuracy, Axis, Cell, EvalGrid, FrameSweep, NiahSpec,
};
pub use runner::{dominant_color, ExhaustiveRunner, ModelRunner, OracleRunner, RandomRunner, Runner};
