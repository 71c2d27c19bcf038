//! Progressive multimodal training: stage definitions and freezing rules,
//! the learning-rate law and optimizer, synthetic task generators, and the
//! stage trainer with checkpoint chaining.

mod schedule;
mod stage;
pub mod tasks;
mod trainer;

pub use schedule::{lr_schedule, Optimizer, OptimizerConfig};
pub use stage::{
    freeze_mask, sample_mixture, sample_sources, Component, MixtureSource, MixtureSpec, Stage, StageConfig,
    REFERENCE_ALIGN_ITEMS, REFERENCE_MULTI_SFT_ITEMS, REFERENCE_PEAK_LR, REFERENCE_SINGLE_SFT_ITEMS, REFERENCE_WARMUP_FRACTION,
};
pub use tasks::{Example, Relation, SynthTaskSpec, TaskKind};
pub use trainer::{
    build_corpus, checkpoint_hash, component_checksums, desk_stages, evaluate_loss, example_tokens, featurize, loss_targets,
    run_chain, stage_checkpoint_path, train_stage, StepRecord, TrainingReport,
};
