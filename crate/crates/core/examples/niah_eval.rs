//! Scores a checkpoint (or the oracle, random and exhaustive runners when
//! no checkpoint is given) on the needle grid and the in-context suite.
//! Usage: `niah_eval [checkpoint] [trials]`.

use std::path::PathBuf;

use hybrid_mllm::eval::{icl_grid, niah_grid, task_accuracy, EvalGrid, ExhaustiveRunner, ModelRunner, OracleRunner, RandomRunner, Runner};
use hybrid_mllm::mllm::{VisionLanguageModel, VlmConfig};
use hybrid_mllm::training::tasks::{Relation, TaskKind};
use hybrid_mllm::training::SynthTaskSpec;

fn report(label: &str, g: &EvalGrid) {
    println!("{label} [{}] overall {:.3}", g.runner, g.overall().unwrap_or(f64::NAN));
    print!("{}", g.to_csv());
}

fn run(runner: &mut dyn Runner, spec: &SynthTaskSpec, trials: usize) {
    for kind in [TaskKind::ColorQa, TaskKind::Patched, TaskKind::Text] {
        report(&format!("{kind:?}"), &task_accuracy(runner, spec, kind, trials, 3));
    }
    let depths = [0.0, 0.25, 0.5, 0.75, 1.0];
    report("needle", &niah_grid(runner, spec, &[2, 4, 8], &depths, trials, 7));
    for rel in [Relation::SameShape, Relation::SameColor] {
        report(&format!("icl {rel:?}"), &icl_grid(runner, spec, rel, &[0, 1, 2, 4], trials, 11));
    }
}

fn main() -> hybrid_mllm::Result<()> {
    let ckpt = std::env::args().nth(1).map(PathBuf::from);
    let trials = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(40);
    let cfg = VlmConfig::desk();
    let spec = SynthTaskSpec::new(cfg.encoder.image_side, cfg.tokens_per_image());
    match ckpt {
        Some(path) => {
            let vlm = VisionLanguageModel::<f32>::load(&path)?;
            run(&mut ModelRunner { vlm: &vlm }, &spec, trials);
        }
        None => {
            run(&mut OracleRunner, &spec, trials);
            run(&mut RandomRunner, &spec, trials);
            run(&mut ExhaustiveRunner, &spec, trials);
        }
    }
    Ok(())
}
