//! Accuracy grids over task parameters, plus the long-context suites.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::training::tasks::{Relation, SynthTaskSpec, TaskKind};
use crate::training::Example;
use crate::vision::synth::{Color, COLORS};

use super::runner::Runner;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: &str, values: impl IntoIterator<Item = f64>) -> Self {
        Self {
            name: name.into(),
            values: values.into_iter().collect(),
        }
    }
}

/// One grid point. A cell whose runner failed is kept with `error` set and
/// no accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub coords: Vec<f64>,
    pub trials: usize,
    pub correct: usize,
    pub error: Option<String>,
}

impl Cell {
    pub fn accuracy(&self) -> Option<f64> {
        (self.error.is_none() && self.trials > 0).then(|| self.correct as f64 / self.trials as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub runner: String,
    pub axes: Vec<Axis>,
    pub cells: Vec<Cell>,
}

impl EvalGrid {
    pub fn cell(&self, coords: &[f64]) -> Option<&Cell> {
        self.cells.iter().find(|c| c.coords == coords)
    }

    /// Pooled accuracy over every valid cell.
    pub fn overall(&self) -> Option<f64> {
        let (c, t) = self
            .cells
            .iter()
            .filter(|c| c.error.is_none())
            .fold((0, 0), |(c, t), cell| (c + cell.correct, t + cell.trials));
        (t > 0).then(|| c as f64 / t as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for a in &self.axes {
            out.push_str(&a.name);
            out.push(',');
        }
        out.push_str("trials,correct,accuracy,error\n");
        for c in &self.cells {
            for v in &c.coords {
                let _ = write!(out, "{v},");
            }
            let acc = c.accuracy().map(|a| format!("{a:.4}")).unwrap_or_default();
            let err = c.error.as_deref().unwrap_or("").replace([',', '\n'], " ");
            let _ = writeln!(out, "{},{},{acc},{err}", c.trials, c.correct);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Cartesian product of the axis values, first axis slowest.
pub fn grid_points(axes: &[Axis]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|p| {
                axis.values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect()
    })
}

/// Scores `runner` on `trials` generated examples per cell. Cell `i` uses
/// stream `derive_seed(seed, i)` and trial `t` within it
/// `derive_seed(cell_seed, t)`, so any cell can be reproduced alone.
pub fn score_grid(
    runner: &mut dyn Runner,
    generate: &dyn Fn(&[f64], &mut Rng) -> Result<Example>,
    axes: &[Axis],
    trials: usize,
    seed: u64,
) -> EvalGrid {
    let cells = grid_points(axes)
        .into_iter()
        .enumerate()
        .map(|(i, coords)| {
            let cell_seed = rng::derive_seed(seed, i as u64);
            let mut correct = 0;
            let mut error = None;
            for t in 0..trials as u64 {
                let trial_seed = rng::derive_seed(cell_seed, t);
                let outcome = generate(&coords, &mut rng::seeded(trial_seed))
                    .and_then(|ex| Ok(runner.answer(&ex, rng::derive_seed(trial_seed, 1))? == ex.answer));
                match outcome {
                    Ok(ok) => correct += ok as usize,
                    Err(e) => {
                        error = Some(e.to_string());
                        break;
                    }
                }
            }
            Cell {
                coords,
                trials,
                correct,
                error,
            }
        })
        .collect();
    EvalGrid {
        runner: runner.name().to_string(),
        axes: axes.to_vec(),
        cells,
    }
}

/// Needle position for a haystack of `n` frames at relative `depth`.
pub fn needle_index(n: usize, depth: f64) -> usize {
    assert!(n > 0, "empty haystack");
    ((depth.clamp(0.0, 1.0) * (n - 1) as f64).round() as usize).min(n - 1)
}

/// One needle-in-a-haystack instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NiahSpec {
    pub haystack: usize,
    pub depth: f64,
    /// Drawn uniformly when unset.
    pub color: Option<Color>,
}

pub fn gen_niah(tasks: &SynthTaskSpec, spec: &NiahSpec, rng: &mut Rng) -> Result<Example> {
    if spec.haystack == 0 {
        return Err(Error::Precondition("haystack needs at least one frame".into()));
    }
    let color = spec.color.unwrap_or_else(|| COLORS[rng::below(rng, COLORS.len())]);
    let index = needle_index(spec.haystack, spec.depth);
    Ok(tasks.needle(0, spec.haystack, index, color, rng))
}

/// Accuracy over haystack length × needle depth.
pub fn niah_grid(
    runner: &mut dyn Runner,
    tasks: &SynthTaskSpec,
    lengths: &[usize],
    depths: &[f64],
    trials: usize,
    seed: u64,
) -> EvalGrid {
    let axes = [
        Axis::new("frames", lengths.iter().map(|&n| n as f64)),
        Axis::new("depth", depths.iter().copied()),
    ];
    let generate = |c: &[f64], r: &mut Rng| {
        gen_niah(
            tasks,
            &NiahSpec {
                haystack: c[0] as usize,
                depth: c[1],
                color: None,
            },
            r,
        )
    };
    score_grid(runner, &generate, &axes, trials, seed)
}

/// Accuracy on freshly generated examples of one task kind.
pub fn task_accuracy(runner: &mut dyn Runner, tasks: &SynthTaskSpec, kind: TaskKind, trials: usize, seed: u64) -> EvalGrid {
    let axes = [Axis::new("task", [0.0])];
    let generate = |_: &[f64], r: &mut Rng| Ok(tasks.generate(kind, 0, r));
    score_grid(runner, &generate, &axes, trials, seed)
}

/// Accuracy over the number of labeled support pairs.
pub fn icl_grid(
    runner: &mut dyn Runner,
    tasks: &SynthTaskSpec,
    relation: Relation,
    shots: &[usize],
    trials: usize,
    seed: u64,
) -> EvalGrid {
    let axes = [Axis::new("shots", shots.iter().map(|&k| k as f64))];
    let generate = |c: &[f64], r: &mut Rng| Ok(tasks.icl(0, relation, c[0] as usize, r));
    score_grid(runner, &generate, &axes, trials, seed)
}

/// Frame indices kept when sampling `budget` of `n` frames uniformly:
/// `floor(i · n / budget)`. A budget at or above `n` keeps every frame.
pub fn sample_frames(n: usize, budget: usize) -> Vec<usize> {
    if budget >= n {
        return (0..n).collect();
    }
    (0..budget).map(|i| i * n / budget).collect()
}

/// Long video whose frames are subsampled before the runner sees them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSweep {
    pub video_len: usize,
    /// Fixed needle position; uniform when unset.
    pub needle: Option<usize>,
}

pub fn gen_sampled_video(tasks: &SynthTaskSpec, sweep: &FrameSweep, budget: usize, rng: &mut Rng) -> Result<Example> {
    if sweep.video_len == 0 || budget == 0 {
        return Err(Error::Precondition("video and budget need at least one frame".into()));
    }
    let index = match sweep.needle {
        Some(i) if i < sweep.video_len => i,
        Some(i) => {
            return Err(Error::Precondition(format!(
                "needle {i} outside {} frames",
                sweep.video_len
            )))
        }
        None => rng::below(rng, sweep.video_len),
    };
    let color = COLORS[rng::below(rng, COLORS.len())];
    let full = tasks.needle(0, sweep.video_len, index, color, rng);
    let keep = sample_frames(sweep.video_len, budget);
    let frames = keep.iter().map(|&i| full.images[i].clone()).collect::<Vec<_>>();
    let prompt = tasks.proto.video(frames.len(), crate::training::tasks::NEEDLE_QUESTION)?;
    Ok(Example {
        prompt,
        images: frames,
        ..full
    })
}

/// Accuracy as a function of the frame budget.
pub fn sweep_frames(
    runner: &mut dyn Runner,
    tasks: &SynthTaskSpec,
    sweep: FrameSweep,
    budgets: &[usize],
    trials: usize,
    seed: u64,
) -> EvalGrid {
    let axes = [Axis::new("budget", budgets.iter().map(|&b| b as f64))];
    let generate = |c: &[f64], r: &mut Rng| gen_sampled_video(tasks, &sweep, c[0] as usize, r);
    score_grid(runner, &generate, &axes, trials, seed)
}
