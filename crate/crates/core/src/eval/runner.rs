//! Answer producers scored by the evaluation grids.

use crate::error::{Error, Result};
use crate::mllm::VisionLanguageModel;
use crate::model::argmax;
use crate::rng;
use crate::tensor::Scalar;
use crate::training::Example;
use crate::vision::synth::COLORS;
use crate::vision::Image;

/// Produces one answer from an example's closed choice set. `seed` is the
/// trial's own stream, so runs are reproducible cell by cell.
pub trait Runner {
    fn name(&self) -> &str;
    fn answer(&mut self, ex: &Example, seed: u64) -> Result<String>;
}

/// Reads the ground truth from the generation parameters.
pub struct OracleRunner;

impl Runner for OracleRunner {
    fn name(&self) -> &str {
        "oracle"
    }

    fn answer(&mut self, ex: &Example, _seed: u64) -> Result<String> {
        Ok(ex.answer.clone())
    }
}

/// Uniform guess over the choices.
pub struct RandomRunner;

impl Runner for RandomRunner {
    fn name(&self) -> &str {
        "random"
    }

    fn answer(&mut self, ex: &Example, seed: u64) -> Result<String> {
        if ex.choices.is_empty() {
            return Err(Error::Precondition("example has no choice set".into()));
        }
        let mut r = rng::seeded(seed);
        Ok(ex.choices[rng::below(&mut r, ex.choices.len())].clone())
    }
}

/// Searches the visible images for a saturated (coloured) pixel region and
/// names the nearest palette colour; guesses uniformly when every image is
/// gray.
pub struct ExhaustiveRunner;

/// Palette colour of the most saturated image, if any is saturated.
pub fn dominant_color(images: &[Image]) -> Option<&'static str> {
    let mut best: Option<(f32, [f32; 3])> = None;
    for img in images {
        let mut sum = [0.0f32; 3];
        let mut n = 0usize;
        for p in img.data().chunks(img.channels()) {
            let (hi, lo) = p.iter().fold((f32::MIN, f32::MAX), |(h, l), &v| (h.max(v), l.min(v)));
            if hi - lo > 0.4 {
                sum.iter_mut().zip(p).for_each(|(s, &v)| *s += v);
                n += 1;
            }
        }
        let frac = n as f32 / (img.height() * img.width()) as f32;
        if n > 0 && best.is_none_or(|(f, _)| frac > f) {
            best = Some((frac, sum.map(|s| s / n as f32)));
        }
    }
    let (_, mean) = best?;
    COLORS
        .iter()
        .min_by(|a, b| {
            let d = |c: [f32; 3]| c.iter().zip(&mean).map(|(x, y)| (x - y).powi(2)).sum::<f32>();
            d(a.rgb()).total_cmp(&d(b.rgb()))
        })
        .map(|c| c.name())
}

impl Runner for ExhaustiveRunner {
    fn name(&self) -> &str {
        "exhaustive"
    }

    fn answer(&mut self, ex: &Example, seed: u64) -> Result<String> {
        match dominant_color(&ex.images) {
            Some(c) if ex.choices.iter().any(|x| x == c) => Ok(c.to_string()),
            _ => RandomRunner.answer(ex, seed),
        }
    }
}

/// Constrained decoding with a model: the choice with the highest
/// log-likelihood as a continuation of the prompt.
pub struct ModelRunner<'a, S: Scalar> {
    pub vlm: &'a VisionLanguageModel<S>,
}

impl<S: Scalar> ModelRunner<'_, S> {
    /// Log-likelihood of each choice.
    pub fn scores(&self, ex: &Example) -> Result<Vec<f64>> {
        let vocab = crate::protocol::Vocabulary::default();
        let features = ex
            .images
            .iter()
            .map(|img| self.vlm.features(img))
            .collect::<Result<Vec<_>>>()?;
        let choices: Vec<Vec<usize>> = ex.choices.iter().map(|c| vocab.encode(c)).collect();
        if choices.iter().all(|c| c.len() == 1) {
            let logits = self.vlm.next_logits(&ex.prompt, &features)?;
            let lp = log_softmax(logits.data());
            return Ok(choices.iter().map(|c| lp[c[0]]).collect());
        }
        choices
            .iter()
            .map(|c| {
                let mut seq = ex.prompt.clone();
                seq.push_text(c.iter().copied());
                let logits = self.vlm.logits(&seq, &features)?;
                let start = ex.prompt.len();
                Ok(c.iter()
                    .enumerate()
                    .map(|(j, &tok)| log_softmax(logits.row(start + j - 1))[tok])
                    .sum())
            })
            .collect()
    }
}

fn log_softmax<S: Scalar>(row: &[S]) -> Vec<f64> {
    let m = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
    let z = row.iter().map(|v| (v.f64() - m).exp()).sum::<f64>().ln() + m;
    row.iter().map(|v| v.f64() - z).collect()
}

impl<S: Scalar> Runner for ModelRunner<'_, S> {
    fn name(&self) -> &str {
        "model"
    }

    fn answer(&mut self, ex: &Example, _seed: u64) -> Result<String> {
        if ex.choices.is_empty() {
            return Err(Error::Precondition("example has no choice set".into()));
        }
        let s = self.scores(ex)?;
        Ok(ex.choices[argmax(&s)].clone())
    }
}
