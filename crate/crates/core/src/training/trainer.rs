//! The stage trainer and the progressive chain.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mllm::VisionLanguageModel;
use crate::model::{checkpoint, ModelInput};
use crate::params::TensorMap;
use crate::protocol::{batch_len, plan_packing, BYTE_BASE, EOS};
use crate::rng;
use crate::tensor::{Scalar, Tape, Tensor, Var};

use super::schedule::{lr_schedule, Optimizer};
use super::stage::{sample_sources, Component, Stage, StageConfig};
use super::tasks::{Example, SynthTaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: Stage,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
    pub tokens: usize,
    pub items: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub stage: Stage,
    pub steps: Vec<StepRecord>,
    /// Corpus item ids in the order they were consumed.
    pub consumed: Vec<u64>,
    pub checksums_before: BTreeMap<Component, String>,
    pub checksums_after: BTreeMap<Component, String>,
    /// SHA-256 of the checkpoint this stage started from, if any.
    pub parent_checkpoint: Option<String>,
    /// SHA-256 of the checkpoint written after this stage.
    pub checkpoint: Option<String>,
}

impl TrainingReport {
    /// Mean loss over the first tenth of the steps (at least one).
    pub fn initial_loss(&self) -> f64 {
        let w = self.window();
        mean(self.steps[..w].iter().map(|s| s.loss))
    }

    /// Mean loss over the last tenth of the steps (at least one).
    pub fn final_loss(&self) -> f64 {
        let w = self.window();
        mean(self.steps[self.steps.len() - w..].iter().map(|s| s.loss))
    }

    fn window(&self) -> usize {
        (self.steps.len() / 10).max(1).min(self.steps.len())
    }

    /// Components whose parameters did not change.
    pub fn unchanged(&self) -> Vec<Component> {
        Component::ALL
            .into_iter()
            .filter(|c| self.checksums_before.get(c) == self.checksums_after.get(c))
            .collect()
    }

    /// One JSON object per step followed by a summary object.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        for s in &self.steps {
            let mut v = serde_json::to_value(s)?;
            v["record"] = "step".into();
            writeln!(w, "{v}").map_err(io)?;
        }
        let summary = serde_json::json!({
            "record": "summary",
            "stage": self.stage,
            "steps": self.steps.len(),
            "items": self.consumed.len(),
            "initial_loss": self.initial_loss(),
            "final_loss": self.final_loss(),
            "checksums_before": self.checksums_before,
            "checksums_after": self.checksums_after,
            "parent_checkpoint": self.parent_checkpoint,
            "checkpoint": self.checkpoint,
        });
        writeln!(w, "{summary}").map_err(io)?;
        w.flush().map_err(io)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// SHA-256 over names and little-endian values of each component's
/// parameters, in name order.
pub fn component_checksums<S: Scalar>(map: &TensorMap<S>) -> BTreeMap<Component, String> {
    let mut hashers: BTreeMap<Component, Sha256> = Component::ALL.into_iter().map(|c| (c, Sha256::new())).collect();
    for (name, t) in map {
        let h = hashers.get_mut(&Component::of(name)).expect("every component has a hasher");
        h.update(name.as_bytes());
        h.update(t.to_le_bytes());
    }
    hashers.into_iter().map(|(c, h)| (c, hex::encode(h.finalize()))).collect()
}

/// Token stream of an example: prompt followed by response.
pub fn example_tokens(ex: &Example) -> Vec<usize> {
    let mut ids = ex.prompt.render();
    ids.extend_from_slice(&ex.response);
    ids
}

/// Next-token targets of an example: response tokens only, or every text
/// token (special tokens and image slots are never targets).
pub fn loss_targets(ex: &Example, response_only: bool) -> Vec<Option<usize>> {
    let ids = example_tokens(ex);
    let prompt_len = ex.prompt.len();
    (0..ids.len())
        .map(|j| {
            let next = *ids.get(j + 1)?;
            let keep = if response_only {
                j + 1 >= prompt_len
            } else {
                next >= BYTE_BASE
            };
            keep.then_some(next)
        })
        .collect()
}

/// Pooled encoder features of every image of every example.
pub fn featurize<S: Scalar>(vlm: &VisionLanguageModel<S>, corpus: &[Example]) -> Result<Vec<Vec<Tensor<S>>>> {
    corpus
        .iter()
        .map(|ex| ex.images.iter().map(|img| vlm.features(img)).collect())
        .collect()
}

struct Batch<S: Scalar> {
    ids: Vec<usize>,
    targets: Vec<Option<usize>>,
    slots: Vec<usize>,
    features: Vec<Var<S>>,
    items: Vec<u64>,
}

fn assemble<S: Scalar>(corpus: &[Example], features: &[Vec<Tensor<S>>], members: &[usize], response_only: bool) -> Batch<S> {
    let mut b = Batch {
        ids: Vec::new(),
        targets: Vec::new(),
        slots: Vec::new(),
        features: Vec::new(),
        items: Vec::new(),
    };
    for (k, &m) in members.iter().enumerate() {
        if k > 0 {
            b.ids.push(EOS);
            b.targets.push(None);
        }
        let ex = &corpus[m];
        let start = b.ids.len();
        for (index, range) in ex.prompt.image_positions() {
            b.slots.extend(range.map(|p| p + start));
            b.features.push(Var::constant(features[m][index].clone()));
        }
        b.ids.extend(example_tokens(ex));
        b.targets.extend(loss_targets(ex, response_only));
        b.items.push(ex.id);
    }
    b
}

/// Mean masked next-token loss of `vlm` over `corpus`, one example at a
/// time without packing.
pub fn evaluate_loss<S: Scalar>(vlm: &VisionLanguageModel<S>, corpus: &[Example], response_only: bool) -> Result<f64> {
    let features = featurize(vlm, corpus)?;
    let mut total = 0.0;
    for i in 0..corpus.len() {
        let b = assemble(corpus, &features, &[i], response_only);
        let embeds = match b.features.is_empty() {
            true => None,
            false => Some(vlm.projector.forward(&Var::concat(&b.features, 0)?)?),
        };
        let out = vlm.model.forward(ModelInput {
            ids: &b.ids,
            image_slots: &b.slots,
            image_embeds: embeds.as_ref(),
        })?;
        total += out.logits.cross_entropy_masked(&b.targets)?.value().item().f64();
    }
    Ok(total / corpus.len().max(1) as f64)
}

/// Generates the stage corpus: sources drawn by mixture weight, each draw
/// a fresh example from its own seed stream.
pub fn build_corpus(spec: &SynthTaskSpec, cfg: &StageConfig, seed: u64) -> Result<Vec<Example>> {
    let picks = sample_sources(&cfg.mixture, cfg.items, seed)?;
    Ok(picks
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut r = rng::seeded(rng::derive_seed(seed, i as u64 + 1));
            spec.generate(cfg.mixture.sources[s].task, i as u64, &mut r)
        })
        .collect())
}

/// Desk configuration and corpus of every stage, the corpus of stage `i`
/// drawn from `derive_seed(seed, 1000 + i)`.
pub fn desk_stages(spec: &SynthTaskSpec, seed: u64) -> Result<Vec<(StageConfig, Vec<Example>)>> {
    Stage::ALL
        .into_iter()
        .enumerate()
        .map(|(i, stage)| {
            let cfg = StageConfig::desk(stage);
            let corpus = build_corpus(spec, &cfg, rng::derive_seed(seed, 1000 + i as u64))?;
            Ok((cfg, corpus))
        })
        .collect()
}

/// Trains the stage's components on `corpus` and updates `vlm` in place.
///
/// Each epoch shuffles the corpus, packs it greedily to `pack_len` and
/// takes one optimizer step per pack. Frozen components are never written.
pub fn train_stage<S: Scalar>(
    vlm: &mut VisionLanguageModel<S>,
    cfg: &StageConfig,
    corpus: &[Example],
    seed: u64,
) -> Result<TrainingReport> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Precondition(format!("stage {} has an empty corpus", cfg.stage.name())));
    }
    if cfg.trainable.contains(&Component::Encoder) {
        return Err(Error::InvalidConfig(vec!["encoder training is not supported".into()]));
    }
    let features = featurize(vlm, corpus)?;
    let lengths: Vec<usize> = corpus.iter().map(Example::len).collect();
    let mut plan = Vec::new();
    let mut r = rng::seeded(seed);
    for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        rng::shuffle(&mut r, &mut order);
        let shuffled: Vec<usize> = order.iter().map(|&i| lengths[i]).collect();
        for members in plan_packing(&shuffled, cfg.pack_len)? {
            plan.push(members.into_iter().map(|k| order[k]).collect::<Vec<_>>());
        }
    }

    let mut vcfg = vlm.cfg.clone();
    vcfg.model.moe_aux_loss = cfg.aux_loss_weight > 0.0;
    let mut map = vlm.to_map();
    let checksums_before = component_checksums(&map);
    let mut opt = Optimizer::new(cfg.optimizer);
    let trainable = |n: &str| cfg.is_trainable(n);
    let total = plan.len();
    let mut steps = Vec::with_capacity(total);
    let mut consumed = Vec::with_capacity(corpus.len() * cfg.epochs);

    for (step, members) in plan.iter().enumerate() {
        let b = assemble(corpus, &features, members, cfg.stage.response_only());
        debug_assert_eq!(b.ids.len(), batch_len(&lengths, members));
        let non_finite = || Error::NonFiniteLoss {
            stage: cfg.stage.name().into(),
            step,
            records: b.items.clone(),
        };
        let lr = lr_schedule(step, total, cfg.peak_lr, cfg.warmup_fraction);
        let step_result = (|| -> Result<(f64, HashMap<String, Tensor<S>>)> {
            let tape = Tape::new();
            let bound = VisionLanguageModel::bind(&vcfg, &map, &tape, &trainable)?;
            let embeds = match b.features.is_empty() {
                true => None,
                false => Some(bound.projector.forward(&Var::concat(&b.features, 0)?)?),
            };
            let out = bound.model.forward(ModelInput {
                ids: &b.ids,
                image_slots: &b.slots,
                image_embeds: embeds.as_ref(),
            })?;
            let mut loss = out.logits.cross_entropy_masked(&b.targets)?;
            if let Some(aux) = out.aux_loss.filter(|_| cfg.aux_loss_weight > 0.0) {
                loss = loss.add(&aux.scale(cfg.aux_loss_weight)?)?;
            }
            let loss_value = loss.value().item().f64();
            if !loss_value.is_finite() {
                return Err(non_finite());
            }
            let g = loss.backward()?;
            let grads: HashMap<String, Tensor<S>> = bound
                .named_params()
                .filter(|(n, _)| trainable(n))
                .map(|(n, v)| (n.to_string(), g.get_or_zeros(v)))
                .collect();
            Ok((loss_value, grads))
        })();
        let (loss_value, grads) = step_result.map_err(|e| match e {
            Error::NonFinite { .. } => non_finite(),
            e => e,
        })?;
        let updates = map
            .iter_mut()
            .filter_map(|(n, t)| grads.get(n).map(|g| (n.as_str(), Arc::make_mut(t), g)))
            .collect();
        let grad_norm = opt.step(lr, updates);
        consumed.extend_from_slice(&b.items);
        steps.push(StepRecord {
            stage: cfg.stage,
            step,
            loss: loss_value,
            lr,
            grad_norm,
            tokens: b.ids.len(),
            items: b.items,
        });
    }

    *vlm = VisionLanguageModel::from_map(&vlm.cfg, &map)?;
    Ok(TrainingReport {
        stage: cfg.stage,
        steps,
        consumed,
        checksums_before,
        checksums_after: component_checksums(&map),
        parent_checkpoint: None,
        checkpoint: None,
    })
}

/// SHA-256 of the checkpoint bytes of `vlm`, writing them to `path` when
/// given.
pub fn checkpoint_hash<S: Scalar>(vlm: &VisionLanguageModel<S>, path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => vlm.save(p),
        None => {
            let meta = serde_json::json!({ "config": vlm.cfg });
            Ok(checkpoint::sha256_hex(&checkpoint::encode(meta, &vlm.to_map())?))
        }
    }
}

/// Checkpoint file name of a stage inside a run directory.
pub fn stage_checkpoint_path(dir: &Path, stage: Stage) -> PathBuf {
    dir.join(format!("{}.ckpt", stage.name()))
}

/// Runs stages in order, each resuming from the previous one's weights.
/// Reports chain checkpoint hashes: every stage's parent is its
/// predecessor's checkpoint.
pub fn run_chain<S: Scalar>(
    vlm: &mut VisionLanguageModel<S>,
    stages: &[(StageConfig, Vec<Example>)],
    dir: Option<&Path>,
    seed: u64,
) -> Result<Vec<TrainingReport>> {
    let mut parent = Some(checkpoint_hash(vlm, None)?);
    let mut reports = Vec::with_capacity(stages.len());
    for (i, (cfg, corpus)) in stages.iter().enumerate() {
        let mut report = train_stage(vlm, cfg, corpus, rng::derive_seed(seed, i as u64))?;
        let path = dir.map(|d| stage_checkpoint_path(d, cfg.stage));
        let hash = checkpoint_hash(vlm, path.as_deref())?;
        report.parent_checkpoint = parent.replace(hash.clone());
        report.checkpoint = Some(hash);
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mllm::VlmConfig;

    #[test]
    fn targets_follow_masking_rule() {
        let spec = SynthTaskSpec::new(24, 9);
        let ex = spec.caption(0, &mut rng::seeded(1));
        let all = loss_targets(&ex, false);
        let resp = loss_targets(&ex, true);
        assert_eq!(all.len(), ex.len());
        // "a <color> <shape>" is three word tokens after image and newline.
        assert_eq!(all.iter().flatten().count(), 3);
        assert_eq!(resp.iter().flatten().count(), 3);
        let q = spec.single_qa(0, &mut rng::seeded(1));
        assert_eq!(loss_targets(&q, true).iter().flatten().count(), 1);
        assert!(loss_targets(&q, false).iter().flatten().count() > 1);
    }

    #[test]
    fn frozen_components_are_untouched() {
        let cfg = VlmConfig::desk();
        let mut vlm = VisionLanguageModel::<f32>::random(&cfg, 1).unwrap();
        let spec = SynthTaskSpec::new(24, 9);
        let mut st = StageConfig::desk(Stage::Align);
        st.items = 6;
        st.pack_len = 64;
        let corpus = build_corpus(&spec, &st, 3).unwrap();
        let report = train_stage(&mut vlm, &st, &corpus, 0).unwrap();
        assert_eq!(report.unchanged(), vec![Component::Encoder, Component::Llm]);
        let mut ids = report.consumed.clone();
        ids.sort_unstable();
        assert_eq!(ids, (0..6).collect::<Vec<u64>>());
    }
}
