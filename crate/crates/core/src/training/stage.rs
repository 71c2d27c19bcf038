//! Training stages, freezing rules and mixture sampling.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::DESK_PACK_LEN;
use crate::rng;

use super::schedule::OptimizerConfig;
use super::tasks::TaskKind;

/// Full-scale corpus sizes per stage, kept as metadata only.
pub const REFERENCE_ALIGN_ITEMS: usize = 600_000;
pub const REFERENCE_SINGLE_SFT_ITEMS: usize = 932_000;
pub const REFERENCE_MULTI_SFT_ITEMS: usize = 750_000;
pub const REFERENCE_PEAK_LR: f64 = 1e-5;
pub const REFERENCE_WARMUP_FRACTION: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Text,
    Align,
    SingleSft,
    MultiSft,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Text, Stage::Align, Stage::SingleSft, Stage::MultiSft];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Text => "text",
            Stage::Align => "align",
            Stage::SingleSft => "single-sft",
            Stage::MultiSft => "multi-sft",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Stage whose checkpoint this one resumes from.
    pub fn previous(self) -> Option<Stage> {
        match self {
            Stage::Text => None,
            Stage::Align => Some(Stage::Text),
            Stage::SingleSft => Some(Stage::Align),
            Stage::MultiSft => Some(Stage::SingleSft),
        }
    }

    /// Components updated by this stage. The encoder is never trained.
    pub fn trainable(self) -> BTreeSet<Component> {
        match self {
            Stage::Text => [Component::Llm].into(),
            Stage::Align => [Component::Projector].into(),
            Stage::SingleSft | Stage::MultiSft => [Component::Projector, Component::Llm].into(),
        }
    }

    /// SFT stages learn from responses only; the others from every text
    /// token.
    pub fn response_only(self) -> bool {
        matches!(self, Stage::SingleSft | Stage::MultiSft)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Encoder,
    Projector,
    Llm,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Encoder, Component::Projector, Component::Llm];

    /// Owner of a parameter name.
    pub fn of(name: &str) -> Self {
        if name.starts_with("encoder.") {
            Component::Encoder
        } else if name.starts_with("projector.") {
            Component::Projector
        } else {
            Component::Llm
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSource {
    pub name: String,
    pub task: TaskKind,
    pub weight: f64,
}

/// Named sources with relative sampling weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub sources: Vec<MixtureSource>,
}

impl MixtureSpec {
    pub fn single(name: &str, task: TaskKind) -> Self {
        Self {
            sources: vec![MixtureSource {
                name: name.into(),
                task,
                weight: 1.0,
            }],
        }
    }

    /// Single-image SFT: questions plus caption replay at 3:1.
    pub fn single_sft() -> Self {
        Self {
            sources: vec![
                MixtureSource {
                    name: "single_qa".into(),
                    task: TaskKind::ColorQa,
                    weight: 3.0,
                },
                MixtureSource {
                    name: "caption_replay".into(),
                    task: TaskKind::Caption,
                    weight: 1.0,
                },
            ],
        }
    }

    /// Multi-image SFT composition: multi-image, video QA, video caption,
    /// single-image replay, text replay and sub-image data at
    /// 200:200:50:200:50:50.
    pub fn multi_sft() -> Self {
        let s = |name: &str, task, weight| MixtureSource {
            name: name.into(),
            task,
            weight,
        };
        Self {
            sources: vec![
                s("multi_image", TaskKind::Icl, 200.0),
                s("video_qa", TaskKind::Needle, 200.0),
                s("video_caption", TaskKind::VideoCaption, 50.0),
                s("single_replay", TaskKind::SingleReplay, 200.0),
                s("text_replay", TaskKind::Text, 50.0),
                s("subimage", TaskKind::Patched, 50.0),
            ],
        }
    }

    /// Default mixture of each stage.
    pub fn for_stage(stage: Stage) -> Self {
        match stage {
            Stage::Text => Self::single("text", TaskKind::Text),
            Stage::Align => Self::single("caption", TaskKind::Caption),
            Stage::SingleSft => Self::single_sft(),
            Stage::MultiSft => Self::multi_sft(),
        }
    }

    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.sources.iter().map(|s| s.weight).sum();
        self.sources.iter().map(|s| s.weight / total).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::InvalidConfig(vec!["mixture has no sources".into()]));
        }
        let bad: Vec<String> = self
            .sources
            .iter()
            .filter(|s| !(s.weight > 0.0 && s.weight.is_finite()))
            .map(|s| format!("source {} has non-positive weight {}", s.name, s.weight))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad))
        }
    }
}

/// Source index of each of `n` i.i.d. draws proportional to the weights.
pub fn sample_sources(spec: &MixtureSpec, n: usize, seed: u64) -> Result<Vec<usize>> {
    spec.validate()?;
    let dist = WeightedIndex::new(spec.sources.iter().map(|s| s.weight))
        .map_err(|e| Error::InvalidConfig(vec![e.to_string()]))?;
    let mut r = rng::seeded(seed);
    Ok((0..n).map(|_| dist.sample(&mut r)).collect())
}

/// `n` records drawn from `pools` (one per source): a source by weight,
/// then a uniform record from it.
pub fn sample_mixture<T: Clone>(spec: &MixtureSpec, pools: &[Vec<T>], n: usize, seed: u64) -> Result<Vec<T>> {
    if pools.len() != spec.sources.len() {
        return Err(Error::Precondition(format!(
            "{} pools for {} sources",
            pools.len(),
            spec.sources.len()
        )));
    }
    if let Some(i) = pools.iter().position(Vec::is_empty) {
        return Err(Error::Precondition(format!("source {} is empty", spec.sources[i].name)));
    }
    let picks = sample_sources(spec, n, seed)?;
    let mut r = rng::seeded(rng::derive_seed(seed, 1));
    Ok(picks
        .into_iter()
        .map(|s| pools[s][rng::below(&mut r, pools[s].len())].clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: Stage,
    pub trainable: BTreeSet<Component>,
    pub mixture: MixtureSpec,
    pub items: usize,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub epochs: usize,
    pub pack_len: usize,
    pub optimizer: OptimizerConfig,
    /// Weight of the MoE balance penalty; 0 disables it.
    pub aux_loss_weight: f64,
}

impl StageConfig {
    /// Full-scale hyperparameters: peak lr 1e-5, warmup 3%, one epoch.
    pub fn new(stage: Stage) -> Self {
        Self {
            stage,
            trainable: stage.trainable(),
            mixture: MixtureSpec::for_stage(stage),
            items: 200,
            peak_lr: REFERENCE_PEAK_LR,
            warmup_fraction: REFERENCE_WARMUP_FRACTION,
            epochs: 1,
            pack_len: DESK_PACK_LEN,
            optimizer: OptimizerConfig::default(),
            aux_loss_weight: 0.0,
        }
    }

    /// CPU-scale variant: a larger step size, short packs and enough items
    /// for a few thousand optimizer steps in total.
    pub fn desk(stage: Stage) -> Self {
        let (items, pack_len) = match stage {
            Stage::Text => (400, 64),
            Stage::Align => (2000, 64),
            Stage::SingleSft => (6000, 64),
            Stage::MultiSft => (10_000, 160),
        };
        Self {
            items,
            pack_len,
            peak_lr: 1e-3,
            aux_loss_weight: 0.01,
            ..Self::new(stage)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.trainable != self.stage.trainable() {
            errs.push(format!(
                "stage {} trains {:?}, configured {:?}",
                self.stage.name(),
                self.stage.trainable(),
                self.trainable
            ));
        }
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) {
            errs.push(format!("peak_lr {} must be finite and non-negative", self.peak_lr));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            errs.push(format!("warmup_fraction {} outside [0, 1]", self.warmup_fraction));
        }
        if self.epochs == 0 || self.pack_len == 0 {
            errs.push("epochs and pack_len must be positive".into());
        }
        if let Err(Error::InvalidConfig(e)) = self.mixture.validate() {
            errs.extend(e);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.trainable.contains(&Component::of(name))
    }
}

/// Trainable flag of every parameter name under `stage`.
pub fn freeze_mask<'a>(stage: &StageConfig, names: impl IntoIterator<Item = &'a str>) -> Vec<(String, bool)> {
    names
        .into_iter()
        .map(|n| (n.to_string(), stage.is_trainable(n)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_freeze_sets() {
        use Component::*;
        assert_eq!(Stage::Align.trainable(), [Projector].into());
        assert_eq!(Stage::SingleSft.trainable(), [Projector, Llm].into());
        assert_eq!(Stage::MultiSft.trainable(), [Projector, Llm].into());
        assert_eq!(Stage::Text.trainable(), [Llm].into());
        let cfg = StageConfig::new(Stage::Align);
        let mask = freeze_mask(&cfg, ["encoder.patch_w", "projector.w1", "embed", "layers.0.ssm.a_log"]);
        let flags: Vec<bool> = mask.iter().map(|(_, f)| *f).collect();
        assert_eq!(flags, vec![false, true, false, false]);
    }

    #[test]
    fn mismatched_trainable_set_is_rejected() {
        let mut cfg = StageConfig::new(Stage::Align);
        cfg.trainable.insert(Component::Encoder);
        assert!(cfg.validate().is_err());
        StageConfig::desk(Stage::MultiSft).validate().unwrap();
    }

    #[test]
    fn mixture_edge_cases() {
        assert!(sample_sources(&MixtureSpec::multi_sft(), 0, 1).unwrap().is_empty());
        let one = MixtureSpec::single("t", TaskKind::Text);
        assert!(sample_sources(&one, 100, 2).unwrap().iter().all(|&s| s == 0));
        let pools: Vec<Vec<u8>> = vec![vec![]];
        assert!(sample_mixture(&one, &pools, 3, 0).is_err());
    }
}
