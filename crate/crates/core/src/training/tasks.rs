//! Self-labeling synthetic tasks over procedurally drawn shapes.
//!
//! Every example carries its images, the prompt in protocol form, the
//! response tokens and the exact answer derived from the generation
//! parameters.

use serde::{Deserialize, Serialize};

use crate::protocol::{MultimodalSequence, Protocol, Vocabulary};
use crate::rng::{self, Rng};
use crate::vision::synth::{colored_shape, gray_shape, Color, Shape, COLORS, SHAPES};
use crate::vision::{segment_image, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Text,
    Caption,
    ColorQa,
    ShapeQa,
    Needle,
    IclShape,
    IclColor,
    /// Matching with the relation drawn uniformly per example.
    Icl,
    VideoCaption,
    Patched,
    /// Single-image questions and captions at 3:1.
    SingleReplay,
}

/// Relation tested by an in-context matching instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    SameShape,
    SameColor,
}

#[derive(Debug, Clone)]
pub struct Example {
    pub kind: TaskKind,
    /// Identifier for diagnostics, unique within a generated corpus.
    pub id: u64,
    pub prompt: MultimodalSequence,
    pub images: Vec<Image>,
    pub response: Vec<usize>,
    /// Ground truth in words.
    pub answer: String,
    /// Closed answer set for constrained decoding.
    pub choices: Vec<String>,
}

impl Example {
    pub fn len(&self) -> usize {
        self.prompt.len() + self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub const COLOR_QUESTION: &str = "What color is this?";
pub const SHAPE_QUESTION: &str = "What shape is this?";
pub const NEEDLE_QUESTION: &str = "What color is the needle?";
pub const PATCHED_QUESTION: &str = "What color is there?";

/// Image geometry and slot count shared by all generators.
#[derive(Debug, Clone)]
pub struct SynthTaskSpec {
    pub proto: Protocol,
    pub image_side: usize,
}

impl SynthTaskSpec {
    pub fn new(image_side: usize, slots_per_image: usize) -> Self {
        Self {
            proto: Protocol::new(Vocabulary::default(), slots_per_image),
            image_side,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.proto.vocab
    }

    fn example(&self, kind: TaskKind, id: u64, prompt: MultimodalSequence, images: Vec<Image>, answer: &str, choices: &[&str]) -> Example {
        Example {
            kind,
            id,
            prompt,
            images,
            response: self.vocab().encode(answer),
            answer: answer.to_string(),
            choices: choices.iter().map(|c| c.to_string()).collect(),
        }
    }

    fn color_names() -> Vec<&'static str> {
        COLORS.iter().map(|c| c.name()).collect()
    }

    fn shape_names() -> Vec<&'static str> {
        SHAPES.iter().map(|s| s.name()).collect()
    }

    /// `<image> → "a <color> <shape>"`; the 12 labels are drawn uniformly.
    pub fn caption(&self, id: u64, rng: &mut Rng) -> Example {
        let (shape, color) = (SHAPES[rng::below(rng, 3)], COLORS[rng::below(rng, 4)]);
        let img = colored_shape(self.image_side, shape, color, rng);
        let answer = format!("a {} {}", color.name(), shape.name());
        self.example(TaskKind::Caption, id, self.proto.single(""), vec![img], &answer, &[])
    }

    /// Single-image question about the colour or the shape.
    pub fn single_qa(&self, id: u64, rng: &mut Rng) -> Example {
        let (shape, color) = (SHAPES[rng::below(rng, 3)], COLORS[rng::below(rng, 4)]);
        let img = colored_shape(self.image_side, shape, color, rng);
        if rng::below(rng, 2) == 0 {
            let prompt = self.proto.single(COLOR_QUESTION);
            self.example(TaskKind::ColorQa, id, prompt, vec![img], color.name(), &Self::color_names())
        } else {
            let prompt = self.proto.single(SHAPE_QUESTION);
            self.example(TaskKind::ShapeQa, id, prompt, vec![img], shape.name(), &Self::shape_names())
        }
    }

    /// Video of `n_frames` gray distractors with one coloured needle frame
    /// at `index`; the answer is the needle's colour.
    pub fn needle(&self, id: u64, n_frames: usize, index: usize, color: Color, rng: &mut Rng) -> Example {
        assert!(index < n_frames, "needle index {index} outside {n_frames} frames");
        let images = (0..n_frames)
            .map(|f| {
                if f == index {
                    colored_shape(self.image_side, SHAPES[rng::below(rng, 3)], color, rng)
                } else {
                    gray_shape(self.image_side, rng)
                }
            })
            .collect();
        let prompt = self.proto.video(n_frames, NEEDLE_QUESTION).expect("at least one frame");
        self.example(TaskKind::Needle, id, prompt, images, color.name(), &Self::color_names())
    }

    /// Video of gray distractors with one coloured frame; the response
    /// captions that frame, "a <color> <shape>".
    pub fn video_caption(&self, id: u64, max_frames: usize, rng: &mut Rng) -> Example {
        let n = 1 + rng::below(rng, max_frames);
        let index = rng::below(rng, n);
        let (shape, color) = (SHAPES[rng::below(rng, 3)], COLORS[rng::below(rng, 4)]);
        let images = (0..n)
            .map(|f| match f == index {
                true => colored_shape(self.image_side, shape, color, rng),
                false => gray_shape(self.image_side, rng),
            })
            .collect();
        let prompt = self.proto.video(n, "").expect("at least one frame");
        let answer = format!("a {} {}", color.name(), shape.name());
        self.example(TaskKind::VideoCaption, id, prompt, images, &answer, &[])
    }

    /// Needle instance with frame count, position and colour drawn uniformly.
    pub fn random_needle(&self, id: u64, max_frames: usize, rng: &mut Rng) -> Example {
        let n = 1 + rng::below(rng, max_frames);
        let index = rng::below(rng, n);
        let color = COLORS[rng::below(rng, 4)];
        self.needle(id, n, index, color, rng)
    }

    fn pair(&self, relation: Relation, holds: bool, rng: &mut Rng) -> [Image; 2] {
        let s1 = SHAPES[rng::below(rng, 3)];
        let c1 = COLORS[rng::below(rng, 4)];
        let other_shape = |rng: &mut Rng| loop {
            let s = SHAPES[rng::below(rng, 3)];
            if s != s1 {
                return s;
            }
        };
        let other_color = |rng: &mut Rng| loop {
            let c = COLORS[rng::below(rng, 4)];
            if c != c1 {
                return c;
            }
        };
        let (s2, c2): (Shape, Color) = match (relation, holds) {
            (Relation::SameShape, true) => (s1, COLORS[rng::below(rng, 4)]),
            (Relation::SameShape, false) => (other_shape(rng), COLORS[rng::below(rng, 4)]),
            (Relation::SameColor, true) => (SHAPES[rng::below(rng, 3)], c1),
            (Relation::SameColor, false) => (SHAPES[rng::below(rng, 3)], other_color(rng)),
        };
        [
            colored_shape(self.image_side, s1, c1, rng),
            colored_shape(self.image_side, s2, c2, rng),
        ]
    }

    /// `k` labeled support pairs and one query pair. Each pair renders as
    /// two images; the label ("yes" when the relation holds) follows the
    /// second. Support labels are balanced, with a coin flip for odd `k`.
    pub fn icl(&self, id: u64, relation: Relation, k: usize, rng: &mut Rng) -> Example {
        let mut labels: Vec<bool> = (0..k).map(|i| i % 2 == 0).collect();
        if k % 2 == 1 {
            labels[k - 1] = rng::below(rng, 2) == 0;
        }
        rng::shuffle(rng, &mut labels);
        let query = rng::below(rng, 2) == 0;
        let word = |b: bool| if b { "yes" } else { "no" };
        let mut images = Vec::with_capacity(2 * k + 2);
        let mut texts = Vec::with_capacity(2 * k + 2);
        for &l in &labels {
            images.extend(self.pair(relation, l, rng));
            texts.extend(["", word(l)]);
        }
        images.extend(self.pair(relation, query, rng));
        texts.extend(["", ""]);
        let prompt = self.proto.multi(&texts).expect("nonempty");
        let kind = match relation {
            Relation::SameShape => TaskKind::IclShape,
            Relation::SameColor => TaskKind::IclColor,
        };
        self.example(kind, id, prompt, images, word(query), &["yes", "no"])
    }

    /// A 2×2-tile canvas with one coloured shape among gray ones, rendered
    /// with the patched template; the answer is the colour.
    pub fn patched(&self, id: u64, rng: &mut Rng) -> Example {
        let side = self.image_side;
        let target = rng::below(rng, 4);
        let color = COLORS[rng::below(rng, 4)];
        let mut canvas = Image::filled(2 * side, 2 * side, [0.0; 3]);
        for tile in 0..4 {
            let img = if tile == target {
                colored_shape(side, SHAPES[rng::below(rng, 3)], color, rng)
            } else {
                gray_shape(side, rng)
            };
            canvas.paste((tile / 2) * side, (tile % 2) * side, &img);
        }
        let seg = segment_image(&canvas, side);
        let prompt = self.proto.patched(&seg.row_lengths(), PATCHED_QUESTION).expect("2x2 grid");
        let mut images = vec![seg.main];
        images.extend(seg.subimages);
        self.example(TaskKind::Patched, id, prompt, images, color.name(), &Self::color_names())
    }

    /// Pure-text instruction: repeat a short word list or count its length.
    pub fn text(&self, id: u64, rng: &mut Rng) -> Example {
        const WORDS: [&str; 8] = ["red", "green", "blue", "yellow", "circle", "square", "triangle", "cat"];
        const NUMBERS: [&str; 5] = ["one", "two", "three", "four", "five"];
        let n = 1 + rng::below(rng, 5);
        if rng::below(rng, 2) == 0 {
            let words: Vec<&str> = (0..n).map(|_| WORDS[rng::below(rng, WORDS.len())]).collect();
            let answer = words.join(" ");
            let prompt = self.proto.text(&format!("Repeat : {answer}"));
            self.example(TaskKind::Text, id, prompt, Vec::new(), &answer, &[])
        } else {
            let w = WORDS[rng::below(rng, WORDS.len())];
            let prompt = self.proto.text(&format!("Count : {}", vec![w; n].join(" ")));
            self.example(TaskKind::Text, id, prompt, Vec::new(), NUMBERS[n - 1], &NUMBERS)
        }
    }

    pub fn generate(&self, kind: TaskKind, id: u64, rng: &mut Rng) -> Example {
        match kind {
            TaskKind::Text => self.text(id, rng),
            TaskKind::Caption => self.caption(id, rng),
            TaskKind::ColorQa | TaskKind::ShapeQa => self.single_qa(id, rng),
            TaskKind::Needle => self.random_needle(id, 8, rng),
            TaskKind::IclShape => {
                let k = rng::below(rng, 5);
                self.icl(id, Relation::SameShape, k, rng)
            }
            TaskKind::IclColor => {
                let k = rng::below(rng, 5);
                self.icl(id, Relation::SameColor, k, rng)
            }
            TaskKind::Icl => {
                let relation = [Relation::SameShape, Relation::SameColor][rng::below(rng, 2)];
                let k = rng::below(rng, 5);
                self.icl(id, relation, k, rng)
            }
            TaskKind::VideoCaption => self.video_caption(id, 8, rng),
            TaskKind::Patched => self.patched(id, rng),
            TaskKind::SingleReplay => match rng::below(rng, 4) {
                0 => self.caption(id, rng),
                _ => self.single_qa(id, rng),
            },
        }
    }
}

/// `n` examples of one kind; example `i` draws from its own seed stream.
pub fn gen_task(spec: &SynthTaskSpec, kind: TaskKind, n: usize, seed: u64) -> Vec<Example> {
    (0..n as u64)
        .map(|i| spec.generate(kind, i, &mut rng::seeded(rng::derive_seed(seed, i))))
        .collect()
}

pub fn gen_caption_task(spec: &SynthTaskSpec, n: usize, seed: u64) -> Vec<Example> {
    gen_task(spec, TaskKind::Caption, n, seed)
}

pub fn gen_needle_task(spec: &SynthTaskSpec, n: usize, seed: u64) -> Vec<Example> {
    gen_task(spec, TaskKind::Needle, n, seed)
}

pub fn gen_icl_task(spec: &SynthTaskSpec, relation: Relation, n: usize, seed: u64) -> Vec<Example> {
    let kind = match relation {
        Relation::SameShape => TaskKind::IclShape,
        Relation::SameColor => TaskKind::IclColor,
    };
    gen_task(spec, kind, n, seed)
}
