//! Multimodal sequence assembly for the four input shapes and the inverse
//! parser.
//!
//! An image renders as `<img>` followed by one `<img_token>` per slot and
//! `</img>`. Single and multi-image inputs put a newline after each image.
//! Video wraps frames in `<vid>`/`</vid>` with `<t>` between frames. Patched
//! inputs render the overview image, a newline, then the tiles row by row
//! with a newline after every row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::vocab::*;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Text(Vec<usize>),
    /// `len` placeholder slots for image `index` of the input's image list.
    Image { index: usize, len: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultimodalSequence {
    pub segments: Vec<Segment>,
}

impl MultimodalSequence {
    pub fn push_text(&mut self, ids: impl IntoIterator<Item = usize>) {
        let ids: Vec<usize> = ids.into_iter().collect();
        if ids.is_empty() {
            return;
        }
        match self.segments.last_mut() {
            Some(Segment::Text(t)) => t.extend(ids),
            _ => self.segments.push(Segment::Text(ids)),
        }
    }

    pub fn push_token(&mut self, id: usize) {
        self.push_text([id]);
    }

    /// Appends a bracketed image rendering.
    pub fn push_image(&mut self, index: usize, len: usize) {
        self.push_token(IMG_OPEN);
        self.segments.push(Segment::Image { index, len });
        self.push_token(IMG_CLOSE);
    }

    pub fn len(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Text(t) => t.len(),
                Segment::Image { len, .. } => *len,
            })
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_images(&self) -> usize {
        self.segments.iter().filter(|s| matches!(s, Segment::Image { .. })).count()
    }

    /// Token stream with `<img_token>` at every slot.
    pub fn render(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        for s in &self.segments {
            match s {
                Segment::Text(t) => out.extend_from_slice(t),
                Segment::Image { len, .. } => out.extend(std::iter::repeat_n(IMG_TOKEN, *len)),
            }
        }
        out
    }

    /// Stream positions of every slot, grouped by image in stream order,
    /// paired with the image index.
    pub fn image_positions(&self) -> Vec<(usize, std::ops::Range<usize>)> {
        let mut pos = 0;
        let mut out = Vec::new();
        for s in &self.segments {
            match s {
                Segment::Text(t) => pos += t.len(),
                Segment::Image { index, len } => {
                    out.push((*index, pos..pos + len));
                    pos += len;
                }
            }
        }
        out
    }

    /// Recovers segments from a rendered stream. Runs of `<img_token>`
    /// become images numbered in stream order.
    pub fn parse(stream: &[usize]) -> Result<Self> {
        check_brackets(stream)?;
        let mut seq = Self::default();
        let mut i = 0;
        let mut next_image = 0;
        while i < stream.len() {
            if stream[i] == IMG_TOKEN {
                let run = stream[i..].iter().take_while(|&&t| t == IMG_TOKEN).count();
                seq.segments.push(Segment::Image {
                    index: next_image,
                    len: run,
                });
                next_image += 1;
                i += run;
            } else {
                seq.push_token(stream[i]);
                i += 1;
            }
        }
        Ok(seq)
    }
}

/// Linear scan: `<img>` holds only slots (at least one), `<vid>` holds
/// images separated by `<t>`, nothing nests otherwise, and every bracket is
/// closed.
pub fn check_brackets(stream: &[usize]) -> Result<()> {
    let err = |pos: usize, msg: &str| Err(Error::Protocol(format!("token {pos}: {msg}")));
    let mut in_img = false;
    let mut slots = 0;
    let mut in_vid = false;
    // Within a video: whether the last element was a closed frame.
    let mut after_frame = false;
    for (pos, &t) in stream.iter().enumerate() {
        if in_img && t != IMG_TOKEN && t != IMG_CLOSE {
            return err(pos, "non-slot token inside <img>");
        }
        match t {
            IMG_OPEN => {
                if in_vid && after_frame {
                    return err(pos, "frames must be separated by <t>");
                }
                in_img = true;
                slots = 0;
            }
            IMG_TOKEN if !in_img => return err(pos, "<img_token> outside <img>"),
            IMG_TOKEN => slots += 1,
            IMG_CLOSE if !in_img => return err(pos, "unmatched </img>"),
            IMG_CLOSE => {
                if slots == 0 {
                    return err(pos, "empty image");
                }
                in_img = false;
                after_frame = true;
            }
            VID_OPEN if in_vid => return err(pos, "nested <vid>"),
            VID_OPEN => {
                in_vid = true;
                after_frame = false;
            }
            VID_CLOSE if !in_vid => return err(pos, "unmatched </vid>"),
            VID_CLOSE => {
                if !after_frame {
                    return err(pos, "video must end with a frame");
                }
                in_vid = false;
            }
            FRAME_SEP if !in_vid || !after_frame => return err(pos, "<t> must follow a frame inside <vid>"),
            FRAME_SEP => after_frame = false,
            _ if in_vid => return err(pos, "text inside <vid>"),
            _ => {}
        }
    }
    if in_img {
        return err(stream.len(), "unclosed <img>");
    }
    if in_vid {
        return err(stream.len(), "unclosed <vid>");
    }
    Ok(())
}

/// Assembles sequences with a fixed slot count per image.
#[derive(Debug, Clone)]
pub struct Protocol {
    pub vocab: Vocabulary,
    pub slots_per_image: usize,
}

impl Protocol {
    pub fn new(vocab: Vocabulary, slots_per_image: usize) -> Self {
        assert!(slots_per_image > 0, "images need at least one slot");
        Self { vocab, slots_per_image }
    }

    /// Rendered length of one bracketed image.
    pub fn image_len(&self) -> usize {
        self.slots_per_image + 2
    }

    /// `<img> slots </img> \n text`
    pub fn single(&self, text: &str) -> MultimodalSequence {
        self.multi(&[text]).expect("one text for one image")
    }

    /// One image per text: `<img> slots </img> \n text_i` for each i.
    pub fn multi(&self, texts: &[&str]) -> Result<MultimodalSequence> {
        if texts.is_empty() {
            return Err(Error::Protocol("multi-image input needs at least one image".into()));
        }
        let mut seq = MultimodalSequence::default();
        for (i, text) in texts.iter().enumerate() {
            seq.push_image(i, self.slots_per_image);
            seq.push_token(NEWLINE);
            seq.push_text(self.vocab.encode(text));
        }
        Ok(seq)
    }

    /// Interleaved images and texts given explicitly; `texts` must have one
    /// entry per image.
    pub fn multi_counted(&self, n_images: usize, texts: &[&str]) -> Result<MultimodalSequence> {
        if n_images != texts.len() {
            return Err(Error::Protocol(format!(
                "{n_images} images but {} interleaved texts",
                texts.len()
            )));
        }
        self.multi(texts)
    }

    /// `<vid> frame <t> frame … frame </vid> \n text`
    pub fn video(&self, n_frames: usize, text: &str) -> Result<MultimodalSequence> {
        if n_frames == 0 {
            return Err(Error::Protocol("video input needs at least one frame".into()));
        }
        let mut seq = MultimodalSequence::default();
        seq.push_token(VID_OPEN);
        for f in 0..n_frames {
            if f > 0 {
                seq.push_token(FRAME_SEP);
            }
            seq.push_image(f, self.slots_per_image);
        }
        seq.push_token(VID_CLOSE);
        seq.push_token(NEWLINE);
        seq.push_text(self.vocab.encode(text));
        Ok(seq)
    }

    /// Overview image, newline, then tiles in raster order with a newline
    /// after each row, then text. Image 0 is the overview; tiles follow.
    pub fn patched(&self, row_lengths: &[usize], text: &str) -> Result<MultimodalSequence> {
        if row_lengths.is_empty() || row_lengths.contains(&0) {
            return Err(Error::Protocol(format!("inconsistent row splits {row_lengths:?}")));
        }
        let mut seq = MultimodalSequence::default();
        seq.push_image(0, self.slots_per_image);
        seq.push_token(NEWLINE);
        let mut index = 1;
        for &n in row_lengths {
            for _ in 0..n {
                seq.push_image(index, self.slots_per_image);
                index += 1;
            }
            seq.push_token(NEWLINE);
        }
        seq.push_text(self.vocab.encode(text));
        Ok(seq)
    }

    /// Patched template for `n_tiles` tiles split into `row_lengths`.
    pub fn patched_checked(&self, n_tiles: usize, row_lengths: &[usize], text: &str) -> Result<MultimodalSequence> {
        if row_lengths.iter().sum::<usize>() != n_tiles {
            return Err(Error::Protocol(format!(
                "row splits {row_lengths:?} do not cover {n_tiles} tiles"
            )));
        }
        self.patched(row_lengths, text)
    }

    /// Plain text with no images.
    pub fn text(&self, text: &str) -> MultimodalSequence {
        let mut seq = MultimodalSequence::default();
        seq.push_text(self.vocab.encode(text));
        seq
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proto() -> Protocol {
        Protocol::new(Vocabulary::default(), 144)
    }

    #[test]
    fn single_length_and_empty_text() {
        let p = proto();
        assert_eq!(p.single("What is this?").len(), 144 + 2 + 1 + 4);
        let r = p.single("").render();
        assert_eq!(r.len(), 147);
        assert_eq!((r[0], r[145], r[146]), (IMG_OPEN, IMG_CLOSE, NEWLINE));
    }

    #[test]
    fn multi_with_one_image_equals_single() {
        let p = proto();
        assert_eq!(p.multi(&["Is it red?"]).unwrap(), p.single("Is it red?"));
        assert_eq!(p.multi(&["", "", ""]).unwrap().len(), 3 * 147);
        assert!(p.multi_counted(2, &["x"]).is_err());
    }

    #[test]
    fn video_separators_and_length() {
        let p = proto();
        for n in 1..6 {
            let s = p.video(n, "").unwrap();
            assert_eq!(s.len(), 2 + n * 146 + (n - 1) + 1);
            assert_eq!(s.render().iter().filter(|&&t| t == FRAME_SEP).count(), n - 1);
        }
        assert!(p.video(0, "").is_err());
    }

    #[test]
    fn patched_newlines() {
        let p = proto();
        let s = p.patched(&[3, 3], "").unwrap().render();
        assert_eq!(s.iter().filter(|&&t| t == NEWLINE).count(), 1 + 2);
        assert!(p.patched_checked(5, &[3, 3], "").is_err());
        assert!(p.patched(&[2, 0], "").is_err());
    }

    #[test]
    fn bracket_check_rejects_malformed_streams() {
        for bad in [
            vec![IMG_OPEN, IMG_TOKEN],
            vec![IMG_TOKEN],
            vec![IMG_OPEN, IMG_CLOSE],
            vec![IMG_OPEN, NEWLINE, IMG_TOKEN, IMG_CLOSE],
            vec![VID_OPEN, IMG_OPEN, IMG_TOKEN, IMG_CLOSE, IMG_OPEN, IMG_TOKEN, IMG_CLOSE, VID_CLOSE],
            vec![VID_OPEN, VID_CLOSE],
            vec![FRAME_SEP],
            vec![IMG_CLOSE],
        ] {
            assert!(check_brackets(&bad).is_err(), "{bad:?}");
        }
    }
}
