//! Toy vocabulary: special tokens, 256 byte-fallback tokens and a fixed word
//! list, padded with unused entries up to the model's vocabulary size.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const EOS: usize = 0;
pub const IMG_OPEN: usize = 1;
pub const IMG_CLOSE: usize = 2;
pub const IMG_TOKEN: usize = 3;
pub const VID_OPEN: usize = 4;
pub const VID_CLOSE: usize = 5;
pub const FRAME_SEP: usize = 6;
pub const NEWLINE: usize = 7;
pub const BYTE_BASE: usize = 8;
pub const WORD_BASE: usize = BYTE_BASE + 256;
pub const DEFAULT_SIZE: usize = 512;

pub const SPECIALS: [&str; 8] = ["<eos>", "<img>", "</img>", "<img_token>", "<vid>", "</vid>", "<t>", "\\n"];

#[rustfmt::skip]
const WORDS: &[&str] = &[
    ".", ",", "?", "!", ":", ";", "'", "\"", "-", "(", ")", "/", "*", "+", "=", "#",
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    "red", "green", "blue", "yellow", "gray", "white", "black", "orange", "purple", "pink", "brown",
    "circle", "square", "triangle", "star", "shape", "shapes", "color", "colors", "colored",
    "yes", "no", "true", "false", "same", "different",
    "a", "A", "an", "the", "The", "this", "This", "that", "these", "is", "Is", "are", "Are", "was",
    "be", "it", "It", "what", "What", "which", "Which", "where", "Where", "how", "How", "who",
    "of", "in", "on", "at", "to", "and", "or", "with", "for", "from", "by", "as", "not", "do",
    "does", "Does", "there", "There", "they", "They", "them", "one", "two", "three", "four",
    "five", "first", "second", "third", "last", "frame", "frames", "image", "images", "picture",
    "pictures", "video", "videos", "object", "objects", "background", "marked", "needle",
    "haystack", "pair", "pairs", "match", "matches", "relation", "answer", "Answer", "question",
    "Question", "Describe", "describe", "show", "shows", "shown", "contains", "cat", "dog", "bird",
    "car", "tree", "house", "sun", "moon", "sky", "plain", "small", "large", "big", "left", "right",
    "top", "bottom", "middle", "center", "above", "below", "next", "before", "after", "between",
    "all", "each", "every", "some", "any", "only", "both", "again", "Repeat", "repeat", "Count",
    "count", "Name", "name", "say", "Say", "hello", "Hello", "world", "User", "Assistant", "ok",
    "please", "tell", "me", "you", "I", "we", "my", "your", "here", "see", "look", "find", "Find",
    "many", "much", "more", "less", "than", "odd", "even", "number", "letter", "word", "words",
    "sentence", "text", "story", "example", "sub", "main", "grid", "row", "rows", "column",
    "time", "scene", "can", "has", "have", "had", "Tell", "Give", "give", "list", "up", "down",
];

/// Token table with lookup in both directions.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new(DEFAULT_SIZE).expect("default size fits the word list")
    }
}

impl Vocabulary {
    pub fn new(size: usize) -> Result<Self> {
        let min = WORD_BASE + WORDS.len();
        if size < min {
            return Err(Error::InvalidConfig(vec![format!(
                "vocabulary size {size} is below the {min} fixed entries"
            )]));
        }
        let mut symbols: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        symbols.extend((0..=255u8).map(|b| format!("<0x{b:02X}>")));
        symbols.extend(WORDS.iter().map(|w| w.to_string()));
        let n_fixed = symbols.len();
        symbols.extend((0..size - n_fixed).map(|i| format!("<unused_{i}>")));
        let index = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Self { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    /// Id of a word-list entry; panics on words outside the list.
    pub fn word(&self, w: &str) -> usize {
        match self.index.get(w) {
            Some(&id) if id >= WORD_BASE => id,
            _ => panic!("{w:?} is not in the word list"),
        }
    }

    pub fn is_special(id: usize) -> bool {
        id < BYTE_BASE
    }

    fn byte_of(id: usize) -> Option<u8> {
        (BYTE_BASE..WORD_BASE).contains(&id).then(|| (id - BYTE_BASE) as u8)
    }

    /// Splits on whitespace into alphanumeric runs and single other
    /// characters. Pieces outside the word list fall back to byte tokens.
    /// Line breaks map to the newline token.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut out = Vec::new();
        let push_piece = |piece: &str, out: &mut Vec<usize>| match self.index.get(piece) {
            Some(&id) if id >= WORD_BASE => out.push(id),
            _ => out.extend(piece.bytes().map(|b| BYTE_BASE + b as usize)),
        };
        let is_word = |c: char| c.is_alphanumeric() || c == '_';
        let mut chars = text.char_indices().peekable();
        while let Some((start, c)) = chars.next() {
            if c == '\n' {
                out.push(NEWLINE);
            } else if c.is_whitespace() {
            } else if is_word(c) {
                let mut end = start + c.len_utf8();
                while let Some(&(i, d)) = chars.peek() {
                    if !is_word(d) {
                        break;
                    }
                    end = i + d.len_utf8();
                    chars.next();
                }
                push_piece(&text[start..end], &mut out);
            } else {
                push_piece(&text[start..start + c.len_utf8()], &mut out);
            }
        }
        out
    }

    /// Canonical text for `ids`: a space before each piece that starts with
    /// a word character, except at line starts. Consecutive byte tokens form
    /// one piece. Special tokens other than newline render as their symbols.
    pub fn decode(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        let mut bytes: Vec<u8> = Vec::new();
        let flush = |bytes: &mut Vec<u8>, out: &mut String| {
            if !bytes.is_empty() {
                append_piece(out, &self.byte_piece(bytes));
                bytes.clear();
            }
        };
        for &id in ids {
            if let Some(b) = Self::byte_of(id) {
                bytes.push(b);
                continue;
            }
            flush(&mut bytes, &mut out);
            match id {
                NEWLINE => out.push('\n'),
                _ => append_piece(&mut out, self.symbol(id).unwrap_or("<?>")),
            }
        }
        flush(&mut bytes, &mut out);
        out
    }

    /// Text of a byte-token run, with letters of any embedded vocabulary
    /// word spaced apart so that re-encoding keeps them as bytes.
    fn byte_piece(&self, bytes: &[u8]) -> String {
        let text = String::from_utf8_lossy(bytes);
        let is_word = |c: char| c.is_alphanumeric() || c == '_';
        let mut out = String::new();
        let mut word = String::new();
        let flush = |word: &mut String, out: &mut String| {
            if self.index.get(word.as_str()).is_some_and(|&id| id >= WORD_BASE) {
                let spaced: Vec<String> = word.chars().map(String::from).collect();
                out.push_str(&spaced.join(" "));
            } else {
                out.push_str(word);
            }
            word.clear();
        };
        for c in text.chars() {
            if is_word(c) {
                word.push(c);
            } else {
                flush(&mut word, &mut out);
                out.push(c);
            }
        }
        flush(&mut word, &mut out);
        out
    }

    /// Space-separated symbols with runs of `<img_token>` written as
    /// `<img_token>*n`; the fixture format for rendered streams.
    pub fn dump(&self, ids: &[usize]) -> String {
        let mut parts = Vec::new();
        let mut i = 0;
        while i < ids.len() {
            if ids[i] == IMG_TOKEN {
                let run = ids[i..].iter().take_while(|&&t| t == IMG_TOKEN).count();
                parts.push(format!("<img_token>*{run}"));
                i += run;
            } else {
                parts.push(self.symbol(ids[i]).unwrap_or("<?>").to_string());
                i += 1;
            }
        }
        parts.join(" ")
    }

    /// Inverse of [`Vocabulary::dump`].
    pub fn undump(&self, s: &str) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for part in s.split_whitespace() {
            if let Some(n) = part.strip_prefix("<img_token>*") {
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::Protocol(format!("bad slot run {part:?}")))?;
                out.extend(std::iter::repeat_n(IMG_TOKEN, n));
            } else {
                out.push(self.id(part).ok_or_else(|| Error::Protocol(format!("unknown symbol {part:?}")))?);
            }
        }
        Ok(out)
    }
}

fn append_piece(out: &mut String, piece: &str) {
    let starts_word = piece.chars().next().is_some_and(|c| c.is_alphanumeric() || c == '_');
    if starts_word && !out.is_empty() && !out.ends_with('\n') {
        out.push(' ');
    }
    out.push_str(piece);
}
